#pragma once

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "besttime/temporal.h"

namespace besttime {

using ChannelId = std::string;

// Weekly (day-of-week, hour-of-day) event counts for one user on one channel,
// keyed in server time.
struct ActivityCounter {
  UserId user;
  ChannelId channel;
  std::array<std::uint64_t, kHoursPerWeek> buckets{};

  std::uint64_t count(int dow, int hour) const;
  // Saturates at the integer maximum. Throws kOutOfRange on a bad key.
  void add(int dow, int hour, std::uint64_t n = 1);
  std::uint64_t total() const;

  friend bool operator==(const ActivityCounter&, const ActivityCounter&) = default;
};

// Bucket-wise saturating sum; both sides must name the same user and channel.
ActivityCounter operator+(const ActivityCounter& a, const ActivityCounter& b);

// Buckets are keyed by the event's server time. The offset is validated
// (|offset| <= 14h) but does not move the bucket.
ActivityCounter record_activity(ActivityCounter counter, Timestamp event_time,
                                int user_utc_offset_minutes);

// Multiplies every bucket by `factor` in [0, 1] and floors. Off unless the
// deployment asks for it.
void apply_decay(ActivityCounter& counter, double factor);

// Raw score per slot: the bucket count at (day_of_week, hour of slot start).
// Slots spanning several hours sum every hour they touch, rolling into the
// next day of week past midnight.
std::map<int, RawScore> counter_signal(const ActivityCounter& counter,
                                       std::span<const TimeSlot> slots,
                                       int day_of_week);

struct ChannelActivityLevel {
  UserId user;
  ChannelId channel;
  double level = 0.0;  // [0, 1]
};

// Distinct active days within the trailing `window_days` days ending at
// `as_of` (inclusive), divided by window_days.
ChannelActivityLevel channel_activity_level(const UserId& user,
                                            const ChannelId& channel,
                                            std::span<const Timestamp> events,
                                            Timestamp as_of,
                                            int window_days = 28);

// --- Synthetic predictors -------------------------------------------------

struct Bump {
  double center_hour = 0.0;
  double amplitude = 1.0;
  double width_hours = 2.0;
};

// Shortest distance on the 24-hour circle, in [0, 12].
double circular_hour_distance(double a, double b);

// baseline + sum of Gaussian bumps evaluated at circular distance.
double bump_curve(std::span<const Bump> bumps, double baseline, double hour);

enum class ProviderKind { kCounter, kPredictor };

// A configured source for one metric. Counter providers read an
// ActivityCounter for `channel`; predictor providers evaluate a parameterized
// curve from `parameters`:
//   shape              constant | unimodal | bimodal | mixture
//   bumps              "center:amplitude:width,..." (1, 2 or 1-3 entries)
//   baseline           constant offset (default 0; the level for constant)
//   user_shift_hours   max per-user phase shift derived from the user hash
//   utc_offset_minutes offset used to read slots in local time
struct SignalProvider {
  MetricId metric;
  ProviderKind kind = ProviderKind::kPredictor;
  ChannelId channel;
  std::map<std::string, std::string> parameters;
};

// Deterministic in (parameters, user id, slot local hour). Throws
// kConfiguration on unknown or malformed parameters.
std::map<int, RawScore> synthetic_predictor_signal(
    const SignalProvider& provider, const UserId& user,
    std::span<const TimeSlot> slots);

// --- Feature extraction ---------------------------------------------------

struct LocalTimeFeatures {
  int day_of_week = 0;
  int hour_of_day = 0;
  bool is_holiday = false;
  int utc_offset_minutes = 0;
};

inline constexpr int kMaxUtcOffsetMinutes = 14 * 60;

// Throws kInvalidArgument when |offset| exceeds 14 hours.
LocalTimeFeatures local_time_features(
    const TimeSlot& slot, int user_utc_offset_minutes,
    const std::set<std::chrono::sys_days>& holidays = {});

// Closed range of hour offsets relative to the slot hour, e.g. {-4, 0}.
struct WindowSpec {
  int from_hours = 0;
  int to_hours = 0;

  friend auto operator<=>(const WindowSpec&, const WindowSpec&) = default;
};

struct WindowedActivityFeatures {
  UserId user;
  TimeSlot slot;
  std::map<WindowSpec, double> window_sums;
  std::array<double, kHoursPerDay> weekly_aggregate{};
};

// Windows wrap across day (and week) boundaries. Throws kInvalidArgument on an
// empty window list or a window with from > to.
WindowedActivityFeatures windowed_activity_features(
    const ActivityCounter& counter, const TimeSlot& slot,
    std::span<const WindowSpec> windows);

}  // namespace besttime
