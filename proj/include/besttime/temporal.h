#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace besttime {

// Integer seconds in the server-site timezone.
using Timestamp = std::int64_t;
using Seconds = std::int64_t;

using UserId = std::string;
using MetricId = std::string;
using UseCaseId = std::string;

inline constexpr Seconds kSecondsPerHour = 3600;
inline constexpr Seconds kSecondsPerDay = 86400;
inline constexpr int kHoursPerDay = 24;
inline constexpr int kDaysPerWeek = 7;
inline constexpr int kHoursPerWeek = kHoursPerDay * kDaysPerWeek;

// Day of week with 0 = Sunday (1970-01-01 was a Thursday).
int day_of_week(Timestamp t);
int hour_of_day(Timestamp t);
// Start of the server day containing t.
Timestamp day_start(Timestamp t);

struct TimeSlot {
  int index = 0;
  Timestamp start = 0;
  Seconds length = kSecondsPerHour;

  Timestamp end() const { return start + length; }
  bool contains(Timestamp t) const { return t >= start && t < end(); }

  friend auto operator<=>(const TimeSlot&, const TimeSlot&) = default;
};

struct RawScore {
  double value = 0.0;
};

class NormalizedScore {
 public:
  // Throws kInvalidArgument outside [0, 1] (NaN included).
  explicit NormalizedScore(double value);

  double value() const { return value_; }

  friend auto operator<=>(const NormalizedScore&,
                          const NormalizedScore&) = default;

 private:
  double value_;
};

struct MetricBounds {
  MetricId metric;
  double min = 0.0;
  double max = 0.0;
  // Free-form description of the window the bounds were computed over,
  // e.g. "2024-01-01..2024-01-28".
  std::string provenance;

  // Throws kInvalidArgument when max < min or either bound is not finite.
  void validate() const;
};

// Global min/max over every supplied raw value.
MetricBounds compute_bounds(const MetricId& metric,
                            std::span<const double> raw_values,
                            std::string provenance = {});

struct SlotScore {
  int slot = 0;
  double score = 0.0;

  friend bool operator==(const SlotScore&, const SlotScore&) = default;
};

// Per (user, metric) mapping slot index -> normalized score. Immutable after
// construction; entries are kept sorted by slot index.
class TemporalActivityMap {
 public:
  TemporalActivityMap() = default;
  // Entries may arrive in any order; duplicates or scores outside [0, 1] are
  // rejected with kInvalidArgument.
  TemporalActivityMap(UserId user, MetricId metric,
                      std::vector<SlotScore> entries);

  const UserId& user() const { return user_; }
  const MetricId& metric() const { return metric_; }
  std::span<const SlotScore> entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  std::optional<double> score(int slot) const;
  bool contains(int slot) const { return score(slot).has_value(); }

  // True when every entry's slot is one of `candidates`.
  bool within(std::span<const TimeSlot> candidates) const;

  friend bool operator==(const TemporalActivityMap&,
                         const TemporalActivityMap&) = default;

 private:
  UserId user_;
  MetricId metric_;
  std::vector<SlotScore> entries_;
};

// Contiguous slots of length `slot_length` tiling [t_start, t_end). A tail
// shorter than slot_length is dropped.
std::vector<TimeSlot> partition_range(Timestamp t_start, Timestamp t_end,
                                      Seconds slot_length);

// Min-max normalization, clamped to [0, 1]. Degenerate bounds (max == min)
// map every input to 0.5.
NormalizedScore normalize(RawScore raw, const MetricBounds& bounds);

TemporalActivityMap build_activity_map(const UserId& user,
                                       const MetricId& metric,
                                       const std::map<int, RawScore>& raw_scores,
                                       const MetricBounds& bounds);

// Every candidate slot at the same score; used when no signal exists.
TemporalActivityMap uniform_map(const UserId& user, const MetricId& metric,
                                std::span<const TimeSlot> candidates,
                                double score = 0.5);

}  // namespace besttime
