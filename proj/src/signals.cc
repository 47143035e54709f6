#include "besttime/signals.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>
#include <string_view>

#include "besttime/error.h"
#include "besttime/random.h"

namespace besttime {
namespace {

void check_bucket(int dow, int hour) {
  if (dow < 0 || dow >= kDaysPerWeek || hour < 0 || hour >= kHoursPerDay) {
    throw Error(ErrorCode::kOutOfRange,
                fmt::format("counter bucket ({}, {}) out of range", dow, hour));
  }
}

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  const auto cap = std::numeric_limits<std::uint64_t>::max();
  return a > cap - b ? cap : a + b;
}

void check_offset(int minutes) {
  if (minutes < -kMaxUtcOffsetMinutes || minutes > kMaxUtcOffsetMinutes) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("utc offset {} minutes outside [-14h, +14h]", minutes));
  }
}

int wrap(int value, int modulus) { return ((value % modulus) + modulus) % modulus; }

double parse_double(std::string_view key, std::string_view text) {
  double out = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end || !std::isfinite(out)) {
    throw Error(ErrorCode::kConfiguration,
                fmt::format("predictor parameter '{}': bad number '{}'", key, text));
  }
  return out;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t begin = 0;
  while (true) {
    const auto pos = text.find(sep, begin);
    parts.push_back(text.substr(begin, pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return parts;
}

struct PredictorCurve {
  std::vector<Bump> bumps;
  double baseline = 0.0;
  double user_shift_hours = 0.0;
  int utc_offset_minutes = 0;
};

PredictorCurve parse_predictor(const SignalProvider& provider) {
  PredictorCurve curve;
  std::string shape;
  for (const auto& [key, value] : provider.parameters) {
    if (key == "shape") {
      shape = value;
    } else if (key == "bumps") {
      if (value.empty()) continue;
      for (auto item : split(value, ',')) {
        auto fields = split(item, ':');
        if (fields.size() != 3) {
          throw Error(ErrorCode::kConfiguration,
                      fmt::format("bump '{}' must be center:amplitude:width", item));
        }
        Bump bump{parse_double(key, fields[0]), parse_double(key, fields[1]),
                  parse_double(key, fields[2])};
        if (bump.width_hours <= 0.0) {
          throw Error(ErrorCode::kConfiguration,
                      fmt::format("bump '{}' needs a positive width", item));
        }
        curve.bumps.push_back(bump);
      }
    } else if (key == "baseline") {
      curve.baseline = parse_double(key, value);
    } else if (key == "user_shift_hours") {
      curve.user_shift_hours = parse_double(key, value);
    } else if (key == "utc_offset_minutes") {
      const double minutes = parse_double(key, value);
      curve.utc_offset_minutes = static_cast<int>(minutes);
      if (minutes != curve.utc_offset_minutes ||
          std::abs(curve.utc_offset_minutes) > kMaxUtcOffsetMinutes) {
        throw Error(ErrorCode::kConfiguration,
                    fmt::format("utc_offset_minutes '{}' invalid", value));
      }
    } else {
      throw Error(ErrorCode::kConfiguration,
                  fmt::format("unknown predictor parameter '{}' for metric '{}'",
                              key, provider.metric));
    }
  }
  const std::size_t n = curve.bumps.size();
  const bool ok = (shape == "constant" && n == 0) ||
                  (shape == "unimodal" && n == 1) ||
                  (shape == "bimodal" && n == 2) ||
                  (shape == "mixture" && n >= 1 && n <= 3);
  if (!ok) {
    throw Error(ErrorCode::kConfiguration,
                fmt::format("predictor '{}': shape '{}' with {} bumps",
                            provider.metric, shape, n));
  }
  return curve;
}

}  // namespace

std::uint64_t ActivityCounter::count(int dow, int hour) const {
  check_bucket(dow, hour);
  return buckets[static_cast<std::size_t>(dow * kHoursPerDay + hour)];
}

void ActivityCounter::add(int dow, int hour, std::uint64_t n) {
  check_bucket(dow, hour);
  auto& bucket = buckets[static_cast<std::size_t>(dow * kHoursPerDay + hour)];
  bucket = saturating_add(bucket, n);
}

std::uint64_t ActivityCounter::total() const {
  std::uint64_t sum = 0;
  for (auto b : buckets) sum = saturating_add(sum, b);
  return sum;
}

ActivityCounter operator+(const ActivityCounter& a, const ActivityCounter& b) {
  if (a.user != b.user || a.channel != b.channel) {
    throw Error(ErrorCode::kInvalidArgument,
                "cannot add counters of different users or channels");
  }
  ActivityCounter sum = a;
  for (std::size_t i = 0; i < sum.buckets.size(); ++i) {
    sum.buckets[i] = saturating_add(sum.buckets[i], b.buckets[i]);
  }
  return sum;
}

ActivityCounter record_activity(ActivityCounter counter, Timestamp event_time,
                                int user_utc_offset_minutes) {
  check_offset(user_utc_offset_minutes);
  counter.add(day_of_week(event_time), hour_of_day(event_time));
  return counter;
}

void apply_decay(ActivityCounter& counter, double factor) {
  if (!(factor >= 0.0 && factor <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("decay factor {} outside [0, 1]", factor));
  }
  for (auto& b : counter.buckets) {
    b = static_cast<std::uint64_t>(std::floor(static_cast<double>(b) * factor));
  }
}

std::map<int, RawScore> counter_signal(const ActivityCounter& counter,
                                       std::span<const TimeSlot> slots,
                                       int day_of_week) {
  check_bucket(day_of_week, 0);
  std::map<int, RawScore> out;
  for (const auto& slot : slots) {
    const int first_hour = hour_of_day(slot.start);
    // Hours touched by [start, start + length).
    const Seconds offset_in_hour = slot.start - day_start(slot.start) -
                                   static_cast<Seconds>(first_hour) * kSecondsPerHour;
    const auto hours = static_cast<int>(
        (offset_in_hour + slot.length + kSecondsPerHour - 1) / kSecondsPerHour);
    double sum = 0.0;
    for (int h = 0; h < hours; ++h) {
      const int absolute = first_hour + h;
      const int dow = (day_of_week + absolute / kHoursPerDay) % kDaysPerWeek;
      sum += static_cast<double>(counter.count(dow, absolute % kHoursPerDay));
    }
    out[slot.index] = RawScore{sum};
  }
  return out;
}

ChannelActivityLevel channel_activity_level(const UserId& user,
                                            const ChannelId& channel,
                                            std::span<const Timestamp> events,
                                            Timestamp as_of, int window_days) {
  if (window_days <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "activity window must be positive");
  }
  const Timestamp last_day = day_start(as_of);
  const Timestamp first_day = last_day - (window_days - 1) * kSecondsPerDay;
  std::set<Timestamp> active_days;
  for (auto t : events) {
    const Timestamp d = day_start(t);
    if (d >= first_day && d <= last_day) active_days.insert(d);
  }
  return {user, channel,
          static_cast<double>(active_days.size()) / static_cast<double>(window_days)};
}

double circular_hour_distance(double a, double b) {
  double d = std::fmod(std::abs(a - b), 24.0);
  return d > 12.0 ? 24.0 - d : d;
}

double bump_curve(std::span<const Bump> bumps, double baseline, double hour) {
  double value = baseline;
  for (const auto& bump : bumps) {
    const double d = circular_hour_distance(hour, bump.center_hour);
    value += bump.amplitude *
             std::exp(-(d * d) / (2.0 * bump.width_hours * bump.width_hours));
  }
  return value;
}

std::map<int, RawScore> synthetic_predictor_signal(
    const SignalProvider& provider, const UserId& user,
    std::span<const TimeSlot> slots) {
  if (provider.kind != ProviderKind::kPredictor) {
    throw Error(ErrorCode::kConfiguration,
                fmt::format("provider '{}' is not a predictor", provider.metric));
  }
  const PredictorCurve curve = parse_predictor(provider);
  const std::uint64_t h = stable_hash(user);
  const double shift =
      curve.user_shift_hours *
      (static_cast<double>(h % 20001) / 10000.0 - 1.0);
  std::map<int, RawScore> out;
  for (const auto& slot : slots) {
    const Timestamp local = slot.start + curve.utc_offset_minutes * 60LL;
    const double local_hour =
        static_cast<double>(local - day_start(local)) / kSecondsPerHour;
    out[slot.index] = RawScore{bump_curve(curve.bumps, curve.baseline, local_hour - shift)};
  }
  return out;
}

LocalTimeFeatures local_time_features(
    const TimeSlot& slot, int user_utc_offset_minutes,
    const std::set<std::chrono::sys_days>& holidays) {
  check_offset(user_utc_offset_minutes);
  const Timestamp local = slot.start + user_utc_offset_minutes * 60LL;
  const std::chrono::sys_days date{
      std::chrono::days{day_start(local) / kSecondsPerDay}};
  return {day_of_week(local), hour_of_day(local), holidays.contains(date),
          user_utc_offset_minutes};
}

WindowedActivityFeatures windowed_activity_features(
    const ActivityCounter& counter, const TimeSlot& slot,
    std::span<const WindowSpec> windows) {
  if (windows.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no activity windows requested");
  }
  WindowedActivityFeatures features;
  features.user = counter.user;
  features.slot = slot;
  const int anchor = day_of_week(slot.start) * kHoursPerDay + hour_of_day(slot.start);
  for (const auto& window : windows) {
    if (window.from_hours > window.to_hours) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("window [{}, {}] is not ordered", window.from_hours,
                              window.to_hours));
    }
    double sum = 0.0;
    for (int off = window.from_hours; off <= window.to_hours; ++off) {
      const int idx = wrap(anchor + off, kHoursPerWeek);
      sum += static_cast<double>(counter.buckets[static_cast<std::size_t>(idx)]);
    }
    features.window_sums[window] = sum;
  }
  for (int hour = 0; hour < kHoursPerDay; ++hour) {
    double sum = 0.0;
    for (int dow = 0; dow < kDaysPerWeek; ++dow) {
      sum += static_cast<double>(counter.count(dow, hour));
    }
    features.weekly_aggregate[static_cast<std::size_t>(hour)] = sum;
  }
  return features;
}

}  // namespace besttime
