#include "besttime/temporal.h"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "besttime/error.h"

namespace besttime {
namespace {

// 1970-01-01 (day 0) was a Thursday.
constexpr int kEpochDayOfWeek = 4;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

int day_of_week(Timestamp t) {
  const std::int64_t day = floor_div(t, kSecondsPerDay);
  return static_cast<int>(((day + kEpochDayOfWeek) % 7 + 7) % 7);
}

int hour_of_day(Timestamp t) {
  const std::int64_t in_day = t - floor_div(t, kSecondsPerDay) * kSecondsPerDay;
  return static_cast<int>(in_day / kSecondsPerHour);
}

Timestamp day_start(Timestamp t) {
  return floor_div(t, kSecondsPerDay) * kSecondsPerDay;
}

NormalizedScore::NormalizedScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("normalized score {} outside [0, 1]", value));
  }
}

void MetricBounds::validate() const {
  if (!std::isfinite(min) || !std::isfinite(max)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bounds for metric '{}' are not finite", metric));
  }
  if (max < min) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("bounds for metric '{}' have max {} < min {}",
                            metric, max, min));
  }
}

MetricBounds compute_bounds(const MetricId& metric,
                            std::span<const double> raw_values,
                            std::string provenance) {
  if (raw_values.empty()) {
    throw Error(ErrorCode::kEmptyCandidate,
                fmt::format("no raw values to bound metric '{}'", metric));
  }
  const auto [lo, hi] = std::minmax_element(raw_values.begin(), raw_values.end());
  MetricBounds bounds{metric, *lo, *hi, std::move(provenance)};
  bounds.validate();
  return bounds;
}

TemporalActivityMap::TemporalActivityMap(UserId user, MetricId metric,
                                         std::vector<SlotScore> entries)
    : user_(std::move(user)), metric_(std::move(metric)),
      entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const SlotScore& a, const SlotScore& b) { return a.slot < b.slot; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    NormalizedScore{entries_[i].score};
    if (i > 0 && entries_[i].slot == entries_[i - 1].slot) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("duplicate slot {} in map for ({}, {})",
                              entries_[i].slot, user_, metric_));
    }
  }
}

std::optional<double> TemporalActivityMap::score(int slot) const {
  auto it = std::lower_bound(
      entries_.begin(), entries_.end(), slot,
      [](const SlotScore& e, int s) { return e.slot < s; });
  if (it == entries_.end() || it->slot != slot) return std::nullopt;
  return it->score;
}

bool TemporalActivityMap::within(std::span<const TimeSlot> candidates) const {
  return std::all_of(entries_.begin(), entries_.end(), [&](const SlotScore& e) {
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const TimeSlot& s) { return s.index == e.slot; });
  });
}

std::vector<TimeSlot> partition_range(Timestamp t_start, Timestamp t_end,
                                      Seconds slot_length) {
  if (slot_length <= 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("slot length must be positive, got {}", slot_length));
  }
  if (t_end <= t_start) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("empty execution range [{}, {})", t_start, t_end));
  }
  const std::int64_t k = (t_end - t_start) / slot_length;
  if (k == 0) {
    throw Error(ErrorCode::kEmptyCandidate,
                fmt::format("range of {}s holds no slot of length {}s",
                            t_end - t_start, slot_length));
  }
  std::vector<TimeSlot> slots;
  slots.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    slots.push_back({static_cast<int>(i), t_start + i * slot_length, slot_length});
  }
  return slots;
}

NormalizedScore normalize(RawScore raw, const MetricBounds& bounds) {
  bounds.validate();
  if (!std::isfinite(raw.value)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("raw score for metric '{}' is not finite",
                            bounds.metric));
  }
  if (bounds.max == bounds.min) return NormalizedScore{0.5};
  const double scaled = (raw.value - bounds.min) / (bounds.max - bounds.min);
  return NormalizedScore{std::clamp(scaled, 0.0, 1.0)};
}

TemporalActivityMap build_activity_map(const UserId& user,
                                       const MetricId& metric,
                                       const std::map<int, RawScore>& raw_scores,
                                       const MetricBounds& bounds) {
  if (raw_scores.empty()) {
    throw Error(ErrorCode::kEmptyCandidate,
                fmt::format("no raw scores for ({}, {})", user, metric));
  }
  std::vector<SlotScore> entries;
  entries.reserve(raw_scores.size());
  for (const auto& [slot, raw] : raw_scores) {
    entries.push_back({slot, normalize(raw, bounds).value()});
  }
  return TemporalActivityMap(user, metric, std::move(entries));
}

TemporalActivityMap uniform_map(const UserId& user, const MetricId& metric,
                                std::span<const TimeSlot> candidates,
                                double score) {
  std::vector<SlotScore> entries;
  entries.reserve(candidates.size());
  for (const auto& slot : candidates) entries.push_back({slot.index, score});
  return TemporalActivityMap(user, metric, std::move(entries));
}

}  // namespace besttime
