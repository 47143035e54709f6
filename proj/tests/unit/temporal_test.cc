#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "besttime/temporal.h"
#include "support/test_util.h"

namespace besttime {
namespace {

using testing::error_of;

TEST(CalendarTest, EpochIsThursday) {
  EXPECT_EQ(day_of_week(0), 4);
  EXPECT_EQ(day_of_week(3 * kSecondsPerDay), 0);  // 1970-01-04, Sunday
  EXPECT_EQ(day_of_week(4 * kSecondsPerDay + 9 * kSecondsPerHour), 1);
  EXPECT_EQ(hour_of_day(4 * kSecondsPerDay + 9 * kSecondsPerHour + 1800), 9);
}

TEST(CalendarTest, NegativeTimestampsFloor) {
  EXPECT_EQ(day_of_week(-1), 3);
  EXPECT_EQ(hour_of_day(-1), 23);
  EXPECT_EQ(day_start(-1), -kSecondsPerDay);
}

TEST(PartitionRangeTest, OneDayInHours) {
  const auto slots = partition_range(0, 86400, 3600);
  ASSERT_EQ(slots.size(), 24u);
  for (int i = 0; i < 24; ++i) {
    EXPECT_EQ(slots[static_cast<std::size_t>(i)].index, i);
    EXPECT_EQ(slots[static_cast<std::size_t>(i)].start, i * 3600);
    EXPECT_EQ(slots[static_cast<std::size_t>(i)].length, 3600);
  }
}

TEST(PartitionRangeTest, SingleSlot) {
  EXPECT_EQ(partition_range(0, 3600, 3600).size(), 1u);
}

TEST(PartitionRangeTest, ExactMultipleKeepsEverySlot) {
  EXPECT_EQ(partition_range(0, 90000, 3600).size(), 25u);
}

TEST(PartitionRangeTest, ShortTailDropped) {
  const auto slots = partition_range(100, 100 + 2 * 3600 + 1799, 3600);
  ASSERT_EQ(slots.size(), 2u);
  EXPECT_EQ(slots.back().end(), 100 + 2 * 3600);
}

TEST(PartitionRangeTest, Errors) {
  EXPECT_EQ(error_of([] { partition_range(10, 10, 3600); }), "invalid_argument");
  EXPECT_EQ(error_of([] { partition_range(10, 5, 3600); }), "invalid_argument");
  EXPECT_EQ(error_of([] { partition_range(0, 3600, 0); }), "invalid_argument");
  EXPECT_EQ(error_of([] { partition_range(0, 3600, -60); }), "invalid_argument");
  EXPECT_EQ(error_of([] { partition_range(0, 1800, 3600); }), "empty_candidate");
}

TEST(PartitionRangeTest, TilesWithoutGaps) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const Timestamp start = static_cast<Timestamp>(rng() % 1000000) - 500000;
    const Seconds len = 1 + static_cast<Seconds>(rng() % 7200);
    const Timestamp end = start + len + static_cast<Timestamp>(rng() % 200000);
    const auto slots = partition_range(start, end, len);
    ASSERT_EQ(static_cast<Timestamp>(slots.size()), (end - start) / len);
    Seconds total = 0;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      total += slots[i].length;
      if (i > 0) ASSERT_EQ(slots[i].start, slots[i - 1].end());
    }
    EXPECT_EQ(slots.front().start, start);
    EXPECT_EQ(total, static_cast<Seconds>(slots.size()) * len);
  }
}

TEST(NormalizeTest, Endpoints) {
  const MetricBounds b{"m", 1.0, 5.0, ""};
  EXPECT_EQ(normalize({1.0}, b).value(), 0.0);
  EXPECT_EQ(normalize({5.0}, b).value(), 1.0);
  EXPECT_DOUBLE_EQ(normalize({3.0}, b).value(), 0.5);
}

TEST(NormalizeTest, ClampsStaleBounds) {
  const MetricBounds b{"m", 1.0, 5.0, ""};
  EXPECT_EQ(normalize({-100.0}, b).value(), 0.0);
  EXPECT_EQ(normalize({100.0}, b).value(), 1.0);
}

TEST(NormalizeTest, DegenerateBoundsGiveHalf) {
  const MetricBounds b{"m", 2.0, 2.0, ""};
  EXPECT_EQ(normalize({2.0}, b).value(), 0.5);
  EXPECT_EQ(normalize({-7.0}, b).value(), 0.5);
}

TEST(NormalizeTest, RejectsNonFinite) {
  const MetricBounds b{"m", 0.0, 1.0, ""};
  EXPECT_EQ(error_of([&] { normalize({std::nan("")}, b); }), "invalid_argument");
  EXPECT_EQ(error_of([&] {
              normalize({std::numeric_limits<double>::infinity()}, b);
            }),
            "invalid_argument");
}

TEST(NormalizeTest, RejectsInvertedBounds) {
  EXPECT_EQ(error_of([] { normalize({0.0}, {"m", 2.0, 1.0, ""}); }), "invalid_argument");
}

TEST(NormalizeTest, MonotoneProperty) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 10000; ++i) {
    double lo = u(rng), hi = u(rng);
    if (lo > hi) std::swap(lo, hi);
    if (lo == hi) continue;
    const MetricBounds b{"m", lo, hi, ""};
    const double a = u(rng), c = u(rng);
    const double na = normalize({a}, b).value();
    const double nc = normalize({c}, b).value();
    if (a <= c) {
      ASSERT_LE(na, nc);
    } else {
      ASSERT_GE(na, nc);
    }
  }
}

TEST(NormalizedScoreTest, RejectsOutOfRange) {
  EXPECT_EQ(error_of([] { NormalizedScore(1.5); }), "invalid_argument");
  EXPECT_EQ(error_of([] { NormalizedScore(-0.1); }), "invalid_argument");
  EXPECT_EQ(error_of([] { NormalizedScore(std::nan("")); }), "invalid_argument");
  EXPECT_EQ(NormalizedScore(0.25).value(), 0.25);
}

TEST(BoundsTest, ComputeBoundsKeepsProvenance) {
  const std::vector<double> v{3.0, -1.0, 7.5};
  const auto b = compute_bounds("opens", v, "2024-01-01..2024-01-28");
  EXPECT_EQ(b.min, -1.0);
  EXPECT_EQ(b.max, 7.5);
  EXPECT_EQ(b.provenance, "2024-01-01..2024-01-28");
}

TEST(BoundsTest, ComputeBoundsRejectsEmpty) {
  EXPECT_NE(error_of([] { compute_bounds("m", std::vector<double>{}); }), "none");
}

TEST(ActivityMapTest, BuildEndpoints) {
  const auto map = build_activity_map("u", "m", {{0, {1.0}}, {1, {5.0}}}, {"m", 1, 5, ""});
  ASSERT_EQ(map.size(), 2u);
  EXPECT_EQ(map.score(0), 0.0);
  EXPECT_EQ(map.score(1), 1.0);
}

TEST(ActivityMapTest, BuildSingleEntry) {
  const auto map = build_activity_map("u", "m", {{0, {3.0}}}, {"m", 1, 5, ""});
  EXPECT_DOUBLE_EQ(*map.score(0), 0.5);
}

TEST(ActivityMapTest, BuildDegenerate) {
  const auto map = build_activity_map("u", "m", {{0, {2.0}}, {1, {2.0}}, {2, {2.0}}},
                                      {"m", 2, 2, ""});
  for (const auto& e : map.entries()) EXPECT_EQ(e.score, 0.5);
}

TEST(ActivityMapTest, MissingSlotsStayAbsent) {
  const auto map = build_activity_map("u", "m", {{0, {1.0}}, {5, {2.0}}}, {"m", 0, 2, ""});
  EXPECT_FALSE(map.contains(3));
  EXPECT_EQ(map.size(), 2u);
}

TEST(ActivityMapTest, BuildEmptyIsEmptyCandidate) {
  EXPECT_EQ(error_of([] { build_activity_map("u", "m", {}, {"m", 0, 1, ""}); }),
            "empty_candidate");
}

TEST(ActivityMapTest, RejectsDuplicatesAndBadScores) {
  EXPECT_EQ(error_of([] { TemporalActivityMap("u", "m", {{0, 0.1}, {0, 0.2}}); }),
            "invalid_argument");
  EXPECT_EQ(error_of([] { TemporalActivityMap("u", "m", {{0, 1.1}}); }),
            "invalid_argument");
}

TEST(ActivityMapTest, EntriesSortedAndWithin) {
  const TemporalActivityMap map("u", "m", {{2, 0.1}, {0, 0.3}, {1, 0.2}});
  EXPECT_EQ(map.entries().front().slot, 0);
  EXPECT_EQ(map.entries().back().slot, 2);
  const auto three = partition_range(0, 3 * 3600, 3600);
  const auto two = partition_range(0, 2 * 3600, 3600);
  EXPECT_TRUE(map.within(three));
  EXPECT_FALSE(map.within(two));
}

TEST(ActivityMapTest, UniformMap) {
  const auto slots = partition_range(0, 5 * 3600, 3600);
  const auto map = uniform_map("u", "m", slots);
  ASSERT_EQ(map.size(), 5u);
  for (const auto& e : map.entries()) EXPECT_EQ(e.score, 0.5);
}

TEST(ActivityMapTest, ArgsortInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::map<int, RawScore> raw;
    std::vector<double> values;
    for (int s = 0; s < 12; ++s) {
      raw[s] = {u(rng)};
      values.push_back(raw[s].value);
    }
    const auto b = compute_bounds("m", values);
    const auto map = build_activity_map("u", "m", raw, b);
    std::vector<int> by_raw(12), by_norm(12);
    std::iota(by_raw.begin(), by_raw.end(), 0);
    by_norm = by_raw;
    std::stable_sort(by_raw.begin(), by_raw.end(),
                     [&](int a, int c) { return raw[a].value > raw[c].value; });
    std::stable_sort(by_norm.begin(), by_norm.end(),
                     [&](int a, int c) { return *map.score(a) > *map.score(c); });
    ASSERT_EQ(by_raw, by_norm);
  }
}

}  // namespace
}  // namespace besttime
