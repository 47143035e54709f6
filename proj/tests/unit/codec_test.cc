#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "besttime/codec.h"
#include "support/test_util.h"

namespace besttime {
namespace {

using testing::error_of;

TEST(FormatDoubleTest, RoundTripsExactly) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng);
    ASSERT_EQ(std::stod(codec::format_double(x)), x);
  }
  EXPECT_EQ(codec::format_double(0.5), "0.5");
  EXPECT_EQ(codec::format_double(1.0), "1");
}

TEST(SplitFieldsTest, KeepsEmptyFields) {
  EXPECT_EQ(codec::split_fields("a,,b").size(), 3u);
  EXPECT_EQ(codec::split_fields("").size(), 1u);
}

TEST(MapsCsvTest, RoundTrip) {
  const std::vector<TemporalActivityMap> maps{
      TemporalActivityMap("u1", "a", {{0, 0.1}, {3, 1.0 / 3.0}}),
      TemporalActivityMap("u2", "b", {{1, 0.0}})};
  std::ostringstream out;
  codec::write_maps_csv(out, maps);
  std::istringstream in(out.str());
  EXPECT_EQ(codec::read_maps_csv(in), maps);
}

TEST(MapsCsvTest, HeaderOptionalAndErrorsCarryLine) {
  std::istringstream no_header("u,a,0,0.5\n");
  EXPECT_EQ(codec::read_maps_csv(no_header).size(), 1u);
  std::istringstream bad("user,metric,slot_index,score\nu,a,0,0.5\nu,a,x,0.5\n");
  try {
    codec::read_maps_csv(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParse);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  std::istringstream out_of_range("u,a,0,1.5\n");
  EXPECT_EQ(error_of([&] { codec::read_maps_csv(out_of_range); }), "parse");
  std::istringstream short_row("u,a,0\n");
  EXPECT_EQ(error_of([&] { codec::read_maps_csv(short_row); }), "parse");
  std::istringstream nan_row("u,a,0,nan\n");
  EXPECT_EQ(error_of([&] { codec::read_maps_csv(nan_row); }), "parse");
}

TEST(MapJsonTest, RoundTrip) {
  const TemporalActivityMap map("u", "m", {{2, 0.25}, {5, 0.75}});
  EXPECT_EQ(codec::map_from_json(codec::to_json(map)), map);
  EXPECT_EQ(error_of([] { codec::map_from_json(codec::Json{{"user", "u"}}); }), "parse");
}

TEST(CountersCsvTest, RoundTrip) {
  ActivityCounter c{"u", "push", {}};
  c.add(0, 0, 3);
  c.add(6, 23, 1);
  ActivityCounter d{"v", "email", {}};
  d.add(2, 5, 7);
  const std::vector<ActivityCounter> counters{c, d};
  std::ostringstream out;
  codec::write_counters_csv(out, counters);
  std::istringstream in(out.str());
  EXPECT_EQ(codec::read_counters_csv(in), counters);
}

TEST(EventsCsvTest, Reads) {
  std::istringstream in("user,channel,timestamp,utc_offset_minutes\nu,push,3600,-300\n");
  const auto events = codec::read_events_csv(in);
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].time, 3600);
  EXPECT_EQ(events[0].utc_offset_minutes, -300);
}

TEST(LevelsCsvTest, RoundTripAndRange) {
  const std::vector<codec::ActivityLevelRow> rows{{"u", "a", 0.5}, {"v", "b", 1.0}};
  std::ostringstream out;
  codec::write_levels_csv(out, rows);
  std::istringstream in(out.str());
  const auto back = codec::read_levels_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].level, 1.0);
  std::istringstream bad("u,a,1.5\n");
  EXPECT_EQ(error_of([&] { codec::read_levels_csv(bad); }), "parse");
}

TEST(GainsCsvTest, RejectsNegative) {
  std::istringstream ok("user,slot,gain\nu,3,2.5\n");
  EXPECT_EQ(codec::read_gains_csv(ok).at(0).gain, 2.5);
  std::istringstream bad("u,3,-1\n");
  EXPECT_EQ(error_of([&] { codec::read_gains_csv(bad); }), "parse");
}

TEST(TrainingCsvTest, RoundTrip) {
  TrainingExample ex;
  ex.truth = {"u", "p", {4, 2}, {0.0, 1.5}};
  ex.metric_ranks = {{4, {{"a", 0}, {"b", 1}}}, {2, {{"a", 1}, {"b", 0}}}};
  ex.activity_levels = {{"a", 1.0}, {"b", 0.25}};
  std::ostringstream out;
  codec::write_training_csv(out, std::vector<TrainingExample>{ex});
  std::istringstream in(out.str());
  const auto back = codec::read_training_csv(in, "p");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].truth.ordered_slots, ex.truth.ordered_slots);
  EXPECT_EQ(back[0].truth.actual_ranks, ex.truth.actual_ranks);
  EXPECT_EQ(back[0].metric_ranks, ex.metric_ranks);
  EXPECT_EQ(back[0].activity_levels, ex.activity_levels);
}

TEST(TrainingCsvTest, ConflictsAreParseErrors) {
  std::istringstream rank("u,0,0,a,0,1\nu,0,1,b,0,1\n");
  EXPECT_EQ(error_of([&] { codec::read_training_csv(rank, "p"); }), "parse");
  std::istringstream level("u,0,0,a,0,1\nu,1,1,a,1,0.5\n");
  EXPECT_EQ(error_of([&] { codec::read_training_csv(level, "p"); }), "parse");
}

TEST(RequestJsonTest, RoundTrip) {
  SchedulingRequest r;
  r.use_case = "digest";
  r.user = "u";
  r.t_start = 100;
  r.t_end = 100 + 86400;
  r.n = 2;
  r.slot_length = 1800;
  r.policy = {PolicyKind::kAvoidNearby, 2, Priority::kLow, false};
  r.explore = true;
  const auto back = codec::request_from_json(codec::to_json(r));
  EXPECT_EQ(back.use_case, r.use_case);
  EXPECT_EQ(back.t_end, r.t_end);
  EXPECT_EQ(back.slot_length, r.slot_length);
  EXPECT_EQ(back.policy, r.policy);
  EXPECT_TRUE(back.explore);
  EXPECT_EQ(error_of([] { codec::request_from_json(codec::Json{{"user", 3}}); }), "parse");
}

TEST(PlanJsonTest, RoundTrip) {
  ExecutionPlan plan;
  plan.use_case = "p";
  plan.user = "u";
  plan.timestamps = {10, 20};
  plan.chosen_slots = {0, 1};
  plan.jitter_seed = 0xfedcba9876543210ULL;
  plan.refilled = {1};
  plan.signal_fallback = true;
  EXPECT_EQ(codec::plan_from_json(codec::to_json(plan)), plan);
  auto doc = codec::to_json(plan);
  doc["timestamps"] = codec::Json::array({1});
  EXPECT_EQ(error_of([&] { codec::plan_from_json(doc); }), "parse");
}

}  // namespace
}  // namespace besttime
