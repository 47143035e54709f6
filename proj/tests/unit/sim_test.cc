#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "besttime/sim.h"
#include "support/test_util.h"

namespace besttime::sim {
namespace {

using besttime::testing::error_of;

constexpr Timestamp kMonday = 4 * kSecondsPerDay;

PopulationConfig single_bump_at(double hour) {
  PopulationConfig c;
  c.size = 1;
  c.min_bumps = c.max_bumps = 1;
  c.center_min = c.center_max = hour;
  c.day_variation = 0.0;
  return c;
}

TEST(PopulationTest, SingleBumpPeaksAtItsHourEveryDay) {
  const auto users = generate_population(single_bump_at(20.0), 5);
  ASSERT_EQ(users.size(), 1u);
  for (int dow = 0; dow < kDaysPerWeek; ++dow) {
    const auto begin = users[0].curves[0].begin() + dow * kHoursPerDay;
    EXPECT_EQ(std::max_element(begin, begin + kHoursPerDay) - begin, 20);
  }
}

TEST(PopulationTest, CurvesAreProbabilitiesAndDeterministic) {
  PopulationConfig c;
  c.size = 200;
  c.amplitude_max = 0.9;
  c.max_bumps = 3;
  const auto a = generate_population(c, 9);
  const auto b = generate_population(c, 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].curves, b[i].curves);
    for (const auto& curve : a[i].curves) {
      for (double p : curve) {
        ASSERT_GE(p, 0.0);
        ASSERT_LE(p, 1.0);
      }
    }
  }
  EXPECT_NE(generate_population(c, 10)[0].curves, a[0].curves);
}

TEST(PopulationTest, FullCorrelationCopiesCurves) {
  PopulationConfig c;
  c.size = 100;
  c.rho = 1.0;
  for (const auto& u : generate_population(c, 3)) ASSERT_EQ(u.curves[0], u.curves[1]);
}

double argmax_hour(const Curve& curve) {
  return static_cast<double>(std::max_element(curve.begin(), curve.begin() + 24) -
                             curve.begin());
}

TEST(PopulationTest, ZeroCorrelationDecouplesPeaks) {
  PopulationConfig c;
  c.size = 10000;
  c.rho = 0.0;
  const auto users = generate_population(c, 4);
  std::vector<double> a, b;
  for (const auto& u : users) {
    a.push_back(argmax_hour(u.curves[0]));
    b.push_back(argmax_hour(u.curves[1]));
  }
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  EXPECT_NEAR(sab / std::sqrt(saa * sbb), 0.0, 0.1);
}

TEST(PopulationTest, Validation) {
  PopulationConfig c;
  c.size = 0;
  EXPECT_EQ(error_of([&] { c.validate(); }), "configuration");
  c = {};
  c.rho = 1.5;
  EXPECT_EQ(error_of([&] { c.validate(); }), "configuration");
}

TEST(ObservationTest, CountsFollowTheCurve) {
  auto config = single_bump_at(14.0);
  config.activity_min = config.activity_max = {1.0};
  const auto users = generate_population(config, 1);
  const auto counter = observe_counter(users[0], kChannelA, {8, 5.0}, 2);
  for (int dow = 0; dow < kDaysPerWeek; ++dow) {
    EXPECT_GT(counter.count(dow, 14), counter.count(dow, 2));
  }
  EXPECT_EQ(counter, observe_counter(users[0], kChannelA, {8, 5.0}, 2));
}

SyntheticUser flat_user(double p) {
  SyntheticUser u;
  u.id = "u0";
  Curve curve;
  curve.fill(p);
  u.curves = {curve};
  u.activity = {1.0};
  return u;
}

ExecutionPlan plan_for(const SyntheticUser& user, std::vector<int> slots) {
  ExecutionPlan plan;
  plan.user = user.id;
  plan.chosen_slots = std::move(slots);
  return plan;
}

TEST(SimulateDayTest, CertainSlotEngages) {
  const std::vector<SyntheticUser> users{flat_user(1.0)};
  const auto out = simulate_day(users, {{plan_for(users[0], {5})}}, {}, {0, kMonday}, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_TRUE(out[0].engaged);
  EXPECT_EQ(out[0].probability, 1.0);
}

TEST(SimulateDayTest, ConcurrentUseCasesSplit) {
  const std::vector<SyntheticUser> users{flat_user(0.6)};
  const auto out = simulate_day(
      users, {{plan_for(users[0], {5})}, {plan_for(users[0], {5})}}, {}, {0, kMonday}, 1);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& o : out) EXPECT_DOUBLE_EQ(o.probability, 0.3);
}

TEST(SimulateDayTest, DecayWithinWindow) {
  SyntheticUser user = flat_user(0.0);
  user.curves[0][1 * kHoursPerDay + 9] = 0.8;   // Monday 09:00
  user.curves[0][1 * kHoursPerDay + 10] = 0.6;  // Monday 10:00
  const std::vector<SyntheticUser> users{user};
  EngagementModel model;
  model.decay = 0.5;
  model.decay_window = 1;
  const auto out = simulate_day(users, {{plan_for(user, {9, 10})}}, model, {0, kMonday}, 1);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].probability, 0.8);
  EXPECT_DOUBLE_EQ(out[1].probability, 0.3);

  const auto spaced =
      simulate_day(users, {{plan_for(user, {9, 11})}}, model, {0, kMonday}, 1);
  EXPECT_DOUBLE_EQ(spaced[1].probability, user.curves[0][1 * kHoursPerDay + 11]);
}

TEST(SimulateDayTest, Errors) {
  const std::vector<SyntheticUser> users{flat_user(0.5)};
  EXPECT_EQ(error_of([&] { simulate_day(users, {{}}, {}, {0, kMonday}, 1); }),
            "invalid_argument");
  EXPECT_EQ(error_of([&] {
              simulate_day(users, {{plan_for(users[0], {24})}}, {}, {0, kMonday}, 1);
            }),
            "invalid_argument");
  ExecutionPlan wrong = plan_for(users[0], {1});
  wrong.user = "other";
  EXPECT_EQ(error_of([&] { simulate_day(users, {{wrong}}, {}, {0, kMonday}, 1); }),
            "invalid_argument");
}

TEST(ShareTest, Rules) {
  EngagementModel m;
  m.share_rule = ShareRule::kInverse;
  EXPECT_EQ(m.share(1), 1.0);
  EXPECT_EQ(m.share(4), 0.25);
  m.share_rule = ShareRule::kNone;
  EXPECT_EQ(m.share(4), 1.0);
  m.share_rule = ShareRule::kPower;
  m.share_exponent = 0.5;
  EXPECT_DOUBLE_EQ(m.share(4), 0.5);
}

TEST(BootstrapTest, IdenticalArmsGiveZeroLift) {
  const std::vector<double> eng{1, 2, 0, 3}, exec{3, 3, 3, 3};
  const auto l = bootstrap_lift(eng, exec, eng, exec, 200, 0.95, 1);
  EXPECT_EQ(l.lift, 0.0);
  EXPECT_EQ(l.lo, 0.0);
  EXPECT_EQ(l.hi, 0.0);
  EXPECT_FALSE(l.excludes_zero());
}

TEST(BootstrapTest, UniformImprovementExcludesZero) {
  std::vector<double> ctl, test, exec;
  for (int i = 0; i < 100; ++i) {
    ctl.push_back(1.0 + (i % 7));
    test.push_back(1.1 * (1.0 + (i % 7)));
    exec.push_back(3);
  }
  const auto l = bootstrap_lift(test, exec, ctl, exec, 500, 0.95, 2);
  EXPECT_NEAR(l.lift, 0.1, 1e-12);
  EXPECT_TRUE(l.excludes_zero());
  EXPECT_LE(l.lo, l.lift);
  EXPECT_GE(l.hi, l.lift);
}

ExperimentConfig small_comparison() {
  ExperimentConfig c;
  c.population.size = 400;
  c.n = 3;
  c.seed = 5;
  c.bootstrap = 100;
  c.arms = {{"top_n", {PolicyKind::kTopN, 0, Priority::kHigh, true}, false},
            {"avoid_1", {PolicyKind::kAvoidNearby, 1, Priority::kHigh, true}, false},
            {"avoid_2", {PolicyKind::kAvoidNearby, 2, Priority::kHigh, true}, false}};
  return c;
}

std::string csv_of(const ExperimentResult& r) {
  std::ostringstream out;
  write_result_csv(out, r);
  return out.str();
}

TEST(PolicyComparisonTest, DeterministicAcrossWorkers) {
  auto c = small_comparison();
  const std::string one = csv_of(run_policy_comparison(c));
  c.workers = 4;
  EXPECT_EQ(csv_of(run_policy_comparison(c)), one);
  EXPECT_EQ(csv_of(run_policy_comparison(c)), one);
}

TEST(PolicyComparisonTest, ConservesExecutions) {
  auto c = small_comparison();
  c.days = 2;
  const auto r = run_policy_comparison(c);
  EXPECT_EQ(r.requested_executions, 400 * 3 * 2);
  for (const auto& arm : r.arms) {
    EXPECT_EQ(arm.truncated, 0);
    EXPECT_EQ(arm.executions, r.requested_executions);
  }
}

TEST(PolicyComparisonTest, ArmsRunInTheirOwnWindow) {
  const auto r = run_policy_comparison(small_comparison());
  ASSERT_EQ(r.arms.size(), 3u);
  EXPECT_EQ(r.arms[1].decay_window, 1);
  EXPECT_EQ(r.arms[2].decay_window, 2);
  EXPECT_NEAR(r.arms[2].lift.lift,
              r.arms[2].efficiency / r.arms[2].control_efficiency - 1.0, 1e-12);
}

TEST(PolicyComparisonTest, SingleSlotMakesArmsIdentical) {
  auto c = small_comparison();
  c.slot_length = kSecondsPerDay;
  const auto r = run_policy_comparison(c);
  for (const auto& arm : r.arms) {
    EXPECT_EQ(arm.engagements, r.arms[0].engagements);
    EXPECT_EQ(arm.executions, r.arms[0].executions);
    EXPECT_EQ(arm.lift.lift, 0.0);
  }
}

TEST(PolicyComparisonTest, OracleMatchesTopCurveValues) {
  ExperimentConfig c;
  c.population.size = 2000;
  c.n = 2;
  c.seed = 8;
  c.bootstrap = 10;
  c.engagement.decay = 1.0;
  c.engagement.share_rule = ShareRule::kNone;
  c.arms = {{"top_n", {PolicyKind::kTopN, 0, Priority::kHigh, true}, false},
            {"oracle", {PolicyKind::kTopN, 0, Priority::kHigh, true}, true}};
  const auto r = run_policy_comparison(c);
  const ArmResult& oracle = r.arms[1];
  EXPECT_GE(oracle.expected_engagements, r.arms[0].expected_engagements);
  const auto users = generate_population(c.population, derive_seed({c.seed, 0x706f70}));
  double total = 0.0;
  for (const auto& u : users) {
    std::vector<double> day(u.curves[0].begin() + kHoursPerDay,
                            u.curves[0].begin() + 2 * kHoursPerDay);
    std::sort(day.rbegin(), day.rend());
    total += day[0] + day[1];
  }
  const double bound = total / static_cast<double>(2 * users.size());
  EXPECT_NEAR(oracle.expected_engagements / static_cast<double>(oracle.executions), bound,
              1e-9);
  // Bernoulli realizations agree to Monte Carlo error.
  EXPECT_NEAR(oracle.efficiency, bound, 4.0 * std::sqrt(0.25 / 4000.0));
}

ExperimentConfig small_assembly(double weight) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kAssembly;
  c.population.size = 300;
  c.n = 1;
  c.seed = 12;
  c.bootstrap = 50;
  c.assembly_weight = weight;
  return c;
}

TEST(AssemblyTest, ZeroWeightArmsIdentical) {
  const auto r = run_assembly_experiment(small_assembly(0.0));
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_EQ(r.arms[0].engagements, r.arms[1].engagements);
  EXPECT_EQ(r.arms[0].expected_engagements, r.arms[1].expected_engagements);
  ASSERT_TRUE(r.cohort.has_value());
  EXPECT_EQ(r.cohort->dims, 2);
  EXPECT_EQ(r.cohort->population(), 300u);
}

TEST(AssemblyTest, Deterministic) {
  auto c = small_assembly(0.01);
  const std::string one = csv_of(run_assembly_experiment(c));
  c.workers = 3;
  EXPECT_EQ(csv_of(run_assembly_experiment(c)), one);
}

ExperimentConfig small_coordination(int use_cases, int high) {
  ExperimentConfig c;
  c.kind = ExperimentKind::kCoordination;
  c.population.size = 300;
  c.n = 1;
  c.seed = 13;
  c.bootstrap = 50;
  c.use_cases = use_cases;
  c.high_priority = high;
  return c;
}

TEST(CoordinationTest, SingleUseCaseArmsIdentical) {
  const auto r = run_coordination_experiment(small_coordination(1, 1));
  ASSERT_EQ(r.arms.size(), 2u);
  EXPECT_EQ(r.arms[0].engagements, r.arms[1].engagements);
  EXPECT_EQ(r.arms[1].lift.lift, 0.0);
}

TEST(CoordinationTest, ReportsTiers) {
  const auto r = run_coordination_experiment(small_coordination(4, 2));
  ASSERT_EQ(r.tiers.size(), 4u);
  EXPECT_EQ(r.tiers[0].executions + r.tiers[2].executions, r.arms[0].executions);
  std::ostringstream table;
  write_result_table(table, r);
  EXPECT_NE(table.str().find("tiered/low"), std::string::npos);
}

TEST(ExperimentConfigTest, Validation) {
  auto c = small_comparison();
  c.arms.clear();
  EXPECT_EQ(error_of([&] { c.validate(); }), "configuration");
  auto k = small_coordination(3, 5);
  EXPECT_EQ(error_of([&] { k.validate(); }), "configuration");
}

}  // namespace
}  // namespace besttime::sim
