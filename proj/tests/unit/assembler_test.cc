#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "besttime/assembler.h"
#include "support/test_util.h"

namespace besttime {
namespace {

using testing::error_of;

TemporalActivityMap map_of(const MetricId& metric, std::vector<SlotScore> entries,
                           const UserId& user = "u") {
  return TemporalActivityMap(user, metric, std::move(entries));
}

AssemblerSpec spec_of(std::map<MetricId, double> weights) {
  AssemblerSpec spec;
  spec.use_case = "digest";
  for (const auto& [m, w] : weights) spec.metrics.push_back(m);
  spec.weights = std::move(weights);
  return spec;
}

TEST(AssemblerSpecTest, Validation) {
  EXPECT_EQ(error_of([] { spec_of({{"a", 0.0}}).validate(); }), "invalid_argument");
  EXPECT_EQ(error_of([] { spec_of({{"a", -1.0}, {"b", 2.0}}).validate(); }),
            "invalid_argument");
  AssemblerSpec mismatched = spec_of({{"a", 1.0}});
  mismatched.metrics.push_back("b");
  EXPECT_EQ(error_of([&] { mismatched.validate(); }), "invalid_argument");
  EXPECT_EQ(error_of([] { spec_of({{"a", 1.0}}).validate(); }), "none");
}

TEST(AssembleTest, IdentityForSingleMetric) {
  const auto a = map_of("a", {{0, 0.2}, {1, 0.9}, {2, 0.5}});
  const auto out = assemble(spec_of({{"a", 1.0}}), {{"a", a}}, {{"a", 1.0}});
  ASSERT_EQ(out.size(), 3u);
  for (const auto& e : a.entries()) EXPECT_DOUBLE_EQ(*out.score(e.slot), e.score);
  EXPECT_EQ(out.metric(), "assembled:digest");
  EXPECT_EQ(out.user(), "u");
}

TEST(AssembleTest, TwoChannelArithmetic) {
  const auto out = assemble(spec_of({{"a", 1.0}, {"b", 0.01}}),
                            {{"a", map_of("a", {{0, 0.5}})}, {"b", map_of("b", {{0, 1.0}})}},
                            {{"a", 1.0}, {"b", 1.0}});
  EXPECT_NEAR(*out.score(0), 0.51 / 1.01, 1e-15);
  EXPECT_NEAR(*out.score(0), 0.50495, 1e-5);
}

TEST(AssembleTest, GatedOutChannelKeepsOrder) {
  const auto a = map_of("a", {{0, 0.1}, {1, 0.7}, {2, 0.4}, {3, 0.9}});
  const auto b = map_of("b", {{0, 1.0}, {1, 0.0}, {2, 0.9}, {3, 0.0}});
  const auto out =
      assemble(spec_of({{"a", 1.0}, {"b", 5.0}}), {{"a", a}, {"b", b}}, {{"a", 1.0}, {"b", 0.0}});
  EXPECT_EQ(rank_indices(out), rank_indices(a));
}

TEST(AssembleTest, MissingSlotsCountAsZero) {
  const auto a = map_of("a", {{0, 0.8}, {1, 0.6}});
  const auto b = map_of("b", {{1, 1.0}, {2, 1.0}});
  const auto out =
      assemble(spec_of({{"a", 1.0}, {"b", 1.0}}), {{"a", a}, {"b", b}}, {{"a", 1.0}, {"b", 1.0}});
  ASSERT_EQ(out.size(), 3u);
  EXPECT_DOUBLE_EQ(*out.score(0), 0.4);
  EXPECT_DOUBLE_EQ(*out.score(1), 0.8);
  EXPECT_DOUBLE_EQ(*out.score(2), 0.5);
}

TEST(AssembleTest, MissingMetricMapCountsAsZero) {
  const auto a = map_of("a", {{0, 0.8}});
  const auto out =
      assemble(spec_of({{"a", 1.0}, {"b", 1.0}}), {{"a", a}}, {{"a", 1.0}, {"b", 1.0}});
  EXPECT_DOUBLE_EQ(*out.score(0), 0.4);
}

TEST(AssembleTest, Errors) {
  const auto a = map_of("a", {{0, 0.8}});
  AssemblerSpec none;
  none.use_case = "x";
  EXPECT_EQ(error_of([&] { assemble(none, {{"a", a}}, {{"a", 1.0}}); }),
            "degenerate_assembly");
  EXPECT_EQ(error_of([&] { assemble(spec_of({{"a", 1.0}}), {{"a", a}}, {{"a", 0.0}}); }),
            "degenerate_assembly");
  EXPECT_EQ(error_of([&] { assemble(spec_of({{"a", 1.0}}), {}, {{"a", 1.0}}); }),
            "empty_candidate");
  EXPECT_EQ(error_of([&] { assemble(spec_of({{"a", 1.0}}), {{"a", a}}, {}); }),
            "invalid_argument");
  const auto other = map_of("b", {{0, 0.1}}, "v");
  EXPECT_EQ(error_of([&] {
              assemble(spec_of({{"a", 1.0}, {"b", 1.0}}), {{"a", a}, {"b", other}},
                       {{"a", 1.0}, {"b", 1.0}});
            }),
            "invalid_argument");
}

TEST(AssembleTest, ArgmaxInvariantUnderWeightScaling) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<SlotScore> ea, eb;
    for (int s = 0; s < 10; ++s) {
      ea.push_back({s, u(rng)});
      eb.push_back({s, u(rng)});
    }
    const std::map<MetricId, TemporalActivityMap> maps{{"a", map_of("a", ea)},
                                                       {"b", map_of("b", eb)}};
    const std::map<MetricId, double> act{{"a", u(rng)}, {"b", u(rng)}};
    const double wa = 0.1 + u(rng), wb = u(rng), k = 0.01 + 100 * u(rng);
    const auto base = assemble(spec_of({{"a", wa}, {"b", wb}}), maps, act);
    const auto scaled = assemble(spec_of({{"a", k * wa}, {"b", k * wb}}), maps, act);
    for (const auto& e : base.entries()) {
      ASSERT_NEAR(e.score, *scaled.score(e.slot), 1e-12);
    }
  }
}

TEST(RankIndexTest, Examples) {
  const auto m = map_of("a", {{0, 0.9}, {1, 0.5}, {2, 0.7}});
  EXPECT_EQ(predicted_rank_index(m, 2), 1);
  EXPECT_EQ(predicted_rank_index(m, 0), 0);
  EXPECT_EQ(predicted_rank_index(m, 1), 2);
  EXPECT_EQ(error_of([&] { predicted_rank_index(m, 7); }), "not_found");
}

TEST(RankIndexTest, TiesFollowSlotIndex) {
  const auto m = map_of("a", {{0, 0.5}, {1, 0.5}, {2, 0.5}, {3, 0.5}});
  for (int s = 0; s < 4; ++s) EXPECT_EQ(predicted_rank_index(m, s), s);
}

TEST(RankIndexTest, Bijection) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SlotScore> e;
    for (int s = 0; s < 15; ++s) e.push_back({s * 2, static_cast<double>(rng() % 4) / 4.0});
    const auto ranks = rank_indices(map_of("a", e));
    std::vector<int> seen;
    for (const auto& [slot, r] : ranks) {
      seen.push_back(r);
      ASSERT_EQ(r, predicted_rank_index(map_of("a", e), slot));
    }
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 15; ++i) ASSERT_EQ(seen[static_cast<std::size_t>(i)], i);
  }
}

TrainingExample example(const UserId& user, std::vector<int> ordered,
                        std::map<int, std::map<MetricId, double>> ranks,
                        std::map<MetricId, double> activity) {
  TrainingExample ex;
  ex.truth.user = user;
  ex.truth.use_case = "digest";
  ex.truth.ordered_slots = std::move(ordered);
  ex.metric_ranks = std::move(ranks);
  ex.activity_levels = std::move(activity);
  return ex;
}

TEST(RankLossTest, PerfectPredictor) {
  const std::vector<TrainingExample> t{
      example("u", {3, 1, 2}, {{3, {{"a", 0}}}, {1, {{"a", 1}}}, {2, {{"a", 2}}}}, {{"a", 1.0}})};
  const auto r = rank_loss({{"a", 1.0}}, t);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.n, 3u);
}

TEST(RankLossTest, SingleTerm) {
  const std::vector<TrainingExample> t{example("u", {5}, {{5, {{"a", 2}}}}, {{"a", 1.0}})};
  EXPECT_EQ(rank_loss({{"a", 1.0}}, t).loss, 4.0);
}

TEST(RankLossTest, NotScaleInvariant) {
  const std::vector<TrainingExample> t{
      example("u", {0, 1}, {{0, {{"a", 0}}}, {1, {{"a", 1}}}}, {{"a", 1.0}})};
  EXPECT_NE(rank_loss({{"a", 1.0}}, t).loss, rank_loss({{"a", 2.0}}, t).loss);
}

TEST(RankLossTest, ActivityGatesRanks) {
  const std::vector<TrainingExample> t{
      example("u", {0}, {{0, {{"a", 3}, {"b", 5}}}}, {{"a", 1.0}, {"b", 0.5}})};
  // 1*1*3 + 1*0.5*5 = 5.5 against rank 0.
  EXPECT_DOUBLE_EQ(rank_loss({{"a", 1.0}, {"b", 1.0}}, t).loss, 5.5 * 5.5);
}

TEST(RankLossTest, Errors) {
  EXPECT_EQ(error_of([] { rank_loss({{"a", 1.0}}, {}); }), "invalid_argument");
  const std::vector<TrainingExample> missing{example("u", {0, 1}, {{0, {{"a", 0}}}}, {{"a", 1.0}})};
  EXPECT_NE(error_of([&] { rank_loss({{"a", 1.0}}, missing); }), "none");
}

TEST(GroundTruthTest, Validation) {
  GroundTruthRanking g{"u", "p", {1, 2, 1}, {}};
  EXPECT_EQ(error_of([&] { g.validate(); }), "invalid_argument");
  g.ordered_slots = {1, 2, 3};
  g.actual_ranks = {0.0, 2.0, 1.0};
  EXPECT_EQ(error_of([&] { g.validate(); }), "invalid_argument");
  g.actual_ranks = {0.0, 1.5};
  EXPECT_EQ(error_of([&] { g.validate(); }), "invalid_argument");
  g.actual_ranks = {0.0, 1.5, 1.5};
  EXPECT_EQ(error_of([&] { g.validate(); }), "none");
  EXPECT_EQ(g.actual_rank(1), 1.5);
  g.actual_ranks.clear();
  EXPECT_EQ(g.actual_rank(2), 2.0);
}

// Synthetic users whose true rank is sum_m w_m * activity_m * rank_m plus noise.
std::vector<TrainingExample> synthetic(const std::map<MetricId, double>& truth, int users,
                                       int slots, double noise, std::uint64_t seed,
                                       const std::map<MetricId, double>& fixed_activity = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> act(0.2, 1.0);
  std::normal_distribution<double> eps(0.0, noise);
  std::vector<TrainingExample> out;
  for (int u = 0; u < users; ++u) {
    TrainingExample ex;
    ex.truth.user = "u" + std::to_string(u);
    ex.truth.use_case = "digest";
    for (const auto& [m, w] : truth) {
      const double level = act(rng);
      auto it = fixed_activity.find(m);
      ex.activity_levels[m] = it == fixed_activity.end() ? level : it->second;
    }
    std::vector<std::pair<double, int>> target;
    for (int s = 0; s < slots; ++s) {
      double y = 0.0;
      for (const auto& [m, w] : truth) {
        const double r = static_cast<double>(rng() % static_cast<std::uint64_t>(slots));
        ex.metric_ranks[s][m] = r;
        y += w * ex.activity_levels[m] * r;
      }
      target.emplace_back(y + eps(rng), s);
    }
    std::sort(target.begin(), target.end());
    for (const auto& [y, s] : target) {
      ex.truth.ordered_slots.push_back(s);
      ex.truth.actual_ranks.push_back(y);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

TEST(LearnWeightsTest, ExactRecoveryOfSingleMetric) {
  const std::vector<TrainingExample> t{example(
      "u", {3, 1, 2, 0}, {{3, {{"a", 0}}}, {1, {{"a", 1}}}, {2, {{"a", 2}}}, {0, {{"a", 3}}}},
      {{"a", 1.0}})};
  const auto r = learn_weights(t, {{"a", 0.3}});
  EXPECT_NEAR(r.spec.weight("a"), 1.0, 1e-9);
  EXPECT_NEAR(r.report.loss, 0.0, 1e-12);
  EXPECT_FALSE(r.ridge_fallback);
}

TEST(LearnWeightsTest, RecoversSmallRatio) {
  const auto t = synthetic({{"a", 1.0}, {"b", 0.01}}, 300, 24, 0.05, 42);
  const auto r = learn_weights(t, {{"a", 1.0}, {"b", 1.0}});
  const double ratio = r.spec.weight("b") / r.spec.weight("a");
  EXPECT_NEAR(ratio, 0.01, 0.001);
  EXPECT_LE(r.report.loss, r.init_report.loss);
}

TEST(LearnWeightsTest, InactiveChannelTriggersRidge) {
  const auto t = synthetic({{"a", 1.0}, {"b", 0.5}}, 50, 12, 0.05, 7, {{"b", 0.0}});
  const auto r = learn_weights(t, {{"a", 1.0}, {"b", 1.0}});
  EXPECT_TRUE(r.ridge_fallback);
  EXPECT_NEAR(r.spec.weight("b"), 0.0, 1e-9);
  EXPECT_NEAR(r.spec.weight("a"), 1.0, 0.01);
}

TEST(LearnWeightsTest, UnderdeterminedTriggersRidge) {
  const std::vector<TrainingExample> t{example("u", {0}, {{0, {{"a", 1}, {"b", 2}}}},
                                               {{"a", 1.0}, {"b", 1.0}})};
  EXPECT_TRUE(learn_weights(t, {{"a", 1.0}, {"b", 1.0}}).ridge_fallback);
}

TEST(LearnWeightsTest, KeepsInitWhenNothingBeatsIt) {
  // Ranks anti-correlated with truth: the non-negative optimum is zero.
  const std::vector<TrainingExample> t{example(
      "u", {0, 1, 2}, {{0, {{"a", 2}}}, {1, {{"a", 1}}}, {2, {{"a", 0}}}}, {{"a", 1.0}})};
  const auto r = learn_weights(t, {{"a", 0.5}});
  EXPECT_LE(r.report.loss, r.init_report.loss);
}

TEST(LearnWeightsTest, Errors) {
  EXPECT_EQ(error_of([] { learn_weights({}, {{"a", 1.0}}); }), "invalid_argument");
}

// Brute force over active sets: the constrained minimum of a convex quadratic
// is the unconstrained minimum on some support with every weight >= 0.
Eigen::VectorXd brute_force_nnls(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto p = x.cols();
  Eigen::VectorXd best = Eigen::VectorXd::Zero(p);
  double best_loss = y.squaredNorm();
  for (int mask = 1; mask < (1 << p); ++mask) {
    std::vector<Eigen::Index> cols;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (mask & (1 << j)) cols.push_back(j);
    }
    Eigen::MatrixXd sub(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) {
      sub.col(static_cast<Eigen::Index>(c)) = x.col(cols[c]);
    }
    const Eigen::VectorXd w = sub.colPivHouseholderQr().solve(y);
    if ((w.array() < -1e-12).any()) continue;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(p);
    for (std::size_t c = 0; c < cols.size(); ++c) full(cols[c]) = w(static_cast<Eigen::Index>(c));
    const double loss = (x * full - y).squaredNorm();
    if (loss < best_loss) {
      best_loss = loss;
      best = full;
    }
  }
  return best;
}

TEST(LearnWeightsTest, MatchesBruteForceNonNegativeOptimum) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::vector<MetricId> metrics{"a", "b", "c"};
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<TrainingExample> t;
    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    for (int user = 0; user < 6; ++user) {
      TrainingExample ex;
      ex.truth.user = "u" + std::to_string(user);
      ex.truth.use_case = "p";
      for (const auto& m : metrics) ex.activity_levels[m] = u(rng);
      double y = 0.0;
      for (int s = 0; s < 5; ++s) {
        std::vector<double> row;
        for (const auto& m : metrics) {
          ex.metric_ranks[s][m] = static_cast<double>(rng() % 5);
          row.push_back(ex.activity_levels[m] * ex.metric_ranks[s][m]);
        }
        y += u(rng) * 2.0;
        ex.truth.ordered_slots.push_back(s);
        ex.truth.actual_ranks.push_back(y);
        rows.push_back(row);
        ys.push_back(y);
      }
      t.push_back(std::move(ex));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (int j = 0; j < 3; ++j) {
        x(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
      }
      y(static_cast<Eigen::Index>(i)) = ys[i];
    }
    const Eigen::VectorXd expected = brute_force_nnls(x, y);
    const auto r = learn_weights(t, {{"a", 1.0}, {"b", 1.0}, {"c", 1.0}});
    if (r.kept_init) continue;
    for (int j = 0; j < 3; ++j) {
      ASSERT_NEAR(r.spec.weight(metrics[static_cast<std::size_t>(j)]), expected(j), 1e-7)
          << "trial " << trial;
    }
  }
}

}  // namespace
}  // namespace besttime
