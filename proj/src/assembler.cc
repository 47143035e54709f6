#include "besttime/assembler.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <set>

#include "besttime/error.h"

namespace besttime {
namespace {

double activity_for(const std::map<MetricId, double>& levels,
                    const MetricId& metric) {
  auto it = levels.find(metric);
  if (it == levels.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("no channel activity level for metric '{}'", metric));
  }
  if (!(it->second >= 0.0 && it->second <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("activity level {} for '{}' outside [0, 1]",
                            it->second, metric));
  }
  return it->second;
}

struct DesignSystem {
  Eigen::MatrixXd gram;   // X^T X
  Eigen::VectorXd moment; // X^T y
  std::size_t rows = 0;
};

DesignSystem build_system(std::span<const TrainingExample> training,
                          const std::vector<MetricId>& metrics) {
  const auto p = static_cast<Eigen::Index>(metrics.size());
  DesignSystem sys{Eigen::MatrixXd::Zero(p, p), Eigen::VectorXd::Zero(p), 0};
  Eigen::VectorXd row(p);
  for (const auto& ex : training) {
    ex.truth.validate();
    for (std::size_t pos = 0; pos < ex.truth.ordered_slots.size(); ++pos) {
      const int slot = ex.truth.ordered_slots[pos];
      auto ranks = ex.metric_ranks.find(slot);
      if (ranks == ex.metric_ranks.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("user '{}' slot {} has no predicted ranks",
                                ex.truth.user, slot));
      }
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto& metric = metrics[static_cast<std::size_t>(j)];
        auto r = ranks->second.find(metric);
        if (r == ranks->second.end()) {
          throw Error(ErrorCode::kInvalidArgument,
                      fmt::format("user '{}' slot {} lacks a rank for '{}'",
                                  ex.truth.user, slot, metric));
        }
        row(j) = activity_for(ex.activity_levels, metric) * r->second;
      }
      sys.gram.noalias() += row * row.transpose();
      sys.moment.noalias() += row * ex.truth.actual_rank(pos);
      ++sys.rows;
    }
  }
  return sys;
}

// Lawson-Hanson active set on the normal equations: minimizes
// x^T G x - 2 b^T x subject to x >= 0.
Eigen::VectorXd solve_nnls(const Eigen::MatrixXd& gram,
                           const Eigen::VectorXd& moment, int max_iterations) {
  const Eigen::Index p = gram.rows();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  std::vector<bool> passive(static_cast<std::size_t>(p), false);
  const double tol =
      1e-12 * std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    const auto q = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd sub(q, q);
    Eigen::VectorXd rhs(q);
    for (Eigen::Index a = 0; a < q; ++a) {
      rhs(a) = moment(idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < q; ++b) {
        sub(a, b) = gram(idx[static_cast<std::size_t>(a)],
                         idx[static_cast<std::size_t>(b)]);
      }
    }
    const Eigen::VectorXd sol = sub.ldlt().solve(rhs);
    s.setZero();
    for (Eigen::Index a = 0; a < q; ++a) s(idx[static_cast<std::size_t>(a)]) = sol(a);
  };

  Eigen::VectorXd s(p);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::VectorXd grad = moment - gram * x;
    Eigen::Index best = -1;
    double best_grad = tol;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (!passive[static_cast<std::size_t>(i)] && grad(i) > best_grad) {
        best_grad = grad(i);
        best = i;
      }
    }
    if (best < 0) break;
    passive[static_cast<std::size_t>(best)] = true;

    for (int inner = 0; inner < max_iterations; ++inner) {
      solve_passive(s);
      bool feasible = true;
      double alpha = 1.0;
      for (Eigen::Index i = 0; i < p; ++i) {
        if (passive[static_cast<std::size_t>(i)] && s(i) <= 0.0) {
          feasible = false;
          const double denom = x(i) - s(i);
          if (denom > 0.0) alpha = std::min(alpha, x(i) / denom);
        }
      }
      if (feasible) break;
      x += alpha * (s - x);
      for (Eigen::Index i = 0; i < p; ++i) {
        if (passive[static_cast<std::size_t>(i)] && x(i) <= tol) {
          passive[static_cast<std::size_t>(i)] = false;
          x(i) = 0.0;
        }
      }
    }
    x = s.cwiseMax(0.0);
  }
  return x;
}

}  // namespace

void AssemblerSpec::validate() const {
  if (metrics.empty()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("use case '{}' has no metrics", use_case));
  }
  std::set<MetricId> listed(metrics.begin(), metrics.end());
  if (listed.size() != metrics.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("use case '{}' lists a metric twice", use_case));
  }
  if (weights.size() != listed.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("use case '{}': weights and metrics differ", use_case));
  }
  bool any_positive = false;
  for (const auto& [metric, w] : weights) {
    if (!listed.contains(metric)) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("use case '{}': weight for unlisted metric '{}'",
                              use_case, metric));
    }
    if (!std::isfinite(w) || w < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("use case '{}': weight {} for '{}' must be >= 0",
                              use_case, w, metric));
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("use case '{}' has no positive weight", use_case));
  }
}

double AssemblerSpec::weight(const MetricId& metric) const {
  auto it = weights.find(metric);
  if (it == weights.end()) {
    throw Error(ErrorCode::kNotFound,
                fmt::format("use case '{}' has no weight for '{}'", use_case, metric));
  }
  return it->second;
}

TemporalActivityMap assemble(const AssemblerSpec& spec,
                             const std::map<MetricId, TemporalActivityMap>& maps,
                             const std::map<MetricId, double>& activity_levels) {
  if (spec.metrics.empty()) {
    throw Error(ErrorCode::kDegenerateAssembly,
                fmt::format("use case '{}' assembles no metrics", spec.use_case));
  }
  double effective = 0.0;
  std::vector<double> gates;
  gates.reserve(spec.metrics.size());
  for (const auto& metric : spec.metrics) {
    const double gate = spec.weight(metric) * activity_for(activity_levels, metric);
    gates.push_back(gate);
    effective += gate;
  }
  if (!(effective > 0.0)) {
    throw Error(ErrorCode::kDegenerateAssembly,
                fmt::format("use case '{}': effective weight sum is zero",
                            spec.use_case));
  }

  const UserId* user = nullptr;
  std::map<int, double> combined;
  for (std::size_t i = 0; i < spec.metrics.size(); ++i) {
    auto it = maps.find(spec.metrics[i]);
    if (it == maps.end()) continue;
    if (user != nullptr && *user != it->second.user()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("assembling maps of users '{}' and '{}'", *user,
                              it->second.user()));
    }
    user = &it->second.user();
    for (const auto& e : it->second.entries()) combined[e.slot] += gates[i] * e.score;
  }
  if (user == nullptr || combined.empty()) {
    throw Error(ErrorCode::kEmptyCandidate,
                fmt::format("no signal maps to assemble for use case '{}'",
                            spec.use_case));
  }
  std::vector<SlotScore> entries;
  entries.reserve(combined.size());
  for (const auto& [slot, sum] : combined) {
    entries.push_back({slot, std::clamp(sum / effective, 0.0, 1.0)});
  }
  return TemporalActivityMap(*user, "assembled:" + spec.use_case,
                             std::move(entries));
}

int predicted_rank_index(const TemporalActivityMap& map, int slot) {
  const auto target = map.score(slot);
  if (!target) {
    throw Error(ErrorCode::kNotFound,
                fmt::format("slot {} not in map for ({}, {})", slot, map.user(),
                            map.metric()));
  }
  int rank = 0;
  for (const auto& e : map.entries()) {
    if (e.score > *target || (e.score == *target && e.slot < slot)) ++rank;
  }
  return rank;
}

std::map<int, int> rank_indices(const TemporalActivityMap& map) {
  std::vector<SlotScore> order(map.entries().begin(), map.entries().end());
  std::stable_sort(order.begin(), order.end(),
                   [](const SlotScore& a, const SlotScore& b) {
                     return a.score > b.score;
                   });
  std::map<int, int> ranks;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ranks[order[i].slot] = static_cast<int>(i);
  }
  return ranks;
}

double GroundTruthRanking::actual_rank(std::size_t position) const {
  return actual_ranks.empty() ? static_cast<double>(position)
                              : actual_ranks.at(position);
}

void GroundTruthRanking::validate() const {
  std::set<int> seen;
  for (int slot : ordered_slots) {
    if (!seen.insert(slot).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("ground truth for '{}' repeats slot {}", user, slot));
    }
  }
  if (!actual_ranks.empty()) {
    if (actual_ranks.size() != ordered_slots.size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("ground truth for '{}': {} ranks for {} slots", user,
                              actual_ranks.size(), ordered_slots.size()));
    }
    for (std::size_t i = 0; i < actual_ranks.size(); ++i) {
      if (!std::isfinite(actual_ranks[i]) ||
          (i > 0 && actual_ranks[i] < actual_ranks[i - 1])) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("ground truth for '{}': ranks must be finite and "
                                "non-decreasing",
                                user));
      }
    }
  }
}

RankLossReport rank_loss(const std::map<MetricId, double>& weights,
                         std::span<const TrainingExample> training) {
  RankLossReport report;
  report.weights = weights;
  double sum = 0.0;
  for (const auto& ex : training) {
    ex.truth.validate();
    for (std::size_t pos = 0; pos < ex.truth.ordered_slots.size(); ++pos) {
      const int slot = ex.truth.ordered_slots[pos];
      auto ranks = ex.metric_ranks.find(slot);
      if (ranks == ex.metric_ranks.end()) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("user '{}' slot {} has no predicted ranks",
                                ex.truth.user, slot));
      }
      double predicted = 0.0;
      for (const auto& [metric, w] : weights) {
        auto r = ranks->second.find(metric);
        if (r == ranks->second.end()) {
          throw Error(ErrorCode::kInvalidArgument,
                      fmt::format("user '{}' slot {} lacks a rank for '{}'",
                                  ex.truth.user, slot, metric));
        }
        predicted += w * activity_for(ex.activity_levels, metric) * r->second;
      }
      const double diff = predicted - ex.truth.actual_rank(pos);
      sum += diff * diff;
      ++report.n;
    }
  }
  if (report.n == 0) {
    throw Error(ErrorCode::kInvalidArgument, "rank loss over empty ground truth");
  }
  report.loss = sum / static_cast<double>(report.n);
  return report;
}

LearnResult learn_weights(std::span<const TrainingExample> training,
                          const std::map<MetricId, double>& init,
                          const LearnerConfig& config) {
  if (training.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no training examples");
  }
  std::vector<MetricId> metrics = config.metrics;
  if (metrics.empty()) {
    for (const auto& [metric, w] : init) metrics.push_back(metric);
  }
  LearnResult result;
  result.spec.use_case = config.use_case.value_or(training.front().truth.use_case);
  result.spec.metrics = metrics;
  result.spec.weights = init;
  result.spec.validate();
  result.init_report = rank_loss(init, training);

  DesignSystem sys = build_system(training, metrics);
  const auto p = static_cast<Eigen::Index>(metrics.size());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sys.gram,
                                                     Eigen::EigenvaluesOnly);
  const double max_eig = eig.eigenvalues().maxCoeff();
  const double min_eig = eig.eigenvalues().minCoeff();
  const bool singular = sys.rows < static_cast<std::size_t>(p) || max_eig <= 0.0 ||
                        min_eig <= config.singular_tolerance * max_eig;
  Eigen::MatrixXd gram = sys.gram;
  if (singular) {
    result.ridge_fallback = true;
    double scale = sys.gram.diagonal().mean();
    if (!(scale > 0.0)) scale = 1.0;
    gram.diagonal().array() += config.ridge_lambda * scale;
  }
  const Eigen::VectorXd x = solve_nnls(gram, sys.moment, config.max_iterations);

  std::map<MetricId, double> learned;
  bool any_positive = false;
  for (Eigen::Index j = 0; j < p; ++j) {
    learned[metrics[static_cast<std::size_t>(j)]] = x(j);
    any_positive = any_positive || x(j) > 0.0;
  }
  RankLossReport learned_report = rank_loss(learned, training);
  if (!any_positive || learned_report.loss > result.init_report.loss) {
    result.kept_init = true;
    result.report = result.init_report;
    return result;
  }
  result.spec.weights = std::move(learned);
  result.report = std::move(learned_report);
  return result;
}

}  // namespace besttime
