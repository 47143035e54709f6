#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "besttime/temporal.h"

namespace besttime {

// Per-use-case combination weights over an ordered metric list.
struct AssemblerSpec {
  UseCaseId use_case;
  std::vector<MetricId> metrics;
  std::map<MetricId, double> weights;

  // Throws kInvalidArgument unless metrics and weights name the same set,
  // every weight is finite and >= 0, and at least one weight is positive.
  void validate() const;
  double weight(const MetricId& metric) const;
};

// Per slot: sum_m weight_m * activity_m * score_m, divided by
// sum_m weight_m * activity_m. Slots missing from a metric's map (or a metric
// with no map at all) contribute 0 for that metric. The result covers the
// union of input slots and is tagged with metric id "assembled:<use_case>".
//
// Throws kDegenerateAssembly when the spec has no metrics or the effective
// weight sum is zero, kInvalidArgument when activity levels are missing or the
// maps disagree on the user.
TemporalActivityMap assemble(const AssemblerSpec& spec,
                             const std::map<MetricId, TemporalActivityMap>& maps,
                             const std::map<MetricId, double>& activity_levels);

// Number of slots ranked strictly ahead of `slot`: higher score, or equal
// score and lower slot index. Throws kNotFound when the slot is absent.
int predicted_rank_index(const TemporalActivityMap& map, int slot);

// predicted_rank_index for every slot at once.
std::map<int, int> rank_indices(const TemporalActivityMap& map);

struct GroundTruthRanking {
  UserId user;
  UseCaseId use_case;
  // Best first, no duplicates.
  std::vector<int> ordered_slots;
  // Optional explicit rank targets parallel to ordered_slots (non-decreasing).
  // Empty means the 0-based position.
  std::vector<double> actual_ranks;

  double actual_rank(std::size_t position) const;
  void validate() const;
};

// One user's training row set for one use case.
struct TrainingExample {
  std::map<MetricId, double> activity_levels;
  // slot -> metric -> predicted rank from that metric's map.
  std::map<int, std::map<MetricId, double>> metric_ranks;
  GroundTruthRanking truth;
};

struct RankLossReport {
  double loss = 0.0;
  std::size_t n = 0;
  std::map<MetricId, double> weights;
};

// Mean over every (user, ground-truth slot) pair of
// (sum_m weight_m * activity_m * predicted_rank_m - actual_rank)^2.
RankLossReport rank_loss(const std::map<MetricId, double>& weights,
                         std::span<const TrainingExample> training);

struct LearnerConfig {
  // Metric order for the learned spec; defaults to the order of `init`.
  std::vector<MetricId> metrics;
  // Overrides the use case taken from the first example.
  std::optional<UseCaseId> use_case;
  // Ridge strength, relative to the mean diagonal of the normal matrix.
  double ridge_lambda = 1e-3;
  // Relative eigenvalue floor below which the normal matrix counts as
  // singular.
  double singular_tolerance = 1e-10;
  int max_iterations = 500;
};

struct LearnResult {
  AssemblerSpec spec;
  RankLossReport report;
  RankLossReport init_report;
  bool ridge_fallback = false;
  // The solved weights did not beat init, so init was returned.
  bool kept_init = false;
};

// Non-negative least squares fit of the rank loss. Singular or
// underdetermined systems are solved with the ridge term and flagged.
LearnResult learn_weights(std::span<const TrainingExample> training,
                          const std::map<MetricId, double>& init,
                          const LearnerConfig& config = {});

}  // namespace besttime
