#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "besttime/evaluation.h"
#include "besttime/policy.h"
#include "besttime/random.h"
#include "besttime/signals.h"
#include "besttime/temporal.h"

// Synthetic multi-tenant world used to compare policies, assemblers and
// coordination settings under paired designs. Every random draw is keyed by
// (seed, user, ...) so results do not depend on worker count or iteration
// order, and arms sharing a seed see the same noise.
namespace besttime::sim {

inline constexpr int kChannelA = 0;
inline constexpr int kChannelB = 1;

// Engagement probability per local (day_of_week * 24 + hour).
using Curve = std::array<double, kHoursPerWeek>;

struct PopulationConfig {
  std::size_t size = 1000;
  int channels = 2;
  // Probability that a bump on channel k > 0 copies channel 0's bump.
  double rho = 1.0;
  int min_bumps = 1;
  int max_bumps = 3;
  double center_min = 0.0;
  double center_max = 24.0;
  double amplitude_min = 0.2;
  double amplitude_max = 0.6;
  double width_min = 1.5;
  double width_max = 3.5;
  double baseline = 0.02;
  // Each day scales the bumps by a factor drawn from [1 - v, 1].
  double day_variation = 0.1;
  std::vector<int> utc_offsets_minutes = {0};
  // Per-channel activity level range; the last entry repeats.
  std::vector<double> activity_min = {0.0};
  std::vector<double> activity_max = {1.0};
  double noise_scale = 0.2;

  void validate() const;
};

struct SyntheticUser {
  std::size_t index = 0;
  UserId id;
  int utc_offset_minutes = 0;
  std::vector<std::vector<Bump>> bumps;  // per channel
  std::vector<Curve> curves;             // per channel, local time
  std::vector<double> activity;          // per channel
  double noise_scale = 0.0;
};

std::vector<SyntheticUser> generate_population(const PopulationConfig& config,
                                               Seed seed);

// Curve value at the local hour of a server timestamp.
double engagement_probability(const SyntheticUser& user, int channel,
                              Timestamp server_time);

struct ObservationConfig {
  int history_weeks = 4;
  // Expected events per hour at curve value 1 and full channel activity.
  double events_per_hour = 3.0;
};

// Poisson event counts per server-time bucket over the history window, with
// rate scaled by channel activity and log-normal noise.
ActivityCounter observe_counter(const SyntheticUser& user, int channel,
                                const ObservationConfig& config, Seed seed);

enum class ShareRule { kNone, kInverse, kPower };

struct EngagementModel {
  // Multiplier per earlier same-day execution of the same use case within
  // `decay_window` slots.
  double decay = 0.5;
  int decay_window = 1;
  // How c use cases executing in one slot split engagement.
  ShareRule share_rule = ShareRule::kInverse;
  double share_exponent = 1.0;  // kPower: c^-exponent

  double share(int concurrent) const;
  void validate() const;
};

struct DayContext {
  int day_index = 0;
  Timestamp day_start = 0;
  Seconds slot_length = kSecondsPerHour;
  int channel = kChannelA;
};

struct Outcome {
  std::size_t user = 0;
  std::size_t use_case = 0;
  int slot = 0;
  double probability = 0.0;
  bool engaged = false;
};

// plans[use_case][i] belongs to users[i]. Each execution engages with
// probability curve(slot) * decay^prior * share(concurrent), decided by a
// uniform keyed on (seed, user, use case, day, slot).
std::vector<Outcome> simulate_day(std::span<const SyntheticUser> users,
                                  const std::vector<std::vector<ExecutionPlan>>& plans,
                                  const EngagementModel& model,
                                  const DayContext& day, Seed seed);

// --- Experiments ------------------------------------------------------------

enum class ExperimentKind { kPolicyComparison, kAssembly, kCoordination };

std::string_view to_string(ExperimentKind kind);

struct ArmSpec {
  std::string name;
  BestTimePolicy policy;
  // Ranks slots by the true engagement curve instead of observed signals.
  bool oracle = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kPolicyComparison;
  PopulationConfig population;
  ObservationConfig observation;
  EngagementModel engagement;
  int days = 1;
  int n = 3;
  Seconds slot_length = kSecondsPerHour;
  Seed seed = 1;
  int workers = 1;
  int bootstrap = 1000;
  double confidence = 0.95;

  // Policy comparison arms; the first is the control.
  std::vector<ArmSpec> arms;
  // Simulate each avoid-nearby arm, and the control it is paired with, in a
  // world whose decay window equals the arm's w. Otherwise every arm shares
  // engagement.decay_window.
  bool arm_decay_window = true;
  // Policy used by the assembly and coordination experiments.
  BestTimePolicy policy;
  // Assembly: weight on channel B in  A + weight * activity_B * B.
  double assembly_weight = 0.01;
  // Coordination: total use cases, the first `high_priority` are high tier.
  int use_cases = 10;
  int high_priority = 5;

  void validate() const;
};

struct LiftEstimate {
  double lift = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  bool excludes_zero() const { return lo > 0.0 || hi < 0.0; }
};

struct ArmResult {
  std::string name;
  double engagements = 0.0;
  double expected_engagements = 0.0;
  std::int64_t executions = 0;
  std::int64_t truncated = 0;
  double efficiency = 0.0;
  // Decay window of the world this arm ran in.
  int decay_window = 0;
  // Efficiency of the paired control in that same world.
  double control_efficiency = 0.0;
  // Against the paired control; zero-width for the control itself.
  LiftEstimate lift;
};

struct ExperimentResult {
  ExperimentKind kind = ExperimentKind::kPolicyComparison;
  std::vector<ArmResult> arms;
  // Coordination only: "<arm>/high" and "<arm>/low" rows.
  std::vector<ArmResult> tiers;
  // Assembly only: per-user expected engagement gain per execution over
  // (A activity, B activity) deciles.
  std::optional<CohortTable> cohort;
  std::int64_t requested_executions = 0;  // per arm
};

// Paired percentile bootstrap over users of
// (sum test_eng / sum test_exec) / (sum ctl_eng / sum ctl_exec) - 1.
LiftEstimate bootstrap_lift(std::span<const double> test_engagements,
                            std::span<const double> test_executions,
                            std::span<const double> control_engagements,
                            std::span<const double> control_executions,
                            int resamples, double confidence, Seed seed);

ExperimentResult run_policy_comparison(const ExperimentConfig& config);
ExperimentResult run_assembly_experiment(const ExperimentConfig& config);
ExperimentResult run_coordination_experiment(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

void write_result_csv(std::ostream& out, const ExperimentResult& result);
void write_result_table(std::ostream& out, const ExperimentResult& result);

}  // namespace besttime::sim
