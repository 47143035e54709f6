#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "besttime/assembler.h"
#include "besttime/policy.h"
#include "besttime/signals.h"
#include "besttime/sim.h"

namespace besttime {

enum class Tier { kHigh, kLow };

std::string_view to_string(Tier tier);

struct UseCaseConfig {
  UseCaseId id;
  Tier tier = Tier::kHigh;
  AssemblerSpec spec;
  // Applied when a request carries no policy of its own.
  BestTimePolicy policy;
};

// Wiring for the scheduling service. Every use case metric must be provided
// by exactly one [[provider]].
struct DeploymentConfig {
  std::vector<SignalProvider> providers;
  std::map<UseCaseId, UseCaseConfig> use_cases;
  sim::EngagementModel engagement;
  std::optional<std::filesystem::path> store_path;

  // Throws kConfiguration.
  void validate() const;
  // Throws kNotFound.
  const UseCaseConfig& use_case(const UseCaseId& id) const;
  const SignalProvider* provider(const MetricId& metric) const;
};

// TOML documents. Unknown keys and type mismatches throw kConfiguration with
// the offending key path. Relative store paths resolve against `base_dir`.
DeploymentConfig parse_deployment_config(std::string_view text,
                                         const std::filesystem::path& base_dir = {});
DeploymentConfig load_deployment_config(const std::filesystem::path& file);

sim::ExperimentConfig parse_experiment_config(std::string_view text);
sim::ExperimentConfig load_experiment_config(const std::filesystem::path& file);

// TOML fragment for a learned spec, readable as a [[use_case]] entry.
std::string format_assembler_spec(const AssemblerSpec& spec);

}  // namespace besttime
