#include "besttime/config.h"

#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>
#include <toml.hpp>

#include "besttime/codec.h"
#include "besttime/error.h"

namespace besttime {
namespace {

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorCode::kConfiguration, message);
}

// Typed access to one TOML table that remembers which keys were read, so
// anything left over can be reported as unknown.
class TableReader {
 public:
  TableReader(const toml::table& table, std::string path)
      : table_(table), path_(std::move(path)) {}

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : fmt::format("{}.{}", path_, key);
  }

  template <typename T>
  std::optional<T> get(std::string_view key) {
    used_.emplace(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return std::nullopt;
    if constexpr (std::is_same_v<T, int>) {
      auto v = node->value_exact<std::int64_t>();
      if (!v) config_error(fmt::format("{}: expected an integer", key_path(key)));
      return static_cast<int>(*v);
    } else if constexpr (std::is_same_v<T, std::uint64_t> ||
                         std::is_same_v<T, std::size_t>) {
      auto v = node->value_exact<std::int64_t>();
      if (!v || *v < 0) {
        config_error(fmt::format("{}: expected a non-negative integer", key_path(key)));
      }
      return static_cast<T>(*v);
    } else if constexpr (std::is_same_v<T, double>) {
      auto v = node->value<double>();
      if (!v) config_error(fmt::format("{}: expected a number", key_path(key)));
      return *v;
    } else if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value_exact<bool>();
      if (!v) config_error(fmt::format("{}: expected a boolean", key_path(key)));
      return *v;
    } else {
      auto v = node->value_exact<std::string>();
      if (!v) config_error(fmt::format("{}: expected a string", key_path(key)));
      return *v;
    }
  }

  template <typename T>
  void read(std::string_view key, T& target) {
    if (auto v = get<T>(key)) target = *v;
  }

  template <typename T>
  T require(std::string_view key) {
    auto v = get<T>(key);
    if (!v) config_error(fmt::format("{}: required key missing", key_path(key)));
    return *v;
  }

  template <typename T>
  std::optional<std::vector<T>> get_list(std::string_view key) {
    used_.emplace(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return std::nullopt;
    const toml::array* array = node->as_array();
    if (array == nullptr) config_error(fmt::format("{}: expected an array", key_path(key)));
    std::vector<T> out;
    for (const auto& item : *array) {
      std::optional<T> v;
      if constexpr (std::is_same_v<T, int>) {
        if (auto i = item.value_exact<std::int64_t>()) v = static_cast<int>(*i);
      } else {
        v = item.value<T>();
      }
      if (!v) config_error(fmt::format("{}: bad array element", key_path(key)));
      out.push_back(*v);
    }
    return out;
  }

  const toml::table* table(std::string_view key) {
    used_.emplace(key);
    const toml::node* node = table_.get(key);
    if (node == nullptr) return nullptr;
    if (!node->is_table()) config_error(fmt::format("{}: expected a table", key_path(key)));
    return node->as_table();
  }

  std::vector<const toml::table*> tables(std::string_view key) {
    used_.emplace(key);
    std::vector<const toml::table*> out;
    const toml::node* node = table_.get(key);
    if (node == nullptr) return out;
    const toml::array* array = node->as_array();
    if (array == nullptr) {
      config_error(fmt::format("{}: expected an array of tables", key_path(key)));
    }
    for (const auto& item : *array) {
      if (!item.is_table()) {
        config_error(fmt::format("{}: expected an array of tables", key_path(key)));
      }
      out.push_back(item.as_table());
    }
    return out;
  }

  // Throws for any key that was never asked for.
  void finish() const {
    for (const auto& [key, node] : table_) {
      if (!used_.contains(std::string(key.str()))) {
        config_error(fmt::format("{}: unknown key", key_path(key.str())));
      }
    }
  }

 private:
  const toml::table& table_;
  std::string path_;
  std::set<std::string, std::less<>> used_;
};

toml::table parse_toml(std::string_view text) {
  try {
    return toml::parse(text);
  } catch (const toml::parse_error& e) {
    const auto& where = e.source().begin;
    config_error(fmt::format("toml line {} column {}: {}", where.line, where.column,
                             e.description()));
  }
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot read '{}'", file.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Re-raises validation failures from the core types as configuration errors.
template <typename Fn>
void validate_as_config(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfiguration) throw;
    config_error(fmt::format("{}: {}", where, e.what()));
  }
}

BestTimePolicy read_policy(TableReader& reader, BestTimePolicy policy) {
  if (auto kind = reader.get<std::string>("kind")) {
    validate_as_config(reader.key_path("kind"),
                       [&] { policy.kind = parse_policy_kind(*kind); });
  }
  reader.read("w", policy.w);
  if (auto priority = reader.get<std::string>("priority")) {
    validate_as_config(reader.key_path("priority"),
                       [&] { policy.priority = parse_priority(*priority); });
  }
  reader.read("refill", policy.refill);
  return policy;
}

BestTimePolicy read_policy_table(const toml::table* table, const std::string& path,
                                 BestTimePolicy policy = {}) {
  if (table == nullptr) return policy;
  TableReader reader(*table, path);
  policy = read_policy(reader, policy);
  reader.finish();
  validate_as_config(path, [&] { policy.validate(); });
  return policy;
}

sim::EngagementModel read_engagement(const toml::table* table) {
  sim::EngagementModel model;
  if (table == nullptr) return model;
  TableReader reader(*table, "engagement");
  reader.read("decay", model.decay);
  reader.read("decay_window", model.decay_window);
  if (auto share = reader.get<std::string>("share")) {
    if (*share == "none") {
      model.share_rule = sim::ShareRule::kNone;
    } else if (*share == "inverse") {
      model.share_rule = sim::ShareRule::kInverse;
    } else if (*share == "power") {
      model.share_rule = sim::ShareRule::kPower;
    } else {
      config_error(fmt::format("engagement.share: unknown rule '{}'", *share));
    }
  }
  reader.read("share_exponent", model.share_exponent);
  reader.finish();
  model.validate();
  return model;
}

SignalProvider read_provider(const toml::table& table, std::size_t index) {
  const std::string path = fmt::format("provider[{}]", index);
  TableReader reader(table, path);
  SignalProvider provider;
  provider.metric = reader.require<std::string>("metric");
  const auto kind = reader.get<std::string>("kind").value_or("counter");
  if (kind == "counter") {
    provider.kind = ProviderKind::kCounter;
  } else if (kind == "predictor") {
    provider.kind = ProviderKind::kPredictor;
  } else {
    config_error(fmt::format("{}.kind: unknown provider kind '{}'", path, kind));
  }
  provider.channel = reader.get<std::string>("channel").value_or(provider.metric);
  if (const toml::table* params = reader.table("parameters")) {
    for (const auto& [key, node] : *params) {
      if (auto s = node.value_exact<std::string>()) {
        provider.parameters[std::string(key.str())] = *s;
      } else if (auto d = node.value<double>()) {
        provider.parameters[std::string(key.str())] = codec::format_double(*d);
      } else {
        config_error(fmt::format("{}.parameters.{}: expected a string or number", path,
                                 key.str()));
      }
    }
  }
  reader.finish();
  if (provider.kind == ProviderKind::kPredictor) {
    // Surface bad shapes at load time rather than on the first request.
    const std::vector<TimeSlot> probe{{0, 0, kSecondsPerHour}};
    synthetic_predictor_signal(provider, "probe", probe);
  }
  return provider;
}

UseCaseConfig read_use_case(const toml::table& table, std::size_t index) {
  const std::string path = fmt::format("use_case[{}]", index);
  TableReader reader(table, path);
  UseCaseConfig uc;
  uc.id = reader.require<std::string>("id");
  const auto tier = reader.get<std::string>("tier").value_or("high");
  if (tier == "high") {
    uc.tier = Tier::kHigh;
  } else if (tier == "low") {
    uc.tier = Tier::kLow;
  } else {
    config_error(fmt::format("{}.tier: expected 'high' or 'low', got '{}'", path, tier));
  }
  uc.spec.use_case = uc.id;
  uc.spec.metrics = reader.get_list<std::string>("metrics").value_or(std::vector<MetricId>{});
  if (const toml::table* weights = reader.table("weights")) {
    for (const auto& [key, node] : *weights) {
      auto w = node.value<double>();
      if (!w) config_error(fmt::format("{}.weights.{}: expected a number", path, key.str()));
      uc.spec.weights[std::string(key.str())] = *w;
    }
  } else {
    for (const auto& m : uc.spec.metrics) uc.spec.weights[m] = 1.0;
  }
  uc.policy = read_policy_table(reader.table("policy"), path + ".policy");
  reader.finish();
  validate_as_config(path, [&] { uc.spec.validate(); });
  return uc;
}

}  // namespace

std::string_view to_string(Tier tier) {
  return tier == Tier::kHigh ? "high" : "low";
}

void DeploymentConfig::validate() const {
  std::set<MetricId> metrics;
  for (const auto& p : providers) {
    if (!metrics.insert(p.metric).second) {
      config_error(fmt::format("metric '{}' has more than one provider", p.metric));
    }
  }
  if (use_cases.empty()) config_error("no use cases configured");
  for (const auto& [id, uc] : use_cases) {
    for (const auto& m : uc.spec.metrics) {
      if (!metrics.contains(m)) {
        config_error(fmt::format("use case '{}' references unknown metric '{}'", id, m));
      }
    }
  }
  engagement.validate();
}

const UseCaseConfig& DeploymentConfig::use_case(const UseCaseId& id) const {
  auto it = use_cases.find(id);
  if (it == use_cases.end()) {
    throw Error(ErrorCode::kNotFound, fmt::format("unknown use case '{}'", id));
  }
  return it->second;
}

const SignalProvider* DeploymentConfig::provider(const MetricId& metric) const {
  for (const auto& p : providers) {
    if (p.metric == metric) return &p;
  }
  return nullptr;
}

DeploymentConfig parse_deployment_config(std::string_view text,
                                         const std::filesystem::path& base_dir) {
  const toml::table doc = parse_toml(text);
  TableReader reader(doc, "");
  DeploymentConfig config;
  if (auto store = reader.get<std::string>("store_path")) {
    std::filesystem::path p(*store);
    config.store_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  const auto providers = reader.tables("provider");
  for (std::size_t i = 0; i < providers.size(); ++i) {
    config.providers.push_back(read_provider(*providers[i], i));
  }
  const auto use_cases = reader.tables("use_case");
  for (std::size_t i = 0; i < use_cases.size(); ++i) {
    UseCaseConfig uc = read_use_case(*use_cases[i], i);
    const UseCaseId id = uc.id;
    if (!config.use_cases.emplace(id, std::move(uc)).second) {
      config_error(fmt::format("use case '{}' defined twice", id));
    }
  }
  config.engagement = read_engagement(reader.table("engagement"));
  reader.finish();
  config.validate();
  return config;
}

DeploymentConfig load_deployment_config(const std::filesystem::path& file) {
  return parse_deployment_config(read_file(file), file.parent_path());
}

sim::ExperimentConfig parse_experiment_config(std::string_view text) {
  const toml::table doc = parse_toml(text);
  TableReader root(doc, "");
  sim::ExperimentConfig config;

  if (const toml::table* t = root.table("experiment")) {
    TableReader r(*t, "experiment");
    const auto kind = r.get<std::string>("kind").value_or("policy_comparison");
    if (kind == "policy_comparison") {
      config.kind = sim::ExperimentKind::kPolicyComparison;
    } else if (kind == "assembly") {
      config.kind = sim::ExperimentKind::kAssembly;
    } else if (kind == "coordination") {
      config.kind = sim::ExperimentKind::kCoordination;
    } else {
      config_error(fmt::format("experiment.kind: unknown kind '{}'", kind));
    }
    r.read("days", config.days);
    r.read("n", config.n);
    if (auto len = r.get<int>("slot_length")) config.slot_length = *len;
    r.read("seed", config.seed);
    r.read("workers", config.workers);
    r.read("bootstrap", config.bootstrap);
    r.read("confidence", config.confidence);
    r.read("assembly_weight", config.assembly_weight);
    r.read("arm_decay_window", config.arm_decay_window);
    r.read("use_cases", config.use_cases);
    r.read("high_priority", config.high_priority);
    config.policy = read_policy_table(r.table("policy"), "experiment.policy");
    r.finish();
  }
  if (const toml::table* t = root.table("population")) {
    TableReader r(*t, "population");
    auto& p = config.population;
    r.read("size", p.size);
    r.read("channels", p.channels);
    r.read("rho", p.rho);
    r.read("min_bumps", p.min_bumps);
    r.read("max_bumps", p.max_bumps);
    r.read("center_min", p.center_min);
    r.read("center_max", p.center_max);
    r.read("amplitude_min", p.amplitude_min);
    r.read("amplitude_max", p.amplitude_max);
    r.read("width_min", p.width_min);
    r.read("width_max", p.width_max);
    r.read("baseline", p.baseline);
    r.read("day_variation", p.day_variation);
    if (auto offsets = r.get_list<int>("utc_offsets_minutes")) p.utc_offsets_minutes = *offsets;
    if (auto lo = r.get_list<double>("activity_min")) p.activity_min = *lo;
    if (auto hi = r.get_list<double>("activity_max")) p.activity_max = *hi;
    r.read("noise_scale", p.noise_scale);
    r.finish();
  }
  if (const toml::table* t = root.table("observation")) {
    TableReader r(*t, "observation");
    r.read("history_weeks", config.observation.history_weeks);
    r.read("events_per_hour", config.observation.events_per_hour);
    r.finish();
  }
  config.engagement = read_engagement(root.table("engagement"));
  const auto arms = root.tables("arm");
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const std::string path = fmt::format("arm[{}]", i);
    TableReader r(*arms[i], path);
    sim::ArmSpec arm;
    arm.name = r.require<std::string>("name");
    arm.policy = read_policy(r, {});
    r.read("oracle", arm.oracle);
    r.finish();
    validate_as_config(path, [&] { arm.policy.validate(); });
    config.arms.push_back(std::move(arm));
  }
  root.finish();
  if (config.kind == sim::ExperimentKind::kPolicyComparison && config.arms.empty()) {
    config.arms.push_back({"top_n", {}, false});
  }
  config.validate();
  return config;
}

sim::ExperimentConfig load_experiment_config(const std::filesystem::path& file) {
  return parse_experiment_config(read_file(file));
}

std::string format_assembler_spec(const AssemblerSpec& spec) {
  std::string out = "[[use_case]]\n";
  out += fmt::format("id = \"{}\"\n", spec.use_case);
  out += "metrics = [";
  for (std::size_t i = 0; i < spec.metrics.size(); ++i) {
    out += fmt::format("{}\"{}\"", i == 0 ? "" : ", ", spec.metrics[i]);
  }
  out += "]\n\n[use_case.weights]\n";
  for (const auto& m : spec.metrics) {
    out += fmt::format("\"{}\" = {}\n", m, codec::format_double(spec.weight(m)));
  }
  return out;
}

}  // namespace besttime
