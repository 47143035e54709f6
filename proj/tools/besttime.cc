// Command-line surface for the scheduler: store maintenance, batch
// scheduling, weight learning, offline evaluation and simulation.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "besttime/assembler.h"
#include "besttime/codec.h"
#include "besttime/config.h"
#include "besttime/error.h"
#include "besttime/evaluation.h"
#include "besttime/service.h"
#include "besttime/sim.h"
#include "besttime/store.h"

namespace {

using namespace besttime;
namespace fs = std::filesystem;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot read '{}'", path));
  return in;
}

// Writes to `path`, or stdout when it is empty or "-".
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path, std::ios::binary | std::ios::trunc);
      if (!file_) throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", path));
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

std::string escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

std::optional<DeploymentConfig> maybe_config(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_deployment_config(path);
}

std::unique_ptr<SignalStore> open_store(const std::string& flag,
                                        const std::optional<DeploymentConfig>& config) {
  std::optional<fs::path> configured;
  if (!flag.empty()) {
    configured = fs::path(flag);
  } else if (config && config->store_path) {
    configured = config->store_path;
  }
  // An explicit --store wins over the environment; the environment wins over
  // the config file.
  const auto path = flag.empty() ? resolve_store_path(configured) : configured;
  if (!path) return std::make_unique<SignalStore>();
  return std::make_unique<SignalStore>(*path);
}

const DeploymentConfig& require_config(const std::optional<DeploymentConfig>& config) {
  if (!config) throw Error(ErrorCode::kConfiguration, "--config is required");
  return *config;
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

// --- schedule ---------------------------------------------------------------

struct ScheduleArgs {
  std::string in, out, config, store;
  Seed seed = 0;
  int workers = 1;
};

int run_schedule(const ScheduleArgs& a) {
  const auto config = maybe_config(a.config);
  const DeploymentConfig& deployment = require_config(config);
  auto store = open_store(a.store, config);
  auto in = open_in(a.in);
  const auto lines = read_lines(in);

  std::vector<SchedulingRequest> requests(lines.size());
  std::vector<std::optional<RequestError>> parse_errors(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      requests[i] = request_from_json(codec::Json::parse(lines[i]), deployment);
    } catch (const codec::Json::exception& e) {
      parse_errors[i] = RequestError{i, {}, {}, ErrorCode::kParse, e.what()};
    } catch (const Error& e) {
      parse_errors[i] = RequestError{i, {}, {}, e.code(), e.what()};
    }
  }
  const auto results = handle_batch(requests, *store, deployment, a.seed, a.workers);
  Output out(a.out);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const bool error = parse_errors[i] || std::holds_alternative<RequestError>(results[i]);
    failed += error ? 1 : 0;
    out.stream() << (parse_errors[i] ? to_json(*parse_errors[i]) : to_json(results[i])).dump()
                 << '\n';
  }
  std::cerr << fmt::format("scheduled {} of {} requests\n", results.size() - failed,
                           results.size());
  return 0;
}

// --- ingest -----------------------------------------------------------------

int run_ingest(const std::string& in_path, const std::string& merge_path,
               const std::string& out_path, int workers) {
  auto in = open_in(in_path);
  const auto events = codec::read_events_csv(in);
  CounterTable table;
  if (!merge_path.empty()) {
    auto existing = open_in(merge_path);
    for (const auto& c : codec::read_counters_csv(existing)) table.merge(c);
  }
  std::vector<std::thread> pool;
  const auto threads = static_cast<std::size_t>(std::max(1, workers));
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < events.size(); i += threads) {
        const auto& e = events[i];
        table.record(e.user, e.channel, e.time, e.utc_offset_minutes);
      }
    });
  }
  for (auto& th : pool) th.join();
  const auto counters = table.counters();
  Output out(out_path);
  codec::write_counters_csv(out.stream(), counters);
  std::cerr << fmt::format("ingested {} events into {} counters\n", events.size(),
                           counters.size());
  return 0;
}

// --- publish ----------------------------------------------------------------

struct PublishArgs {
  std::string maps, counters, levels, config, store;
  int day = -1;
  std::optional<std::size_t> expected;
};

int run_publish(const PublishArgs& a) {
  const auto config = maybe_config(a.config);
  auto store = open_store(a.store, config);
  if (!store->directory()) {
    throw Error(ErrorCode::kConfiguration, "publish needs --store, BESTTIME_STORE or store_path");
  }
  std::vector<TemporalActivityMap> maps;
  if (!a.maps.empty()) {
    auto in = open_in(a.maps);
    maps = codec::read_maps_csv(in);
  }
  if (!a.counters.empty()) {
    auto in = open_in(a.counters);
    const auto counters = codec::read_counters_csv(in);
    const auto derived = maps_from_counters(counters, require_config(config), a.day);
    maps.insert(maps.end(), derived.begin(), derived.end());
  }
  std::vector<codec::ActivityLevelRow> levels;
  if (!a.levels.empty()) {
    auto in = open_in(a.levels);
    levels = codec::read_levels_csv(in);
  }
  const auto version = store->publish_maps(a.day, maps, levels, a.expected);
  std::cout << fmt::format("published day {} version {} maps {}\n", a.day, version,
                           maps.size());
  return 0;
}

// --- learn-weights ----------------------------------------------------------

int run_learn(const std::string& in_path, const std::string& use_case,
              const std::string& out_path) {
  auto in = open_in(in_path);
  const auto training = codec::read_training_csv(in, use_case);
  if (training.empty()) throw Error(ErrorCode::kInvalidArgument, "no training rows");
  std::set<MetricId> seen;
  LearnerConfig cfg;
  cfg.use_case = use_case;
  for (const auto& ex : training) {
    for (const auto& [slot, ranks] : ex.metric_ranks) {
      for (const auto& [metric, rank] : ranks) {
        if (seen.insert(metric).second) cfg.metrics.push_back(metric);
      }
    }
  }
  std::map<MetricId, double> init;
  for (const auto& m : cfg.metrics) init[m] = 1.0;
  const LearnResult result = learn_weights(training, init, cfg);

  Output out(out_path);
  auto& os = out.stream();
  os << fmt::format("# rank loss {} over {} rows (init {})\n",
                    codec::format_double(result.report.loss), result.report.n,
                    codec::format_double(result.init_report.loss));
  if (result.ridge_fallback) os << "# ridge fallback: normal matrix was singular\n";
  if (result.kept_init) os << "# kept init weights: solution did not lower the loss\n";
  const MetricId& anchor = result.spec.metrics.front();
  for (const auto& m : result.spec.metrics) {
    if (m == anchor || result.spec.weight(anchor) <= 0.0) continue;
    os << fmt::format("# ratio {}/{} = {}\n", m, anchor,
                      codec::format_double(result.spec.weight(m) / result.spec.weight(anchor)));
  }
  os << format_assembler_spec(result.spec);
  return 0;
}

// --- evaluate ---------------------------------------------------------------

int run_evaluate(const std::string& predictions_path, const std::string& actuals_path,
                 const std::string& levels_path, int k, const std::string& out_path,
                 const std::string& cohort_path) {
  auto pin = open_in(predictions_path);
  const auto maps = codec::read_maps_csv(pin);
  auto ain = open_in(actuals_path);
  std::map<UserId, std::map<int, double>> gains;
  for (const auto& row : codec::read_gains_csv(ain)) gains[row.user][row.slot] = row.gain;

  std::vector<NdcgReport> reports;
  for (const auto& map : maps) {
    auto it = gains.find(map.user());
    if (it == gains.end()) continue;
    std::vector<std::pair<int, int>> order;
    for (const auto& [slot, rank] : rank_indices(map)) order.emplace_back(rank, slot);
    std::sort(order.begin(), order.end());
    std::vector<int> predicted;
    for (const auto& [rank, slot] : order) predicted.push_back(slot);
    reports.push_back(ndcg(predicted, it->second, k, map.user()));
  }
  if (reports.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no user has both predictions and actuals");
  }
  Output out(out_path);
  out.stream() << "user,k,ndcg,all_zero_gains\n";
  for (const auto& r : reports) {
    out.stream() << fmt::format("{},{},{:.9f},{}\n", r.user, r.k, r.ndcg,
                                r.all_zero_gains ? 1 : 0);
  }
  const NdcgSummary summary = summarize(reports);
  std::cerr << fmt::format("users {}  mean ndcg@{} {:.6f}  all-zero {}\n", summary.users,
                           k, summary.mean_ndcg, summary.all_zero_users);

  if (!levels_path.empty()) {
    auto lin = open_in(levels_path);
    std::map<UserId, std::map<MetricId, double>> levels;
    std::vector<MetricId> metrics;
    for (const auto& row : codec::read_levels_csv(lin)) {
      if (std::find(metrics.begin(), metrics.end(), row.metric) == metrics.end()) {
        metrics.push_back(row.metric);
      }
      levels[row.user][row.metric] = row.level;
    }
    const int dims = std::min<int>(2, static_cast<int>(metrics.size()));
    std::vector<CohortRow> rows;
    for (const auto& r : reports) {
      CohortRow row{r.user, {}, r.ndcg};
      for (int d = 0; d < dims; ++d) {
        const auto& per_user = levels[r.user];
        auto it = per_user.find(metrics[static_cast<std::size_t>(d)]);
        row.activity.push_back(it == per_user.end() ? 0.0 : it->second);
      }
      rows.push_back(std::move(row));
    }
    const CohortTable table = cohort_report(rows, dims);
    if (!cohort_path.empty()) {
      Output cohort(cohort_path);
      write_cohort_csv(cohort.stream(), table);
    } else {
      write_cohort_table(std::cerr, table);
    }
  }
  return 0;
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string config, out, cohort_out;
  std::optional<int> workers;
  std::optional<Seed> seed;
  std::optional<std::size_t> users;
};

int run_simulate(const SimulateArgs& a) {
  sim::ExperimentConfig config = load_experiment_config(a.config);
  if (a.workers) config.workers = *a.workers;
  if (a.seed) config.seed = *a.seed;
  if (a.users) config.population.size = *a.users;
  const sim::ExperimentResult result = sim::run_experiment(config);
  sim::write_result_table(std::cout, result);
  if (!a.out.empty()) {
    Output out(a.out);
    sim::write_result_csv(out.stream(), result);
  }
  if (!a.cohort_out.empty() && result.cohort) {
    Output out(a.cohort_out);
    write_cohort_csv(out.stream(), *result.cohort);
  }
  return 0;
}

// --- serve ------------------------------------------------------------------

int run_serve(const std::string& config_path, const std::string& store_flag, Seed seed,
              int workers) {
  const auto config = maybe_config(config_path);
  auto store = open_store(store_flag, config);
  Service service(require_config(config), *store, seed, workers);
  service.serve(std::cin, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-user delivery time optimization for scheduled jobs"};
  app.require_subcommand(1);
  int code = 0;

  ScheduleArgs sched;
  auto* schedule = app.add_subcommand("schedule", "Schedule a JSON-lines request batch");
  schedule->add_option("--in", sched.in, "Requests, one JSON object per line")->required();
  schedule->add_option("--out", sched.out, "Plans (default stdout)");
  schedule->add_option("--config", sched.config, "Deployment config (TOML)")->required();
  schedule->add_option("--store", sched.store, "Store directory");
  schedule->add_option("--seed", sched.seed, "Batch seed");
  schedule->add_option("--workers", sched.workers, "Scheduling threads")
      ->check(CLI::PositiveNumber);

  std::string ingest_in, ingest_merge, ingest_out;
  int ingest_workers = 1;
  auto* ingest = app.add_subcommand("ingest", "Fold activity events into counters");
  ingest->add_option("--in", ingest_in, "Events CSV")->required();
  ingest->add_option("--merge", ingest_merge, "Existing counters CSV to add to");
  ingest->add_option("--out", ingest_out, "Counters CSV (default stdout)");
  ingest->add_option("--workers", ingest_workers, "Ingestion threads")
      ->check(CLI::PositiveNumber);

  PublishArgs pub;
  std::optional<std::size_t> expected;
  auto* publish = app.add_subcommand("publish", "Publish one day-of-week partition");
  publish->add_option("--day", pub.day, "Day of week, 0 = Sunday")->required();
  auto* maps_opt = publish->add_option("--in", pub.maps, "Maps CSV");
  auto* counters_opt =
      publish->add_option("--counters", pub.counters, "Counters CSV to derive maps from");
  publish->add_option("--levels", pub.levels, "Activity levels CSV");
  publish->add_option("--config", pub.config, "Deployment config (TOML)");
  publish->add_option("--store", pub.store, "Store directory");
  publish->add_option("--expect", expected, "Reject unless exactly this many maps");
  maps_opt->excludes(counters_opt);

  std::string learn_in, learn_use_case = "default", learn_out;
  auto* learn = app.add_subcommand("learn-weights", "Fit assembler weights to ranks");
  learn->add_option("--in", learn_in, "Training CSV")->required();
  learn->add_option("--use-case", learn_use_case, "Use case id for the spec");
  learn->add_option("--out", learn_out, "Spec TOML (default stdout)");

  std::string eval_pred, eval_actual, eval_levels, eval_out, eval_cohort;
  int eval_k = 3;
  auto* evaluate = app.add_subcommand("evaluate", "NDCG of predicted maps against actuals");
  evaluate->add_option("--predictions", eval_pred, "Maps CSV")->required();
  evaluate->add_option("--actuals", eval_actual, "Gains CSV (user,slot,gain)")->required();
  evaluate->add_option("--k", eval_k, "NDCG cutoff")->check(CLI::PositiveNumber);
  evaluate->add_option("--levels", eval_levels, "Activity levels CSV for a cohort report");
  evaluate->add_option("--out", eval_out, "Per-user NDCG CSV (default stdout)");
  evaluate->add_option("--cohort-out", eval_cohort, "Cohort grid CSV");

  SimulateArgs simargs;
  auto* simulate = app.add_subcommand("simulate", "Run an experiment config");
  simulate->add_option("--config", simargs.config, "Experiment config (TOML)")->required();
  simulate->add_option("--out", simargs.out, "Result CSV");
  simulate->add_option("--cohort-out", simargs.cohort_out, "Cohort grid CSV");
  simulate->add_option("--workers", simargs.workers, "Simulation threads")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--seed", simargs.seed, "Override the master seed");
  simulate->add_option("--users", simargs.users, "Override the population size");

  std::string serve_config, serve_store;
  Seed serve_seed = 0;
  int serve_workers = 1;
  auto* serve = app.add_subcommand("serve", "JSON-lines endpoint on stdin/stdout");
  serve->add_option("--config", serve_config, "Deployment config (TOML)")->required();
  serve->add_option("--store", serve_store, "Store directory");
  serve->add_option("--seed", serve_seed, "Default batch seed");
  serve->add_option("--workers", serve_workers, "Threads per batch")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*schedule) {
      code = run_schedule(sched);
    } else if (*ingest) {
      code = run_ingest(ingest_in, ingest_merge, ingest_out, ingest_workers);
    } else if (*publish) {
      if (pub.maps.empty() && pub.counters.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "publish needs --in or --counters");
      }
      pub.expected = expected;
      code = run_publish(pub);
    } else if (*learn) {
      code = run_learn(learn_in, learn_use_case, learn_out);
    } else if (*evaluate) {
      code = run_evaluate(eval_pred, eval_actual, eval_levels, eval_k, eval_out, eval_cohort);
    } else if (*simulate) {
      code = run_simulate(simargs);
    } else if (*serve) {
      code = run_serve(serve_config, serve_store, serve_seed, serve_workers);
    }
  } catch (const Error& e) {
    std::cerr << fmt::format("error code={} message=\"{}\"\n", to_string(e.code()),
                             escape(e.what()));
    return 2;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error code=internal message=\"{}\"\n", escape(e.what()));
    return 3;
  }
  return code;
}
