#include "besttime/service.h"

#include <fmt/format.h>
#include <istream>
#include <map>
#include <optional>
#include <ostream>

#include "besttime/assembler.h"
#include "besttime/parallel.h"
#include "besttime/signals.h"

namespace besttime {
namespace {

using Snapshot = std::array<std::shared_ptr<const Partition>, SignalStore::kPartitions>;

struct MetricSignal {
  std::optional<TemporalActivityMap> map;
  double activity = 1.0;
};

// Average of the stored hourly scores over every hour the slot touches.
std::optional<double> stored_slot_score(const Snapshot& snapshot, const UserId& user,
                                        const MetricId& metric, const TimeSlot& slot) {
  double sum = 0.0;
  int found = 0;
  const Timestamp first = slot.start - (slot.start % kSecondsPerHour + kSecondsPerHour) %
                                           kSecondsPerHour;
  for (Timestamp t = first; t < slot.end(); t += kSecondsPerHour) {
    const auto& partition = snapshot[static_cast<std::size_t>(day_of_week(t))];
    const TemporalActivityMap* map = partition->find(user, metric);
    if (map == nullptr) continue;
    if (auto score = map->score(hour_of_day(t))) {
      sum += *score;
      ++found;
    }
  }
  if (found == 0) return std::nullopt;
  return sum / found;
}

MetricSignal counter_metric(const Snapshot& snapshot, const SchedulingRequest& request,
                            const MetricId& metric,
                            std::span<const TimeSlot> candidates) {
  MetricSignal signal;
  std::vector<SlotScore> entries;
  for (const auto& slot : candidates) {
    if (auto score = stored_slot_score(snapshot, request.user, metric, slot)) {
      entries.push_back({slot.index, *score});
    }
  }
  if (!entries.empty()) {
    signal.map.emplace(request.user, metric, std::move(entries));
  }
  const auto& partition = snapshot[static_cast<std::size_t>(day_of_week(request.t_start))];
  if (auto level = partition->activity_level(request.user, metric)) {
    signal.activity = *level;
  }
  return signal;
}

MetricSignal predictor_metric(const SignalProvider& provider,
                              const SchedulingRequest& request,
                              std::span<const TimeSlot> candidates) {
  // Predictors emit probabilities, so the unit interval is their natural range.
  const MetricBounds unit{provider.metric, 0.0, 1.0, "predictor range"};
  MetricSignal signal;
  signal.map = build_activity_map(request.user, provider.metric,
                                  synthetic_predictor_signal(provider, request.user,
                                                             candidates),
                                  unit);
  return signal;
}

ExecutionPlan schedule_one(const SchedulingRequest& request, const Snapshot& snapshot,
                           const DeploymentConfig& config, Seed batch_seed) {
  request.validate();
  const UseCaseConfig& use_case = config.use_case(request.use_case);
  AssemblerSpec spec = request.metric_spec.empty()
                           ? use_case.spec
                           : config.use_case(request.metric_spec).spec;
  spec.use_case = request.use_case;

  const auto candidates =
      partition_range(request.t_start, request.t_end, request.slot_length);
  std::map<MetricId, TemporalActivityMap> maps;
  std::map<MetricId, double> activity;
  for (const auto& metric : spec.metrics) {
    const SignalProvider* provider = config.provider(metric);
    if (provider == nullptr) {
      throw Error(ErrorCode::kConfiguration,
                  fmt::format("no provider for metric '{}'", metric));
    }
    MetricSignal signal = provider->kind == ProviderKind::kCounter
                              ? counter_metric(snapshot, request, metric, candidates)
                              : predictor_metric(*provider, request, candidates);
    activity[metric] = signal.activity;
    if (signal.map) maps.emplace(metric, std::move(*signal.map));
  }

  std::optional<TemporalActivityMap> assembled;
  if (!maps.empty()) {
    try {
      assembled = assemble(spec, maps, activity);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateAssembly) throw;
    }
  }
  const bool fallback = !assembled.has_value();
  if (fallback) {
    assembled = uniform_map(request.user, "uniform", candidates);
  }

  SchedulingRequest effective = request;
  if (use_case.tier == Tier::kLow) effective.policy.priority = Priority::kLow;
  ExecutionPlan plan = schedule(effective, *assembled, request_seed(batch_seed, request));
  plan.signal_fallback = fallback;
  return plan;
}

codec::Json error_json(ErrorCode code, std::string_view message) {
  return {{"ok", false},
          {"error", {{"code", std::string(to_string(code))}, {"message", message}}}};
}

}  // namespace

Seed request_seed(Seed batch_seed, const SchedulingRequest& request) {
  return derive_seed({batch_seed, stable_hash(request.use_case),
                      stable_hash(request.user),
                      static_cast<std::uint64_t>(request.t_start)});
}

std::vector<BatchResult> handle_batch(std::span<const SchedulingRequest> requests,
                                      const SignalStore& store,
                                      const DeploymentConfig& config, Seed seed,
                                      int workers) {
  const Snapshot snapshot = store.snapshot_all();
  std::vector<BatchResult> results(requests.size());
  parallel_for(requests.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const SchedulingRequest& request = requests[i];
      try {
        results[i] = schedule_one(request, snapshot, config, seed);
      } catch (const Error& e) {
        results[i] = RequestError{i, request.use_case, request.user, e.code(), e.what()};
      } catch (const std::exception& e) {
        results[i] = RequestError{i, request.use_case, request.user,
                                  ErrorCode::kInvalidArgument, e.what()};
      }
    }
  });
  return results;
}

SchedulingRequest request_from_json(const codec::Json& doc,
                                    const DeploymentConfig& config) {
  SchedulingRequest request = codec::request_from_json(doc);
  if (!doc.contains("policy")) {
    auto it = config.use_cases.find(request.use_case);
    if (it != config.use_cases.end()) request.policy = it->second.policy;
  }
  return request;
}

codec::Json to_json(const RequestError& error) {
  return {{"error",
           {{"index", error.index},
            {"use_case", error.use_case},
            {"user", error.user},
            {"code", std::string(to_string(error.code))},
            {"message", error.message}}}};
}

codec::Json to_json(const BatchResult& result) {
  if (const auto* plan = std::get_if<ExecutionPlan>(&result)) {
    return codec::to_json(*plan);
  }
  return to_json(std::get<RequestError>(result));
}

std::vector<TemporalActivityMap> maps_from_counters(
    std::span<const ActivityCounter> counters, const DeploymentConfig& config,
    int day) {
  if (day < 0 || day >= kDaysPerWeek) {
    throw Error(ErrorCode::kOutOfRange, fmt::format("day {} outside 0..6", day));
  }
  // 1970-01-01 00:00 starts an hourly grid whose hour_of_day equals the index.
  const auto hours = partition_range(0, kSecondsPerDay, kStoredSlotLength);
  struct Pending {
    const ActivityCounter* counter;
    std::map<int, RawScore> raw;
  };
  std::map<MetricId, std::vector<Pending>> by_metric;
  for (const auto& provider : config.providers) {
    if (provider.kind != ProviderKind::kCounter) continue;
    for (const auto& counter : counters) {
      if (counter.channel != provider.channel) continue;
      by_metric[provider.metric].push_back(
          {&counter, counter_signal(counter, hours, day)});
    }
  }
  std::vector<TemporalActivityMap> maps;
  for (const auto& [metric, pending] : by_metric) {
    std::vector<double> values;
    for (const auto& p : pending) {
      for (const auto& [slot, raw] : p.raw) values.push_back(raw.value);
    }
    const MetricBounds bounds =
        compute_bounds(metric, values, fmt::format("day-of-week {} counters", day));
    for (const auto& p : pending) {
      maps.push_back(build_activity_map(p.counter->user, metric, p.raw, bounds));
    }
  }
  return maps;
}

Service::Service(DeploymentConfig config, SignalStore& store, Seed seed, int workers)
    : config_(std::move(config)), store_(store), seed_(seed), workers_(workers) {}

std::string Service::handle_line(std::string_view line) {
  codec::Json response;
  try {
    response = dispatch(codec::Json::parse(line));
  } catch (const codec::Json::exception& e) {
    response = error_json(ErrorCode::kParse, e.what());
  } catch (const Error& e) {
    response = error_json(e.code(), e.what());
  } catch (const std::exception& e) {
    response = error_json(ErrorCode::kInvalidArgument, e.what());
  }
  return response.dump();
}

void Service::serve(std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    out << handle_line(line) << '\n';
    out.flush();
  }
}

codec::Json Service::dispatch(const codec::Json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "expected a JSON object");
  if (!doc.contains("op")) {
    const SchedulingRequest request = request_from_json(doc, config_);
    const auto results = handle_batch({&request, 1}, store_, config_, seed_, 1);
    codec::Json out = to_json(results.front());
    out["ok"] = std::holds_alternative<ExecutionPlan>(results.front());
    return out;
  }
  const std::string op = doc.at("op").get<std::string>();
  if (op == "ping") {
    return {{"ok", true}, {"version", store_.version()}};
  }
  if (op == "schedule") {
    const Seed seed = doc.value("seed", seed_);
    std::vector<SchedulingRequest> requests;
    std::vector<std::optional<RequestError>> parse_errors;
    for (const auto& item : doc.at("requests")) {
      try {
        requests.push_back(request_from_json(item, config_));
        parse_errors.emplace_back();
      } catch (const Error& e) {
        requests.emplace_back();
        parse_errors.emplace_back(RequestError{parse_errors.size(),
                                               item.value("use_case", std::string()),
                                               item.value("user", std::string()),
                                               e.code(), e.what()});
      }
    }
    const auto results = handle_batch(requests, store_, config_, seed, workers_);
    codec::Json out = codec::Json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      out.push_back(parse_errors[i] ? to_json(*parse_errors[i]) : to_json(results[i]));
    }
    return {{"ok", true}, {"results", std::move(out)}};
  }
  if (op == "ingest") {
    std::size_t n = 0;
    for (const auto& e : doc.at("events")) {
      counters_.record(e.at("user").get<std::string>(), e.at("channel").get<std::string>(),
                       e.at("timestamp").get<Timestamp>(),
                       e.value("utc_offset_minutes", 0));
      ++n;
    }
    return {{"ok", true}, {"ingested", n}};
  }
  if (op == "counters") {
    codec::Json list = codec::Json::array();
    for (const auto& c : counters_.counters()) {
      list.push_back({{"user", c.user}, {"channel", c.channel}, {"buckets", c.buckets}});
    }
    return {{"ok", true}, {"counters", std::move(list)}};
  }
  if (op == "publish") {
    const int day = doc.at("day").get<int>();
    std::lock_guard lock(publish_mu_);
    const auto counters = counters_.counters();
    const auto maps = maps_from_counters(counters, config_, day);
    const auto version = store_.publish_maps(day, maps);
    return {{"ok", true}, {"version", version}, {"maps", maps.size()}};
  }
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown op '{}'", op));
}

}  // namespace besttime
