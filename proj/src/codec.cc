#include "besttime/codec.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <map>
#include <ostream>

#include "besttime/error.h"

namespace besttime::codec {
namespace {

[[noreturn]] void parse_error(std::size_t line_no, const std::string& what) {
  throw Error(ErrorCode::kParse, fmt::format("line {}: {}", line_no, what));
}

template <typename T>
T parse_number(std::string_view text, std::size_t line_no, std::string_view field) {
  T out{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc{} || ptr != end) {
    parse_error(line_no, fmt::format("bad {} '{}'", field, text));
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(out)) parse_error(line_no, fmt::format("non-finite {}", field));
  }
  return out;
}

// Calls `row(fields, line_no)` for every data row with exactly `width` fields.
template <typename Fn>
void for_each_row(std::istream& in, std::string_view header, std::size_t width,
                  Fn&& row) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line == header) continue;
    const auto fields = split_fields(line);
    if (fields.size() != width) {
      parse_error(line_no, fmt::format("expected {} fields, got {}", width,
                                       fields.size()));
    }
    row(fields, line_no);
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failure");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> parts;
  std::size_t begin = 0;
  while (true) {
    const auto pos = line.find(',', begin);
    parts.push_back(line.substr(begin, pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return parts;
}

void write_maps_csv(std::ostream& out, std::span<const TemporalActivityMap> maps) {
  out << kMapsHeader << '\n';
  for (const auto& map : maps) {
    for (const auto& e : map.entries()) {
      out << map.user() << ',' << map.metric() << ',' << e.slot << ','
          << format_double(e.score) << '\n';
    }
  }
}

std::vector<TemporalActivityMap> read_maps_csv(std::istream& in) {
  std::vector<std::pair<UserId, MetricId>> order;
  std::map<std::pair<UserId, MetricId>, std::vector<SlotScore>> grouped;
  for_each_row(in, kMapsHeader, 4, [&](const auto& f, std::size_t line_no) {
    std::pair<UserId, MetricId> key{std::string(f[0]), std::string(f[1])};
    if (key.first.empty() || key.second.empty()) {
      parse_error(line_no, "empty user or metric");
    }
    auto [it, inserted] = grouped.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back({parse_number<int>(f[2], line_no, "slot_index"),
                          parse_number<double>(f[3], line_no, "score")});
  });
  std::vector<TemporalActivityMap> maps;
  maps.reserve(order.size());
  for (const auto& key : order) {
    try {
      maps.emplace_back(key.first, key.second, std::move(grouped[key]));
    } catch (const Error& e) {
      throw Error(ErrorCode::kParse, e.what());
    }
  }
  return maps;
}

Json to_json(const TemporalActivityMap& map) {
  Json entries = Json::array();
  for (const auto& e : map.entries()) {
    entries.push_back({{"slot", e.slot}, {"score", e.score}});
  }
  return {{"user", map.user()}, {"metric", map.metric()}, {"entries", entries}};
}

TemporalActivityMap map_from_json(const Json& doc) {
  try {
    std::vector<SlotScore> entries;
    for (const auto& e : doc.at("entries")) {
      entries.push_back({e.at("slot").get<int>(), e.at("score").get<double>()});
    }
    return TemporalActivityMap(doc.at("user").get<std::string>(),
                               doc.at("metric").get<std::string>(),
                               std::move(entries));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("activity map: {}", e.what()));
  }
}

void write_counters_csv(std::ostream& out,
                        std::span<const ActivityCounter> counters) {
  out << kCountersHeader << '\n';
  for (const auto& c : counters) {
    for (int dow = 0; dow < kDaysPerWeek; ++dow) {
      for (int hour = 0; hour < kHoursPerDay; ++hour) {
        if (const auto n = c.count(dow, hour); n > 0) {
          out << c.user << ',' << c.channel << ',' << dow << ',' << hour << ','
              << n << '\n';
        }
      }
    }
  }
}

std::vector<ActivityCounter> read_counters_csv(std::istream& in) {
  std::vector<ActivityCounter> counters;
  std::map<std::pair<UserId, ChannelId>, std::size_t> index;
  for_each_row(in, kCountersHeader, 5, [&](const auto& f, std::size_t line_no) {
    std::pair<UserId, ChannelId> key{std::string(f[0]), std::string(f[1])};
    auto [it, inserted] = index.try_emplace(key, counters.size());
    if (inserted) counters.push_back({key.first, key.second, {}});
    const int dow = parse_number<int>(f[2], line_no, "dow");
    const int hour = parse_number<int>(f[3], line_no, "hour");
    const auto n = parse_number<std::uint64_t>(f[4], line_no, "count");
    try {
      counters[it->second].add(dow, hour, n);
    } catch (const Error& e) {
      parse_error(line_no, e.what());
    }
  });
  return counters;
}

std::vector<ActivityEvent> read_events_csv(std::istream& in) {
  std::vector<ActivityEvent> events;
  for_each_row(in, kEventsHeader, 4, [&](const auto& f, std::size_t line_no) {
    events.push_back({std::string(f[0]), std::string(f[1]),
                      parse_number<Timestamp>(f[2], line_no, "timestamp"),
                      parse_number<int>(f[3], line_no, "utc_offset_minutes")});
  });
  return events;
}

void write_levels_csv(std::ostream& out, std::span<const ActivityLevelRow> rows) {
  out << kLevelsHeader << '\n';
  for (const auto& r : rows) {
    out << r.user << ',' << r.metric << ',' << format_double(r.level) << '\n';
  }
}

std::vector<ActivityLevelRow> read_levels_csv(std::istream& in) {
  std::vector<ActivityLevelRow> rows;
  for_each_row(in, kLevelsHeader, 3, [&](const auto& f, std::size_t line_no) {
    const double level = parse_number<double>(f[2], line_no, "level");
    if (level < 0.0 || level > 1.0) parse_error(line_no, "level outside [0, 1]");
    rows.push_back({std::string(f[0]), std::string(f[1]), level});
  });
  return rows;
}

std::vector<GainRow> read_gains_csv(std::istream& in) {
  std::vector<GainRow> rows;
  for_each_row(in, kGainsHeader, 3, [&](const auto& f, std::size_t line_no) {
    const double gain = parse_number<double>(f[2], line_no, "gain");
    if (gain < 0.0) parse_error(line_no, "negative gain");
    rows.push_back({std::string(f[0]), parse_number<int>(f[1], line_no, "slot"), gain});
  });
  return rows;
}

void write_training_csv(std::ostream& out,
                        std::span<const TrainingExample> examples) {
  out << kTrainingHeader << '\n';
  for (const auto& ex : examples) {
    for (std::size_t pos = 0; pos < ex.truth.ordered_slots.size(); ++pos) {
      const int slot = ex.truth.ordered_slots[pos];
      const auto& ranks = ex.metric_ranks.at(slot);
      for (const auto& [metric, rank] : ranks) {
        out << ex.truth.user << ',' << slot << ','
            << format_double(ex.truth.actual_rank(pos)) << ',' << metric << ','
            << format_double(rank) << ','
            << format_double(ex.activity_levels.at(metric)) << '\n';
      }
    }
  }
}

std::vector<TrainingExample> read_training_csv(std::istream& in,
                                               const UseCaseId& use_case) {
  std::vector<TrainingExample> examples;
  std::map<UserId, std::size_t> index;
  std::vector<std::map<int, double>> actual;
  for_each_row(in, kTrainingHeader, 6, [&](const auto& f, std::size_t line_no) {
    UserId user(f[0]);
    auto [it, inserted] = index.try_emplace(user, examples.size());
    if (inserted) {
      examples.emplace_back();
      examples.back().truth.user = user;
      examples.back().truth.use_case = use_case;
      actual.emplace_back();
    }
    auto& ex = examples[it->second];
    const int slot = parse_number<int>(f[1], line_no, "slot");
    const double rank = parse_number<double>(f[2], line_no, "actual_rank");
    auto [a, fresh] = actual[it->second].try_emplace(slot, rank);
    if (!fresh && a->second != rank) {
      parse_error(line_no, fmt::format("conflicting actual_rank for slot {}", slot));
    }
    const MetricId metric(f[3]);
    ex.metric_ranks[slot][metric] = parse_number<double>(f[4], line_no, "metric_rank");
    const double level = parse_number<double>(f[5], line_no, "activity_level");
    if (level < 0.0 || level > 1.0) {
      parse_error(line_no, "activity_level outside [0, 1]");
    }
    auto [l, new_level] = ex.activity_levels.try_emplace(metric, level);
    if (!new_level && l->second != level) {
      parse_error(line_no, fmt::format("conflicting activity_level for '{}'", metric));
    }
  });
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::vector<std::pair<double, int>> order;
    for (const auto& [slot, rank] : actual[i]) order.emplace_back(rank, slot);
    std::sort(order.begin(), order.end());
    for (const auto& [rank, slot] : order) {
      examples[i].truth.ordered_slots.push_back(slot);
      examples[i].truth.actual_ranks.push_back(rank);
    }
  }
  return examples;
}

Json to_json(const BestTimePolicy& policy) {
  return {{"kind", to_string(policy.kind)},
          {"w", policy.w},
          {"priority", to_string(policy.priority)},
          {"refill", policy.refill}};
}

BestTimePolicy policy_from_json(const Json& doc) {
  BestTimePolicy policy;
  try {
    policy.kind = parse_policy_kind(doc.value("kind", std::string("top_n")));
    policy.w = doc.value("w", 0);
    policy.priority = parse_priority(doc.value("priority", std::string("high")));
    policy.refill = doc.value("refill", true);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("policy: {}", e.what()));
  }
  policy.validate();
  return policy;
}

Json to_json(const SchedulingRequest& request) {
  Json doc = {{"use_case", request.use_case},
              {"user", request.user},
              {"t_start", request.t_start},
              {"t_end", request.t_end},
              {"n", request.n},
              {"slot_length", request.slot_length},
              {"policy", to_json(request.policy)}};
  if (!request.metric_spec.empty()) doc["metric_spec"] = request.metric_spec;
  if (request.explore) doc["explore"] = true;
  return doc;
}

SchedulingRequest request_from_json(const Json& doc) {
  SchedulingRequest request;
  try {
    request.use_case = doc.at("use_case").get<std::string>();
    request.user = doc.at("user").get<std::string>();
    request.t_start = doc.at("t_start").get<Timestamp>();
    request.t_end = doc.at("t_end").get<Timestamp>();
    request.n = doc.at("n").get<int>();
    request.slot_length = doc.value("slot_length", kSecondsPerHour);
    request.metric_spec = doc.value("metric_spec", std::string());
    request.explore = doc.value("explore", false);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("request: {}", e.what()));
  }
  if (doc.contains("policy")) request.policy = policy_from_json(doc.at("policy"));
  return request;
}

Json to_json(const ExecutionPlan& plan) {
  return {{"use_case", plan.use_case},
          {"user", plan.user},
          {"slots", plan.chosen_slots},
          {"timestamps", plan.timestamps},
          {"seed", plan.jitter_seed},
          {"truncated", plan.truncated},
          {"refilled", plan.refilled},
          {"signal_fallback", plan.signal_fallback},
          {"explored", plan.explored}};
}

ExecutionPlan plan_from_json(const Json& doc) {
  ExecutionPlan plan;
  try {
    plan.use_case = doc.at("use_case").get<std::string>();
    plan.user = doc.at("user").get<std::string>();
    plan.chosen_slots = doc.at("slots").get<std::vector<int>>();
    plan.timestamps = doc.at("timestamps").get<std::vector<Timestamp>>();
    plan.jitter_seed = doc.at("seed").get<Seed>();
    plan.truncated = doc.value("truncated", false);
    plan.refilled = doc.value("refilled", std::vector<int>{});
    plan.signal_fallback = doc.value("signal_fallback", false);
    plan.explored = doc.value("explored", false);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("plan: {}", e.what()));
  }
  if (plan.chosen_slots.size() != plan.timestamps.size()) {
    throw Error(ErrorCode::kParse, "plan slots and timestamps differ in length");
  }
  return plan;
}

}  // namespace besttime::codec
