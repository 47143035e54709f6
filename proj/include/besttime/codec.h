#pragma once

#include <iosfwd>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "besttime/assembler.h"
#include "besttime/policy.h"
#include "besttime/signals.h"
#include "besttime/temporal.h"

// Text formats shared by the store, the service and the CLI. CSV files are
// plain comma-separated without quoting and start with a header row; readers
// accept the header or its absence. Malformed input throws kParse with the
// line number.
namespace besttime::codec {

using Json = nlohmann::ordered_json;

// Shortest representation that parses back to the same double.
std::string format_double(double value);

std::vector<std::string_view> split_fields(std::string_view line);

// user,metric,slot_index,score
inline constexpr std::string_view kMapsHeader = "user,metric,slot_index,score";
void write_maps_csv(std::ostream& out, std::span<const TemporalActivityMap> maps);
// Groups rows by (user, metric) in first-seen order.
std::vector<TemporalActivityMap> read_maps_csv(std::istream& in);

// {"user", "metric", "entries": [{"slot", "score"}, ...]}
Json to_json(const TemporalActivityMap& map);
TemporalActivityMap map_from_json(const Json& doc);

// user,channel,dow,hour,count (non-zero buckets only)
inline constexpr std::string_view kCountersHeader = "user,channel,dow,hour,count";
void write_counters_csv(std::ostream& out,
                        std::span<const ActivityCounter> counters);
std::vector<ActivityCounter> read_counters_csv(std::istream& in);

struct ActivityEvent {
  UserId user;
  ChannelId channel;
  Timestamp time = 0;
  int utc_offset_minutes = 0;
};

// user,channel,timestamp,utc_offset_minutes
inline constexpr std::string_view kEventsHeader =
    "user,channel,timestamp,utc_offset_minutes";
std::vector<ActivityEvent> read_events_csv(std::istream& in);

struct ActivityLevelRow {
  UserId user;
  MetricId metric;
  double level = 0.0;
};

// user,metric,level
inline constexpr std::string_view kLevelsHeader = "user,metric,level";
void write_levels_csv(std::ostream& out, std::span<const ActivityLevelRow> rows);
std::vector<ActivityLevelRow> read_levels_csv(std::istream& in);

struct GainRow {
  UserId user;
  int slot = 0;
  double gain = 0.0;
};

// user,slot,gain (observed engagement per slot, used as NDCG gains)
inline constexpr std::string_view kGainsHeader = "user,slot,gain";
std::vector<GainRow> read_gains_csv(std::istream& in);

// user,slot,actual_rank,metric,metric_rank,activity_level
inline constexpr std::string_view kTrainingHeader =
    "user,slot,actual_rank,metric,metric_rank,activity_level";
void write_training_csv(std::ostream& out,
                        std::span<const TrainingExample> examples);
// One example per user in first-seen order; ground truth is sorted by
// actual_rank (ties by slot).
std::vector<TrainingExample> read_training_csv(std::istream& in,
                                               const UseCaseId& use_case);

Json to_json(const BestTimePolicy& policy);
BestTimePolicy policy_from_json(const Json& doc);

// {use_case, user, t_start, t_end, n, slot_length, policy:{kind,w,priority},
//  explore?}
Json to_json(const SchedulingRequest& request);
SchedulingRequest request_from_json(const Json& doc);

// {use_case, user, slots, timestamps, seed, truncated, refilled,
//  signal_fallback, explored}
Json to_json(const ExecutionPlan& plan);
ExecutionPlan plan_from_json(const Json& doc);

}  // namespace besttime::codec
