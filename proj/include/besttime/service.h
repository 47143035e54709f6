#pragma once

#include <cstddef>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "besttime/codec.h"
#include "besttime/config.h"
#include "besttime/error.h"
#include "besttime/policy.h"
#include "besttime/random.h"
#include "besttime/store.h"

namespace besttime {

// Why one request in a batch produced no plan.
struct RequestError {
  std::size_t index = 0;
  UseCaseId use_case;
  UserId user;
  ErrorCode code = ErrorCode::kInvalidArgument;
  std::string message;

  friend bool operator==(const RequestError&, const RequestError&) = default;
};

using BatchResult = std::variant<ExecutionPlan, RequestError>;

// Stored maps are hourly: slot index h of partition d scores server hour h
// of day-of-week d.
inline constexpr Seconds kStoredSlotLength = kSecondsPerHour;

// Schedules every request against one store snapshot. Each result echoes its
// request's use case and user. Counter metrics read the stored hourly maps of
// every (day of week, hour) a candidate slot touches and average them;
// predictor metrics are evaluated directly. A user with no signal for any
// metric, or whose gated weights vanish, is scheduled from a uniform map and
// flagged. Low-tier use cases always run at low priority. Results depend only
// on (requests, store contents, config, seed), not on `workers`.
std::vector<BatchResult> handle_batch(std::span<const SchedulingRequest> requests,
                                      const SignalStore& store,
                                      const DeploymentConfig& config, Seed seed,
                                      int workers = 1);

// Per-request stream key: the batch seed mixed with (use case, user, t_start).
Seed request_seed(Seed batch_seed, const SchedulingRequest& request);

// Like codec::request_from_json, but a request without a policy takes its use
// case's configured policy.
SchedulingRequest request_from_json(const codec::Json& doc,
                                    const DeploymentConfig& config);

codec::Json to_json(const RequestError& error);
codec::Json to_json(const BatchResult& result);

// Hourly maps for one day of week from counters on configured counter
// channels. Bounds are the min/max over every counter of a metric for that
// day, so scores are comparable across users.
std::vector<TemporalActivityMap> maps_from_counters(
    std::span<const ActivityCounter> counters, const DeploymentConfig& config,
    int day);

// JSON-lines endpoint. One request object per line, one response per line:
//   {"op":"schedule","requests":[...],"seed":s?}  -> {"ok":true,"results":[...]}
//   {"op":"ingest","events":[{user,channel,timestamp,utc_offset_minutes}]}
//   {"op":"counters"}                              -> counters as JSON
//   {"op":"publish","day":d}                       -> maps from counters
//   {"op":"ping"}
// A line without "op" is a single scheduling request. Failures answer
// {"ok":false,"error":{"code","message"}} and never end the session.
class Service {
 public:
  Service(DeploymentConfig config, SignalStore& store, Seed seed, int workers = 1);

  std::string handle_line(std::string_view line);
  // Until end of input.
  void serve(std::istream& in, std::ostream& out);

  CounterTable& counters() { return counters_; }

 private:
  codec::Json dispatch(const codec::Json& doc);

  DeploymentConfig config_;
  SignalStore& store_;
  Seed seed_;
  int workers_;
  CounterTable counters_;
  std::mutex publish_mu_;
};

}  // namespace besttime
