#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "besttime/assembler.h"
#include "besttime/random.h"
#include "besttime/temporal.h"

namespace besttime {

enum class PolicyKind { kTopN, kAvoidNearby };
enum class Priority { kHigh, kLow };

std::string_view to_string(PolicyKind kind);
std::string_view to_string(Priority priority);
// Throw kInvalidArgument on unknown names.
PolicyKind parse_policy_kind(std::string_view name);
Priority parse_priority(std::string_view name);

struct BestTimePolicy {
  PolicyKind kind = PolicyKind::kTopN;
  // Avoidance half-width in slot indices; 0 behaves like top-N.
  int w = 0;
  Priority priority = Priority::kHigh;
  // Refill from removed slots when avoidance exhausts the map.
  bool refill = true;

  void validate() const;
  friend bool operator==(const BestTimePolicy&, const BestTimePolicy&) = default;
};

// Outcome of a policy run over one map.
struct SlotSelection {
  // Best first.
  std::vector<int> slots;
  // Subset of `slots` added by the exhaustion refill, in refill order.
  std::vector<int> refilled;
  // Fewer than n slots were available.
  bool truncated = false;
};

// Highest scores first, ties to the lower slot index. Throws kEmptyCandidate
// on an empty map and kInvalidArgument for n < 1.
std::vector<int> top_n_policy(const TemporalActivityMap& map, int n);

// Avoid-w-nearby selection. Low priority drops the single top slot before any
// pick. Each pick removes every slot whose index lies within [pick - w,
// pick + w]. If the map runs dry and `refill` is set, removed-but-unchosen
// slots (never the low-priority peak) are appended in original score order.
SlotSelection avoid_nearby_policy(const TemporalActivityMap& map, int n, int w,
                                  Priority priority, bool refill = true);

// Dispatches on policy.kind; low priority removes the peak for top-N too.
SlotSelection select_slots(const TemporalActivityMap& map, int n,
                           const BestTimePolicy& policy);

// start + uniform integer delay in [0, length) per slot, drawn in order from
// one generator seeded with `seed`.
std::vector<Timestamp> apply_jitter(std::span<const TimeSlot> slots, Seed seed);

struct SchedulingRequest {
  UseCaseId use_case;
  UserId user;
  Timestamp t_start = 0;
  Timestamp t_end = 0;
  int n = 1;
  Seconds slot_length = kSecondsPerHour;
  // Name of the assembler spec to use; empty means the use case default.
  std::string metric_spec;
  BestTimePolicy policy;
  // Randomize the policy choice (exploration traffic).
  bool explore = false;

  void validate() const;
};

struct ExecutionPlan {
  UseCaseId use_case;
  UserId user;
  // Ascending, parallel to chosen_slots.
  std::vector<Timestamp> timestamps;
  std::vector<int> chosen_slots;
  Seed jitter_seed = 0;
  bool truncated = false;
  std::vector<int> refilled;
  // Scheduled from a uniform map because the user had no stored signals.
  bool signal_fallback = false;
  bool explored = false;

  friend bool operator==(const ExecutionPlan&, const ExecutionPlan&) = default;
};

// Policy selection followed by jitter; the plan is ordered by timestamp.
// Throws kInvalidArgument when the map references slots outside the
// request's candidate set.
ExecutionPlan schedule(const SchedulingRequest& request,
                       const TemporalActivityMap& map, Seed rng_seed);

}  // namespace besttime
