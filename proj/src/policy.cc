#include "besttime/policy.h"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

#include "besttime/error.h"

namespace besttime {
namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// Position of the best live entry; ties go to the lower slot index, which is
// the lower position since entries are sorted by slot.
std::size_t top_live(std::span<const SlotScore> entries,
                     const std::vector<char>& live) {
  std::size_t best = kNone;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!live[i]) continue;
    if (best == kNone || entries[i].score > entries[best].score) best = i;
  }
  return best;
}

void check_n(int n) {
  if (n < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("requested slot count must be >= 1, got {}", n));
  }
}

void check_nonempty(const TemporalActivityMap& map) {
  if (map.empty()) {
    throw Error(ErrorCode::kEmptyCandidate,
                fmt::format("empty activity map for ({}, {})", map.user(),
                            map.metric()));
  }
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  return kind == PolicyKind::kTopN ? "top_n" : "avoid_nearby";
}

std::string_view to_string(Priority priority) {
  return priority == Priority::kHigh ? "high" : "low";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "top_n") return PolicyKind::kTopN;
  if (name == "avoid_nearby") return PolicyKind::kAvoidNearby;
  throw Error(ErrorCode::kInvalidArgument,
              fmt::format("unknown policy kind '{}'", name));
}

Priority parse_priority(std::string_view name) {
  if (name == "high") return Priority::kHigh;
  if (name == "low") return Priority::kLow;
  throw Error(ErrorCode::kInvalidArgument, fmt::format("unknown priority '{}'", name));
}

void BestTimePolicy::validate() const {
  if (w < 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("avoidance window must be >= 0, got {}", w));
  }
}

std::vector<int> top_n_policy(const TemporalActivityMap& map, int n) {
  check_nonempty(map);
  check_n(n);
  std::vector<SlotScore> order(map.entries().begin(), map.entries().end());
  std::stable_sort(order.begin(), order.end(),
                   [](const SlotScore& a, const SlotScore& b) {
                     return a.score > b.score;
                   });
  const auto take = std::min(order.size(), static_cast<std::size_t>(n));
  std::vector<int> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(order[i].slot);
  return out;
}

SlotSelection avoid_nearby_policy(const TemporalActivityMap& map, int n, int w,
                                  Priority priority, bool refill) {
  check_nonempty(map);
  check_n(n);
  if (w < 0) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("avoidance window must be >= 0, got {}", w));
  }
  const auto entries = map.entries();
  std::vector<char> live(entries.size(), 1);
  std::vector<char> chosen(entries.size(), 0);
  std::size_t tier_removed = kNone;

  if (priority == Priority::kLow) {
    tier_removed = top_live(entries, live);
    live[tier_removed] = 0;
  }

  SlotSelection out;
  while (static_cast<int>(out.slots.size()) < n) {
    const std::size_t best = top_live(entries, live);
    if (best == kNone) break;
    const int best_slot = entries[best].slot;
    out.slots.push_back(best_slot);
    chosen[best] = 1;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].slot >= best_slot - w && entries[i].slot <= best_slot + w) {
        live[i] = 0;
      }
    }
  }

  if (refill && static_cast<int>(out.slots.size()) < n) {
    std::vector<std::size_t> spare;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (!chosen[i] && i != tier_removed) spare.push_back(i);
    }
    std::stable_sort(spare.begin(), spare.end(), [&](std::size_t a, std::size_t b) {
      return entries[a].score > entries[b].score;
    });
    for (std::size_t i : spare) {
      if (static_cast<int>(out.slots.size()) >= n) break;
      out.slots.push_back(entries[i].slot);
      out.refilled.push_back(entries[i].slot);
    }
  }
  out.truncated = static_cast<int>(out.slots.size()) < n;
  return out;
}

SlotSelection select_slots(const TemporalActivityMap& map, int n,
                           const BestTimePolicy& policy) {
  policy.validate();
  const int w = policy.kind == PolicyKind::kTopN ? 0 : policy.w;
  return avoid_nearby_policy(map, n, w, policy.priority, policy.refill);
}

std::vector<Timestamp> apply_jitter(std::span<const TimeSlot> slots, Seed seed) {
  Engine engine(seed);
  std::vector<Timestamp> out;
  out.reserve(slots.size());
  for (const auto& slot : slots) {
    if (slot.length <= 0) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("slot {} has non-positive length", slot.index));
    }
    const auto delay = uniform_below(engine, static_cast<std::uint64_t>(slot.length));
    out.push_back(slot.start + static_cast<Timestamp>(delay));
  }
  return out;
}

void SchedulingRequest::validate() const {
  if (n < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("request ({}, {}): n must be >= 1", use_case, user));
  }
  if (slot_length <= 0 || t_end - t_start < slot_length) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("request ({}, {}): range [{}, {}) shorter than slot "
                            "length {}",
                            use_case, user, t_start, t_end, slot_length));
  }
  policy.validate();
}

ExecutionPlan schedule(const SchedulingRequest& request,
                       const TemporalActivityMap& map, Seed rng_seed) {
  request.validate();
  const auto candidates =
      partition_range(request.t_start, request.t_end, request.slot_length);
  if (!map.within(candidates)) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("map for ({}, {}) has slots outside the request range",
                            map.user(), map.metric()));
  }

  BestTimePolicy policy = request.policy;
  if (request.explore) {
    // Uniform over top-N and avoid-nearby with w in 1..3.
    Engine engine(derive_seed({rng_seed, 0x6578706cULL}));
    const auto choice = uniform_below(engine, 4);
    policy.kind = choice == 0 ? PolicyKind::kTopN : PolicyKind::kAvoidNearby;
    policy.w = static_cast<int>(choice);
  }
  const SlotSelection selection = select_slots(map, request.n, policy);

  std::vector<TimeSlot> chosen;
  chosen.reserve(selection.slots.size());
  for (int slot : selection.slots) {
    chosen.push_back(candidates[static_cast<std::size_t>(slot)]);
  }
  std::sort(chosen.begin(), chosen.end(),
            [](const TimeSlot& a, const TimeSlot& b) { return a.start < b.start; });

  ExecutionPlan plan;
  plan.use_case = request.use_case;
  plan.user = request.user;
  plan.timestamps = apply_jitter(chosen, rng_seed);
  for (const auto& slot : chosen) plan.chosen_slots.push_back(slot.index);
  plan.jitter_seed = rng_seed;
  plan.truncated = selection.truncated;
  plan.refilled = selection.refilled;
  plan.explored = request.explore;
  return plan;
}

}  // namespace besttime
