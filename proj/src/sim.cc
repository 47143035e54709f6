#include "besttime/sim.h"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>

#include "besttime/assembler.h"
#include "besttime/error.h"
#include "besttime/parallel.h"

namespace besttime::sim {
namespace {

// Stream tags keep the per-purpose substreams apart.
enum : std::uint64_t {
  kPopulationStream = 0x706f70,
  kObservationStream = 0x6f6273,
  kJitterStream = 0x6a6974,
  kEngagementStream = 0x656e67,
  kBootstrapStream = 0x626f6f,
};

// 1970-01-05, a Monday.
constexpr Timestamp kFirstSimulatedDay = 4 * kSecondsPerDay;
// 1970-01-04, a Sunday: hour-of-week 0 in server time.
constexpr Timestamp kWeekOrigin = 3 * kSecondsPerDay;

double uniform(Engine& engine, double lo, double hi) {
  return lo + (hi - lo) * unit_interval(engine());
}

double activity_bound(const std::vector<double>& bounds, int channel) {
  return bounds[std::min(bounds.size() - 1, static_cast<std::size_t>(channel))];
}

Bump draw_bump(Engine& engine, const PopulationConfig& c) {
  Bump bump;
  bump.center_hour = uniform(engine, c.center_min, c.center_max);
  bump.amplitude = uniform(engine, c.amplitude_min, c.amplitude_max);
  bump.width_hours = uniform(engine, c.width_min, c.width_max);
  return bump;
}

struct DayPlan {
  DayContext context;
  int day_of_week = 0;
  std::vector<TimeSlot> candidates;
};

std::vector<DayPlan> plan_days(const ExperimentConfig& config, int channel) {
  std::vector<DayPlan> days;
  for (int d = 0; d < config.days; ++d) {
    DayPlan day;
    day.context = {d, kFirstSimulatedDay + d * kSecondsPerDay, config.slot_length,
                   channel};
    day.day_of_week = day_of_week(day.context.day_start);
    day.candidates = partition_range(day.context.day_start,
                                     day.context.day_start + kSecondsPerDay,
                                     config.slot_length);
    days.push_back(std::move(day));
  }
  return days;
}

// Raw counter signals per user per day, plus bounds over all of them.
struct ObservedSignals {
  std::vector<std::vector<std::map<int, RawScore>>> raw;  // [user][day]
  MetricBounds bounds;
};

ObservedSignals observe_population(const ExperimentConfig& config,
                                   std::span<const SyntheticUser> users,
                                   std::span<const DayPlan> days, int channel,
                                   const MetricId& metric) {
  ObservedSignals out;
  out.raw.resize(users.size());
  const Seed seed = derive_seed({config.seed, kObservationStream});
  parallel_for(users.size(), config.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const ActivityCounter counter =
          observe_counter(users[i], channel, config.observation, seed);
      for (const auto& day : days) {
        out.raw[i].push_back(counter_signal(counter, day.candidates, day.day_of_week));
      }
    }
  });
  std::vector<double> values;
  for (const auto& per_user : out.raw) {
    for (const auto& per_day : per_user) {
      for (const auto& [slot, raw] : per_day) values.push_back(raw.value);
    }
  }
  out.bounds = compute_bounds(metric, values,
                              fmt::format("simulated {}-week history",
                                          config.observation.history_weeks));
  return out;
}

TemporalActivityMap oracle_map(const SyntheticUser& user, const DayPlan& day) {
  std::vector<SlotScore> entries;
  for (const auto& slot : day.candidates) {
    entries.push_back(
        {slot.index, engagement_probability(user, day.context.channel, slot.start)});
  }
  return TemporalActivityMap(user.id, "oracle", std::move(entries));
}

SchedulingRequest make_request(const UseCaseId& use_case,
                               const SyntheticUser& user, const DayPlan& day,
                               const ExperimentConfig& config,
                               const BestTimePolicy& policy) {
  SchedulingRequest request;
  request.use_case = use_case;
  request.user = user.id;
  request.t_start = day.context.day_start;
  request.t_end = day.context.day_start + kSecondsPerDay;
  request.n = config.n;
  request.slot_length = config.slot_length;
  request.policy = policy;
  return request;
}

// Per-user totals for one arm (or tier).
struct Tally {
  std::vector<double> engaged;
  std::vector<double> expected;
  std::vector<double> executions;
  std::vector<std::int64_t> truncated;

  explicit Tally(std::size_t users)
      : engaged(users), expected(users), executions(users), truncated(users) {}

  void add(std::size_t user, const Outcome& o) {
    engaged[user] += o.engaged ? 1.0 : 0.0;
    expected[user] += o.probability;
    executions[user] += 1.0;
  }
};

ArmResult summarize_arm(const std::string& name, const Tally& tally,
                        int decay_window) {
  ArmResult arm;
  arm.name = name;
  arm.decay_window = decay_window;
  for (std::size_t i = 0; i < tally.engaged.size(); ++i) {
    arm.engagements += tally.engaged[i];
    arm.expected_engagements += tally.expected[i];
    arm.executions += static_cast<std::int64_t>(tally.executions[i]);
    arm.truncated += tally.truncated[i];
  }
  arm.efficiency =
      arm.executions > 0 ? efficiency_ratio(arm.engagements, arm.executions) : 0.0;
  arm.control_efficiency = arm.efficiency;
  return arm;
}

void attach_lift(ArmResult& arm, const Tally& test, const Tally& control,
                 const ExperimentConfig& config) {
  arm.lift = bootstrap_lift(test.engaged, test.executions, control.engaged,
                            control.executions, config.bootstrap, config.confidence,
                            derive_seed({config.seed, kBootstrapStream}));
}

Seed plan_seed(const ExperimentConfig& config, std::size_t user, int day,
               std::size_t use_case) {
  return derive_seed({config.seed, kJitterStream, user,
                      static_cast<std::uint64_t>(day), use_case});
}

Seed engagement_seed(const ExperimentConfig& config) {
  return derive_seed({config.seed, kEngagementStream});
}

std::vector<SyntheticUser> population_for(const ExperimentConfig& config) {
  return generate_population(config.population,
                             derive_seed({config.seed, kPopulationStream}));
}

}  // namespace

void PopulationConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfiguration, "population: " + what);
  };
  if (size < 1) fail("size must be >= 1");
  if (channels < 1) fail("channels must be >= 1");
  if (!(rho >= 0.0 && rho <= 1.0)) fail("rho outside [0, 1]");
  if (min_bumps < 1 || max_bumps > 3 || min_bumps > max_bumps) {
    fail("bump count range must lie within 1..3");
  }
  if (center_min > center_max || amplitude_min > amplitude_max ||
      width_min > width_max || width_min <= 0.0 || amplitude_min < 0.0) {
    fail("bad bump parameter range");
  }
  if (!(day_variation >= 0.0 && day_variation <= 1.0)) fail("day_variation outside [0, 1]");
  if (utc_offsets_minutes.empty()) fail("no utc offsets");
  for (int off : utc_offsets_minutes) {
    if (std::abs(off) > kMaxUtcOffsetMinutes) fail("utc offset beyond 14h");
  }
  if (activity_min.empty() || activity_max.empty()) fail("no activity range");
  for (int ch = 0; ch < channels; ++ch) {
    const double lo = activity_bound(activity_min, ch);
    const double hi = activity_bound(activity_max, ch);
    if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) fail("activity range outside [0, 1]");
  }
  if (noise_scale < 0.0) fail("noise_scale must be >= 0");
}

std::vector<SyntheticUser> generate_population(const PopulationConfig& config,
                                               Seed seed) {
  config.validate();
  std::vector<SyntheticUser> users(config.size);
  for (std::size_t i = 0; i < config.size; ++i) {
    Engine engine(derive_seed({seed, i}));
    SyntheticUser& user = users[i];
    user.index = i;
    user.id = fmt::format("u{}", i);
    user.noise_scale = config.noise_scale;
    user.utc_offset_minutes = config.utc_offsets_minutes[uniform_below(
        engine, config.utc_offsets_minutes.size())];

    const auto bump_count = static_cast<std::size_t>(
        config.min_bumps +
        static_cast<int>(uniform_below(
            engine, static_cast<std::uint64_t>(config.max_bumps - config.min_bumps + 1))));
    std::array<double, kDaysPerWeek> day_factor{};
    for (auto& f : day_factor) f = uniform(engine, 1.0 - config.day_variation, 1.0);

    user.bumps.resize(static_cast<std::size_t>(config.channels));
    for (std::size_t b = 0; b < bump_count; ++b) {
      user.bumps[0].push_back(draw_bump(engine, config));
    }
    for (int ch = 1; ch < config.channels; ++ch) {
      for (std::size_t b = 0; b < bump_count; ++b) {
        const double u = unit_interval(engine());
        const Bump fresh = draw_bump(engine, config);
        user.bumps[static_cast<std::size_t>(ch)].push_back(
            u < config.rho ? user.bumps[0][b] : fresh);
      }
    }
    for (int ch = 0; ch < config.channels; ++ch) {
      user.activity.push_back(uniform(engine, activity_bound(config.activity_min, ch),
                                      activity_bound(config.activity_max, ch)));
      Curve curve{};
      for (int dow = 0; dow < kDaysPerWeek; ++dow) {
        for (int hour = 0; hour < kHoursPerDay; ++hour) {
          const double bumps =
              bump_curve(user.bumps[static_cast<std::size_t>(ch)], 0.0, hour);
          curve[static_cast<std::size_t>(dow * kHoursPerDay + hour)] = std::clamp(
              config.baseline + day_factor[static_cast<std::size_t>(dow)] * bumps,
              0.0, 1.0);
        }
      }
      user.curves.push_back(curve);
    }
  }
  return users;
}

double engagement_probability(const SyntheticUser& user, int channel,
                              Timestamp server_time) {
  const Timestamp local = server_time + user.utc_offset_minutes * 60LL;
  const auto index = static_cast<std::size_t>(day_of_week(local) * kHoursPerDay +
                                              hour_of_day(local));
  return user.curves.at(static_cast<std::size_t>(channel))[index];
}

ActivityCounter observe_counter(const SyntheticUser& user, int channel,
                                const ObservationConfig& config, Seed seed) {
  if (config.history_weeks < 1 || config.events_per_hour < 0.0) {
    throw Error(ErrorCode::kConfiguration, "observation window must be positive");
  }
  Engine engine(derive_seed({seed, user.index, static_cast<std::uint64_t>(channel)}));
  std::normal_distribution<double> noise(0.0, 1.0);
  ActivityCounter counter{user.id, fmt::format("channel{}", channel), {}};
  const double activity = user.activity.at(static_cast<std::size_t>(channel));
  const double sigma = user.noise_scale;
  for (int h = 0; h < kHoursPerWeek; ++h) {
    const Timestamp t = kWeekOrigin + h * kSecondsPerHour;
    const double p = engagement_probability(user, channel, t);
    const double jitter = std::exp(sigma * noise(engine) - 0.5 * sigma * sigma);
    const double rate =
        config.history_weeks * config.events_per_hour * activity * p * jitter;
    std::poisson_distribution<std::uint64_t> events(std::max(rate, 1e-12));
    counter.add(h / kHoursPerDay, h % kHoursPerDay, events(engine));
  }
  return counter;
}

double EngagementModel::share(int concurrent) const {
  if (concurrent <= 1) return 1.0;
  switch (share_rule) {
    case ShareRule::kNone:
      return 1.0;
    case ShareRule::kInverse:
      return 1.0 / concurrent;
    case ShareRule::kPower:
      return std::pow(static_cast<double>(concurrent), -share_exponent);
  }
  return 1.0;
}

void EngagementModel::validate() const {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw Error(ErrorCode::kConfiguration, "engagement decay outside [0, 1]");
  }
  if (decay_window < 0) {
    throw Error(ErrorCode::kConfiguration, "engagement decay_window must be >= 0");
  }
  if (share_rule == ShareRule::kPower && share_exponent < 0.0) {
    throw Error(ErrorCode::kConfiguration, "share exponent must be >= 0");
  }
}

std::vector<Outcome> simulate_day(std::span<const SyntheticUser> users,
                                  const std::vector<std::vector<ExecutionPlan>>& plans,
                                  const EngagementModel& model,
                                  const DayContext& day, Seed seed) {
  model.validate();
  for (const auto& per_use_case : plans) {
    if (per_use_case.size() != users.size()) {
      throw Error(ErrorCode::kInvalidArgument, "plans do not cover every user");
    }
  }
  std::vector<Outcome> outcomes;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const SyntheticUser& user = users[i];
    std::map<int, int> concurrency;
    for (const auto& per_use_case : plans) {
      const ExecutionPlan& plan = per_use_case[i];
      if (plan.user != user.id) {
        throw Error(ErrorCode::kInvalidArgument,
                    fmt::format("plan for '{}' aligned with user '{}'", plan.user,
                                user.id));
      }
      for (int slot : plan.chosen_slots) ++concurrency[slot];
    }
    for (std::size_t uc = 0; uc < plans.size(); ++uc) {
      const auto& slots = plans[uc][i].chosen_slots;
      for (int slot : slots) {
        if (slot < 0 || static_cast<Seconds>(slot) * day.slot_length >= kSecondsPerDay) {
          throw Error(ErrorCode::kInvalidArgument,
                      fmt::format("slot {} outside the simulated day", slot));
        }
        const int prior = static_cast<int>(std::count_if(
            slots.begin(), slots.end(), [&](int other) {
              return other < slot && slot - other <= model.decay_window;
            }));
        const Timestamp start = day.day_start + slot * day.slot_length;
        const double p = engagement_probability(user, day.channel, start) *
                         std::pow(model.decay, prior) * model.share(concurrency[slot]);
        const double u = unit_interval(
            derive_seed({seed, user.index, uc, static_cast<std::uint64_t>(day.day_index),
                         static_cast<std::uint64_t>(slot)}));
        outcomes.push_back({user.index, uc, slot, p, u < p});
      }
    }
  }
  return outcomes;
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kPolicyComparison:
      return "policy_comparison";
    case ExperimentKind::kAssembly:
      return "assembly";
    case ExperimentKind::kCoordination:
      return "coordination";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kConfiguration, "experiment: " + what);
  };
  population.validate();
  engagement.validate();
  if (days < 1) fail("days must be >= 1");
  if (n < 1) fail("n must be >= 1");
  if (slot_length <= 0 || slot_length > kSecondsPerDay) {
    fail("slot_length must lie in (0, 86400]");
  }
  if (workers < 1) fail("workers must be >= 1");
  if (bootstrap < 1) fail("bootstrap must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) fail("confidence outside (0, 1)");
  policy.validate();
  switch (kind) {
    case ExperimentKind::kPolicyComparison:
      if (arms.empty()) fail("policy comparison needs arms");
      if (arms.front().policy.kind != PolicyKind::kTopN || arms.front().oracle) {
        fail("the first arm must be the top_n control");
      }
      for (const auto& arm : arms) arm.policy.validate();
      break;
    case ExperimentKind::kAssembly:
      if (population.channels < 2) fail("assembly needs two channels");
      if (!(assembly_weight >= 0.0)) fail("assembly weight must be >= 0");
      break;
    case ExperimentKind::kCoordination:
      if (use_cases < 1) fail("use_cases must be >= 1");
      if (high_priority < 0 || high_priority > use_cases) {
        fail("high_priority must lie within 0..use_cases");
      }
      break;
  }
}

LiftEstimate bootstrap_lift(std::span<const double> test_engagements,
                            std::span<const double> test_executions,
                            std::span<const double> control_engagements,
                            std::span<const double> control_executions,
                            int resamples, double confidence, Seed seed) {
  const std::size_t n = test_engagements.size();
  if (n == 0 || test_executions.size() != n || control_engagements.size() != n ||
      control_executions.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "bootstrap needs aligned, non-empty tallies");
  }
  auto lift_of = [](double te, double tx, double ce, double cx) {
    if (tx <= 0.0 || cx <= 0.0 || ce <= 0.0) return 0.0;
    return (te / tx) / (ce / cx) - 1.0;
  };
  double te = 0, tx = 0, ce = 0, cx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    te += test_engagements[i];
    tx += test_executions[i];
    ce += control_engagements[i];
    cx += control_executions[i];
  }
  LiftEstimate estimate{lift_of(te, tx, ce, cx), 0.0, 0.0};

  Engine engine(seed);
  std::vector<double> lifts;
  lifts.reserve(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    te = tx = ce = cx = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = static_cast<std::size_t>(uniform_below(engine, n));
      te += test_engagements[i];
      tx += test_executions[i];
      ce += control_engagements[i];
      cx += control_executions[i];
    }
    lifts.push_back(lift_of(te, tx, ce, cx));
  }
  std::sort(lifts.begin(), lifts.end());
  const double tail = (1.0 - confidence) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(lifts.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lifts.size() - 1, lo + 1);
    return lifts[lo] + (pos - static_cast<double>(lo)) * (lifts[hi] - lifts[lo]);
  };
  estimate.lo = quantile(tail);
  estimate.hi = quantile(1.0 - tail);
  return estimate;
}

ExperimentResult run_policy_comparison(const ExperimentConfig& config) {
  config.validate();
  if (config.kind != ExperimentKind::kPolicyComparison) {
    throw Error(ErrorCode::kConfiguration, "not a policy comparison config");
  }
  const auto users = population_for(config);
  const auto days = plan_days(config, kChannelA);
  const ObservedSignals signals =
      observe_population(config, users, days, kChannelA, "channel_a");

  auto window_of = [&](const ArmSpec& arm) {
    const bool own = config.arm_decay_window && !arm.oracle &&
                     arm.policy.kind == PolicyKind::kAvoidNearby && arm.policy.w > 0;
    return own ? arm.policy.w : config.engagement.decay_window;
  };
  // The control runs once per distinct world so every arm has a paired baseline.
  std::map<int, std::size_t> control_slot;
  for (const auto& arm : config.arms) control_slot.try_emplace(window_of(arm), 0);
  std::size_t next = 0;
  for (auto& [window, slot] : control_slot) slot = next++;

  std::vector<Tally> tallies(config.arms.size(), Tally(users.size()));
  std::vector<Tally> controls(control_slot.size(), Tally(users.size()));
  const Seed outcome_seed = engagement_seed(config);
  parallel_for(users.size(), config.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const SyntheticUser> one(&users[i], 1);
      for (std::size_t d = 0; d < days.size(); ++d) {
        const TemporalActivityMap observed = build_activity_map(
            users[i].id, "channel_a", signals.raw[i][d], signals.bounds);
        auto run = [&](const ArmSpec& arm, int window, Tally& tally) {
          const TemporalActivityMap map =
              arm.oracle ? oracle_map(users[i], days[d]) : observed;
          const auto request =
              make_request("use_case_0", users[i], days[d], config, arm.policy);
          ExecutionPlan plan =
              schedule(request, map, plan_seed(config, i, static_cast<int>(d), 0));
          tally.truncated[i] += plan.truncated ? 1 : 0;
          EngagementModel model = config.engagement;
          model.decay_window = window;
          const std::vector<std::vector<ExecutionPlan>> plans{{std::move(plan)}};
          for (const auto& o :
               simulate_day(one, plans, model, days[d].context, outcome_seed)) {
            tally.add(i, o);
          }
        };
        for (const auto& [window, slot] : control_slot) {
          run(config.arms.front(), window, controls[slot]);
        }
        for (std::size_t a = 1; a < config.arms.size(); ++a) {
          run(config.arms[a], window_of(config.arms[a]), tallies[a]);
        }
      }
    }
  });

  ExperimentResult result;
  result.kind = config.kind;
  result.requested_executions =
      static_cast<std::int64_t>(users.size()) * config.days * config.n;
  for (std::size_t a = 0; a < config.arms.size(); ++a) {
    const int window = window_of(config.arms[a]);
    const Tally& control = controls[control_slot.at(window)];
    ArmResult arm = summarize_arm(config.arms[a].name, a == 0 ? control : tallies[a], window);
    arm.control_efficiency = summarize_arm("", control, window).efficiency;
    if (a > 0) attach_lift(arm, tallies[a], control, config);
    result.arms.push_back(std::move(arm));
  }
  return result;
}

ExperimentResult run_assembly_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.kind != ExperimentKind::kAssembly) {
    throw Error(ErrorCode::kConfiguration, "not an assembly config");
  }
  const auto users = population_for(config);
  const auto days = plan_days(config, kChannelA);
  const ObservedSignals signal_a =
      observe_population(config, users, days, kChannelA, "channel_a");
  const ObservedSignals signal_b =
      observe_population(config, users, days, kChannelB, "channel_b");

  AssemblerSpec spec;
  spec.use_case = "use_case_0";
  spec.metrics = {"channel_a", "channel_b"};
  spec.weights = {{"channel_a", 1.0}, {"channel_b", config.assembly_weight}};
  spec.validate();

  Tally single(users.size());
  Tally assembled(users.size());
  const Seed outcome_seed = engagement_seed(config);
  parallel_for(users.size(), config.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const SyntheticUser> one(&users[i], 1);
      for (std::size_t d = 0; d < days.size(); ++d) {
        std::map<MetricId, TemporalActivityMap> maps;
        maps.emplace("channel_a", build_activity_map(users[i].id, "channel_a",
                                                     signal_a.raw[i][d], signal_a.bounds));
        maps.emplace("channel_b", build_activity_map(users[i].id, "channel_b",
                                                     signal_b.raw[i][d], signal_b.bounds));
        // The primary channel enters ungated; only channel B is gated.
        const std::map<MetricId, double> gates{
            {"channel_a", 1.0}, {"channel_b", users[i].activity[kChannelB]}};
        const TemporalActivityMap combined = assemble(spec, maps, gates);

        const auto request =
            make_request(spec.use_case, users[i], days[d], config, config.policy);
        const Seed jitter = plan_seed(config, i, static_cast<int>(d), 0);
        using Arm = std::pair<const TemporalActivityMap*, Tally*>;
        for (auto [map, tally] : {Arm{&maps.at("channel_a"), &single},
                                  Arm{&combined, &assembled}}) {
          ExecutionPlan plan = schedule(request, *map, jitter);
          tally->truncated[i] += plan.truncated ? 1 : 0;
          const std::vector<std::vector<ExecutionPlan>> plans{{std::move(plan)}};
          for (const auto& o : simulate_day(one, plans, config.engagement,
                                            days[d].context, outcome_seed)) {
            tally->add(i, o);
          }
        }
      }
    }
  });

  ExperimentResult result;
  result.kind = config.kind;
  result.requested_executions =
      static_cast<std::int64_t>(users.size()) * config.days * config.n;
  result.arms.push_back(summarize_arm("single_channel_a", single, config.engagement.decay_window));
  ArmResult test = summarize_arm("assembled", assembled, config.engagement.decay_window);
  test.control_efficiency = result.arms.front().efficiency;
  attach_lift(test, assembled, single, config);
  result.arms.push_back(std::move(test));

  std::vector<CohortRow> rows;
  rows.reserve(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    const double gain = assembled.expected[i] / assembled.executions[i] -
                        single.expected[i] / single.executions[i];
    rows.push_back({users[i].id,
                    {users[i].activity[kChannelA], users[i].activity[kChannelB]},
                    gain});
  }
  result.cohort = cohort_report(rows, 2);
  return result;
}

ExperimentResult run_coordination_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.kind != ExperimentKind::kCoordination) {
    throw Error(ErrorCode::kConfiguration, "not a coordination config");
  }
  const auto users = population_for(config);
  const auto days = plan_days(config, kChannelA);
  const ObservedSignals signals =
      observe_population(config, users, days, kChannelA, "channel_a");
  const auto use_cases = static_cast<std::size_t>(config.use_cases);
  auto is_high = [&](std::size_t uc) {
    return uc < static_cast<std::size_t>(config.high_priority);
  };

  // [arm][tier] with arm 0 = uncoordinated, 1 = tiered; tier 0 = high, 1 = low.
  std::vector<std::vector<Tally>> tallies(2, std::vector<Tally>(2, Tally(users.size())));
  const Seed outcome_seed = engagement_seed(config);
  parallel_for(users.size(), config.workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::span<const SyntheticUser> one(&users[i], 1);
      for (std::size_t d = 0; d < days.size(); ++d) {
        const TemporalActivityMap map = build_activity_map(
            users[i].id, "channel_a", signals.raw[i][d], signals.bounds);
        for (std::size_t arm = 0; arm < 2; ++arm) {
          std::vector<std::vector<ExecutionPlan>> plans(use_cases);
          for (std::size_t uc = 0; uc < use_cases; ++uc) {
            BestTimePolicy policy = config.policy;
            policy.priority =
                (arm == 1 && !is_high(uc)) ? Priority::kLow : Priority::kHigh;
            const auto request = make_request(fmt::format("use_case_{}", uc),
                                              users[i], days[d], config, policy);
            plans[uc].push_back(
                schedule(request, map, plan_seed(config, i, static_cast<int>(d), uc)));
            tallies[arm][is_high(uc) ? 0 : 1].truncated[i] +=
                plans[uc].back().truncated ? 1 : 0;
          }
          for (const auto& o : simulate_day(one, plans, config.engagement,
                                            days[d].context, outcome_seed)) {
            tallies[arm][is_high(o.use_case) ? 0 : 1].add(i, o);
          }
        }
      }
    }
  });

  auto merged = [&](std::size_t arm) {
    Tally all(users.size());
    for (const auto& tier : tallies[arm]) {
      for (std::size_t i = 0; i < users.size(); ++i) {
        all.engaged[i] += tier.engaged[i];
        all.expected[i] += tier.expected[i];
        all.executions[i] += tier.executions[i];
        all.truncated[i] += tier.truncated[i];
      }
    }
    return all;
  };

  ExperimentResult result;
  result.kind = config.kind;
  result.requested_executions = static_cast<std::int64_t>(users.size()) *
                                config.days * config.n * config.use_cases;
  const Tally control = merged(0);
  const Tally tiered = merged(1);
  result.arms.push_back(summarize_arm("uncoordinated", control, config.engagement.decay_window));
  ArmResult test = summarize_arm("tiered", tiered, config.engagement.decay_window);
  test.control_efficiency = result.arms.front().efficiency;
  attach_lift(test, tiered, control, config);
  result.arms.push_back(std::move(test));

  const char* tier_names[] = {"high", "low"};
  for (std::size_t tier = 0; tier < 2; ++tier) {
    const bool populated =
        tier == 0 ? config.high_priority > 0 : config.high_priority < config.use_cases;
    if (!populated) continue;
    result.tiers.push_back(summarize_arm(
        fmt::format("uncoordinated/{}", tier_names[tier]), tallies[0][tier],
        config.engagement.decay_window));
    ArmResult row =
        summarize_arm(fmt::format("tiered/{}", tier_names[tier]), tallies[1][tier],
                      config.engagement.decay_window);
    row.control_efficiency = result.tiers.back().efficiency;
    attach_lift(row, tallies[1][tier], tallies[0][tier], config);
    result.tiers.push_back(std::move(row));
  }
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  switch (config.kind) {
    case ExperimentKind::kPolicyComparison:
      return run_policy_comparison(config);
    case ExperimentKind::kAssembly:
      return run_assembly_experiment(config);
    case ExperimentKind::kCoordination:
      return run_coordination_experiment(config);
  }
  throw Error(ErrorCode::kConfiguration, "unknown experiment kind");
}

void write_result_csv(std::ostream& out, const ExperimentResult& result) {
  out << "experiment,arm,engagements,expected_engagements,executions,truncated,"
         "decay_window,efficiency,control_efficiency,lift,lift_lo,lift_hi\n";
  auto row = [&](const ArmResult& arm) {
    out << fmt::format("{},{},{:.0f},{:.6f},{},{},{},{:.8f},{:.8f},{:.8f},{:.8f},{:.8f}\n",
                       to_string(result.kind), arm.name, arm.engagements,
                       arm.expected_engagements, arm.executions, arm.truncated,
                       arm.decay_window, arm.efficiency, arm.control_efficiency,
                       arm.lift.lift, arm.lift.lo, arm.lift.hi);
  };
  for (const auto& arm : result.arms) row(arm);
  for (const auto& arm : result.tiers) row(arm);
}

void write_result_table(std::ostream& out, const ExperimentResult& result) {
  out << fmt::format("experiment: {}  (requested executions per arm: {})\n",
                     to_string(result.kind), result.requested_executions);
  out << fmt::format("{:<24} {:>6} {:>10} {:>10} {:>11} {:>11} {:>9} {:>6} {:>20}\n",
                     "arm", "window", "engaged", "execs", "efficiency", "control",
                     "lift", "trunc", "95% CI");
  auto row = [&](const ArmResult& arm, bool control) {
    const std::string ci =
        control ? std::string("control")
                : fmt::format("[{}, {}]", format_lift(arm.lift.lo, 2),
                              format_lift(arm.lift.hi, 2));
    out << fmt::format("{:<24} {:>6} {:>10.0f} {:>10} {:>11.5f} {:>11.5f} {:>9} {:>6} {:>20}\n",
                       arm.name, arm.decay_window, arm.engagements, arm.executions,
                       arm.efficiency, arm.control_efficiency,
                       control ? "-" : format_lift(arm.lift.lift, 2), arm.truncated,
                       ci);
  };
  for (std::size_t i = 0; i < result.arms.size(); ++i) row(result.arms[i], i == 0);
  for (std::size_t i = 0; i < result.tiers.size(); ++i) {
    row(result.tiers[i], result.tiers[i].name.starts_with("uncoordinated"));
  }
  if (result.cohort) {
    out << "\nexpected engagement gain per execution by (A, B) activity decile\n";
    write_cohort_table(out, *result.cohort);
  }
}

}  // namespace besttime::sim
