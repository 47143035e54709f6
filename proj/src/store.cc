#include "besttime/store.h"

#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <set>
#include <sstream>

#include "besttime/error.h"
#include "besttime/random.h"

namespace besttime {
namespace {

std::filesystem::path partition_file(const std::filesystem::path& dir, int day) {
  return dir / fmt::format("day-{}.json", day);
}

void write_atomically(const std::filesystem::path& target, const std::string& text) {
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.flush();
    if (!out) {
      throw Error(ErrorCode::kIo, fmt::format("cannot write '{}'", tmp.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, fmt::format("cannot rename '{}' to '{}': {}",
                                            tmp.string(), target.string(),
                                            ec.message()));
  }
}

std::shared_ptr<const Partition> empty_partition(int day) {
  auto p = std::make_shared<Partition>();
  p->day = day;
  return p;
}

}  // namespace

const TemporalActivityMap* Partition::find(const UserId& user,
                                           const MetricId& metric) const {
  auto it = maps.find({user, metric});
  return it == maps.end() ? nullptr : &it->second;
}

std::optional<double> Partition::activity_level(const UserId& user,
                                                const MetricId& metric) const {
  auto it = activity.find({user, metric});
  if (it == activity.end()) return std::nullopt;
  return it->second;
}

std::string serialize_partition(const Partition& partition) {
  codec::Json doc = {{"day", partition.day}, {"version", partition.version}};
  codec::Json maps = codec::Json::array();
  for (const auto& [key, map] : partition.maps) maps.push_back(codec::to_json(map));
  codec::Json levels = codec::Json::array();
  for (const auto& [key, level] : partition.activity) {
    levels.push_back({{"user", key.first}, {"metric", key.second}, {"level", level}});
  }
  doc["maps"] = std::move(maps);
  doc["activity"] = std::move(levels);
  return doc.dump() + "\n";
}

Partition parse_partition(std::string_view text) {
  Partition partition;
  try {
    const auto doc = codec::Json::parse(text);
    partition.day = doc.at("day").get<int>();
    partition.version = doc.at("version").get<std::uint64_t>();
    for (const auto& m : doc.at("maps")) {
      auto map = codec::map_from_json(m);
      MapKey key{map.user(), map.metric()};
      partition.maps.emplace(std::move(key), std::move(map));
    }
    for (const auto& l : doc.at("activity")) {
      partition.activity[{l.at("user").get<std::string>(),
                          l.at("metric").get<std::string>()}] =
          l.at("level").get<double>();
    }
  } catch (const codec::Json::exception& e) {
    throw Error(ErrorCode::kParse, fmt::format("partition: {}", e.what()));
  }
  return partition;
}

SignalStore::SignalStore() {
  for (int d = 0; d < kPartitions; ++d) {
    partitions_[static_cast<std::size_t>(d)] = empty_partition(d);
  }
}

SignalStore::SignalStore(std::filesystem::path directory) : SignalStore() {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, fmt::format("cannot create store '{}': {}",
                                            directory.string(), ec.message()));
  }
  std::uint64_t newest = 0;
  for (int d = 0; d < kPartitions; ++d) {
    const auto file = partition_file(directory, d);
    if (!std::filesystem::exists(file)) continue;
    std::ifstream in(file, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    auto partition = std::make_shared<Partition>(parse_partition(buffer.str()));
    if (partition->day != d) {
      throw Error(ErrorCode::kParse,
                  fmt::format("'{}' holds day {}", file.string(), partition->day));
    }
    newest = std::max(newest, partition->version);
    partitions_[static_cast<std::size_t>(d)] = std::move(partition);
  }
  version_ = newest;
  directory_ = std::move(directory);
}

void SignalStore::check_day(int day) {
  if (day < 0 || day >= kPartitions) {
    throw Error(ErrorCode::kOutOfRange, fmt::format("day {} outside 0..6", day));
  }
}

std::uint64_t SignalStore::publish_maps(
    int day, std::span<const TemporalActivityMap> maps,
    std::span<const codec::ActivityLevelRow> levels,
    std::optional<std::size_t> expected_count) {
  check_day(day);
  if (expected_count && *expected_count != maps.size()) {
    throw Error(ErrorCode::kRejected,
                fmt::format("partial batch: {} of {} maps", maps.size(), *expected_count));
  }
  auto next = std::make_shared<Partition>();
  next->day = day;
  for (const auto& map : maps) {
    MapKey key{map.user(), map.metric()};
    if (!next->maps.emplace(key, map).second) {
      throw Error(ErrorCode::kRejected, fmt::format("duplicate map for ({}, {})",
                                                    key.first, key.second));
    }
  }
  for (const auto& row : levels) {
    if (!next->maps.contains({row.user, row.metric})) {
      throw Error(ErrorCode::kRejected, fmt::format("activity level for ({}, {}) without a map",
                                                    row.user, row.metric));
    }
    if (!(row.level >= 0.0 && row.level <= 1.0)) {
      throw Error(ErrorCode::kRejected,
                  fmt::format("activity level {} outside [0, 1]", row.level));
    }
    if (!next->activity.emplace(MapKey{row.user, row.metric}, row.level).second) {
      throw Error(ErrorCode::kRejected, fmt::format("duplicate activity level for ({}, {})",
                                                    row.user, row.metric));
    }
  }

  std::lock_guard publish(publish_mu_);
  next->version = version_.load() + 1;
  if (directory_) write_atomically(partition_file(*directory_, day), serialize_partition(*next));
  {
    std::lock_guard swap(read_mu_);
    partitions_[static_cast<std::size_t>(day)] = std::move(next);
    version_.fetch_add(1);
  }
  return version_.load();
}

std::shared_ptr<const Partition> SignalStore::snapshot(int day) const {
  check_day(day);
  std::lock_guard lock(read_mu_);
  return partitions_[static_cast<std::size_t>(day)];
}

std::array<std::shared_ptr<const Partition>, SignalStore::kPartitions>
SignalStore::snapshot_all() const {
  std::lock_guard lock(read_mu_);
  return partitions_;
}

std::optional<std::filesystem::path> resolve_store_path(
    std::optional<std::filesystem::path> configured) {
  if (const char* env = std::getenv("BESTTIME_STORE"); env != nullptr && *env != '\0') {
    return std::filesystem::path(env);
  }
  return configured;
}

CounterTable::Shard& CounterTable::shard_for(const UserId& user,
                                             const ChannelId& channel) {
  return shards_[mix64(stable_hash(user) ^ stable_hash(channel)) % kShards];
}

void CounterTable::record(const UserId& user, const ChannelId& channel,
                          Timestamp time, int utc_offset_minutes) {
  Shard& shard = shard_for(user, channel);
  std::lock_guard lock(shard.mu);
  auto [it, inserted] =
      shard.counters.try_emplace({user, channel}, ActivityCounter{user, channel, {}});
  it->second = record_activity(std::move(it->second), time, utc_offset_minutes);
}

void CounterTable::merge(const ActivityCounter& counter) {
  Shard& shard = shard_for(counter.user, counter.channel);
  std::lock_guard lock(shard.mu);
  auto [it, inserted] = shard.counters.try_emplace({counter.user, counter.channel},
                                                   counter);
  if (!inserted) it->second = it->second + counter;
}

std::vector<ActivityCounter> CounterTable::counters() const {
  std::map<std::pair<UserId, ChannelId>, ActivityCounter> all;
  for (const auto& shard : shards_) {
    std::lock_guard lock(shard.mu);
    all.insert(shard.counters.begin(), shard.counters.end());
  }
  std::vector<ActivityCounter> out;
  out.reserve(all.size());
  for (auto& [key, counter] : all) out.push_back(std::move(counter));
  return out;
}

std::size_t CounterTable::size() const {
  std::size_t n = 0;
  for (const auto& shard : shards_) {
    std::lock_guard lock(shard.mu);
    n += shard.counters.size();
  }
  return n;
}

}  // namespace besttime
