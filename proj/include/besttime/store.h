#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "besttime/codec.h"
#include "besttime/signals.h"
#include "besttime/temporal.h"

namespace besttime {

using MapKey = std::pair<UserId, MetricId>;

// One published day-of-week partition. Immutable once published; readers
// hold it through a shared_ptr so a later publish never tears it.
struct Partition {
  int day = 0;
  std::uint64_t version = 0;
  std::map<MapKey, TemporalActivityMap> maps;
  // Channel activity levels, keyed like the maps.
  std::map<MapKey, double> activity;

  const TemporalActivityMap* find(const UserId& user, const MetricId& metric) const;
  std::optional<double> activity_level(const UserId& user,
                                       const MetricId& metric) const;
};

std::string serialize_partition(const Partition& partition);
Partition parse_partition(std::string_view text);

// Seven day-of-week partitions with one publisher at a time and any number of
// concurrent readers. When backed by a directory, each publish writes
// day-<d>.json through a temporary file and a rename, and construction
// reloads whatever was last published.
class SignalStore {
 public:
  static constexpr int kPartitions = kDaysPerWeek;

  SignalStore();
  explicit SignalStore(std::filesystem::path directory);

  SignalStore(const SignalStore&) = delete;
  SignalStore& operator=(const SignalStore&) = delete;

  // Replaces the day's partition and returns the new store version.
  // kOutOfRange for a day outside 0..6. kRejected, leaving the previous
  // partition in place, for a duplicate (user, metric), a level without a
  // map, a level outside [0, 1], or a map count differing from
  // `expected_count`.
  std::uint64_t publish_maps(int day, std::span<const TemporalActivityMap> maps,
                             std::span<const codec::ActivityLevelRow> levels = {},
                             std::optional<std::size_t> expected_count = {});

  // Never null; an unpublished day is an empty partition at version 0.
  std::shared_ptr<const Partition> snapshot(int day) const;
  std::array<std::shared_ptr<const Partition>, kPartitions> snapshot_all() const;

  std::uint64_t version() const { return version_.load(); }
  const std::optional<std::filesystem::path>& directory() const {
    return directory_;
  }

 private:
  static void check_day(int day);

  std::optional<std::filesystem::path> directory_;
  mutable std::mutex read_mu_;
  std::mutex publish_mu_;
  std::array<std::shared_ptr<const Partition>, kPartitions> partitions_;
  std::atomic<std::uint64_t> version_{0};
};

// $BESTTIME_STORE when set and non-empty, else `configured`.
std::optional<std::filesystem::path> resolve_store_path(
    std::optional<std::filesystem::path> configured);

// Concurrent (user, channel) -> counter table for event ingestion.
class CounterTable {
 public:
  void record(const UserId& user, const ChannelId& channel, Timestamp time,
              int utc_offset_minutes);
  void merge(const ActivityCounter& counter);
  // Sorted by (user, channel).
  std::vector<ActivityCounter> counters() const;
  std::size_t size() const;

 private:
  static constexpr std::size_t kShards = 16;
  struct Shard {
    mutable std::mutex mu;
    std::map<std::pair<UserId, ChannelId>, ActivityCounter> counters;
  };
  Shard& shard_for(const UserId& user, const ChannelId& channel);

  std::array<Shard, kShards> shards_;
};

}  // namespace besttime
