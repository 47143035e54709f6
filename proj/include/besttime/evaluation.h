#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "besttime/temporal.h"

namespace besttime {

struct NdcgReport {
  UserId user;
  int k = 0;
  double ndcg = 0.0;
  // IDCG was zero; ndcg is reported as 1 by convention.
  bool all_zero_gains = false;
};

// Linear-gain NDCG@k. Gains absent from `actual_gains` count as 0; the ideal
// ordering is taken over every gain in the map. Throws kInvalidArgument on an
// empty prediction, k < 1 or a negative gain.
NdcgReport ndcg(std::span<const int> predicted_order,
                const std::map<int, double>& actual_gains, int k,
                const UserId& user = {});

struct NdcgSummary {
  double mean_ndcg = 0.0;  // over users with some positive gain
  std::size_t users = 0;
  std::size_t all_zero_users = 0;
};

NdcgSummary summarize(std::span<const NdcgReport> reports);

// metric total / execution volume. Throws kUndefinedRatio when executions is 0.
double efficiency_ratio(double engagements, std::int64_t executions);

struct EfficiencyReport {
  std::string group;
  double metric_total = 0.0;
  std::int64_t execution_volume = 0;
  double efficiency = 0.0;
};

EfficiencyReport efficiency_report(std::string group, double metric_total,
                                   std::int64_t execution_volume);

// test / control - 1.
double relative_lift(double test, double control);

// "+8.2%" style, one decimal by default.
std::string format_lift(double lift, int decimals = 1);

// Decile keys; `second` is -1 for one-dimensional reports.
struct CohortKey {
  int first = 0;
  int second = -1;

  friend auto operator<=>(const CohortKey&, const CohortKey&) = default;
};

struct CohortCell {
  double mean = 0.0;
  std::size_t count = 0;
};

struct CohortRow {
  UserId user;
  // One entry per channel; at least `dims` entries.
  std::vector<double> activity;
  double value = 0.0;
};

struct CohortTable {
  int dims = 1;
  std::map<CohortKey, CohortCell> cells;  // populated cells only

  std::size_t population() const;
};

// Decile of x within the population: floor(10 * #{v < x} / N), so tied values
// share a decile.
std::vector<int> deciles(std::span<const double> values);

// Throws kInvalidArgument on empty input, dims outside {1, 2} or rows with too
// few activity entries.
CohortTable cohort_report(std::span<const CohortRow> rows, int dims);

// Long-format CSV: first,second,count,mean with every cell of the full grid
// (10 or 100 rows); empty cells have count 0 and an empty mean.
void write_cohort_csv(std::ostream& out, const CohortTable& table);
// Aligned human-readable grid of means.
void write_cohort_table(std::ostream& out, const CohortTable& table);

}  // namespace besttime
