#include "besttime/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "besttime/error.h"

namespace besttime {

NdcgReport ndcg(std::span<const int> predicted_order,
                const std::map<int, double>& actual_gains, int k,
                const UserId& user) {
  if (predicted_order.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "ndcg of an empty prediction");
  }
  if (k < 1) {
    throw Error(ErrorCode::kInvalidArgument, fmt::format("ndcg cutoff {} < 1", k));
  }
  std::vector<double> ideal;
  ideal.reserve(actual_gains.size());
  for (const auto& [slot, gain] : actual_gains) {
    if (!(gain >= 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("negative gain {} for slot {}", gain, slot));
    }
    ideal.push_back(gain);
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double dcg = 0.0;
  const auto cut = std::min(predicted_order.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cut; ++i) {
    auto it = actual_gains.find(predicted_order[i]);
    const double gain = it == actual_gains.end() ? 0.0 : it->second;
    dcg += gain / std::log2(static_cast<double>(i) + 2.0);
  }
  double idcg = 0.0;
  const auto ideal_cut = std::min(ideal.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal_cut; ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  NdcgReport report{user, k, 1.0, false};
  if (idcg == 0.0) {
    report.all_zero_gains = true;
  } else {
    report.ndcg = std::min(1.0, dcg / idcg);
  }
  return report;
}

NdcgSummary summarize(std::span<const NdcgReport> reports) {
  NdcgSummary summary;
  summary.users = reports.size();
  double sum = 0.0;
  std::size_t counted = 0;
  for (const auto& r : reports) {
    if (r.all_zero_gains) {
      ++summary.all_zero_users;
      continue;
    }
    sum += r.ndcg;
    ++counted;
  }
  summary.mean_ndcg = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
  return summary;
}

double efficiency_ratio(double engagements, std::int64_t executions) {
  if (executions <= 0) {
    throw Error(ErrorCode::kUndefinedRatio,
                fmt::format("efficiency over {} executions", executions));
  }
  return engagements / static_cast<double>(executions);
}

EfficiencyReport efficiency_report(std::string group, double metric_total,
                                   std::int64_t execution_volume) {
  return {std::move(group), metric_total, execution_volume,
          efficiency_ratio(metric_total, execution_volume)};
}

double relative_lift(double test, double control) {
  if (control == 0.0) {
    throw Error(ErrorCode::kUndefinedRatio, "lift against a zero control");
  }
  return test / control - 1.0;
}

std::string format_lift(double lift, int decimals) {
  return fmt::format("{:+.{}f}%", lift * 100.0, decimals);
}

std::size_t CohortTable::population() const {
  std::size_t n = 0;
  for (const auto& [key, cell] : cells) n += cell.count;
  return n;
}

std::vector<int> deciles(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  std::vector<int> out;
  out.reserve(values.size());
  for (double v : values) {
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
    out.push_back(std::min(9, static_cast<int>(10.0 * static_cast<double>(below) / n)));
  }
  return out;
}

CohortTable cohort_report(std::span<const CohortRow> rows, int dims) {
  if (rows.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "cohort report over no users");
  }
  if (dims != 1 && dims != 2) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("cohort report needs 1 or 2 dimensions, got {}", dims));
  }
  std::vector<std::vector<double>> columns(static_cast<std::size_t>(dims));
  for (const auto& row : rows) {
    if (row.activity.size() < static_cast<std::size_t>(dims)) {
      throw Error(ErrorCode::kInvalidArgument,
                  fmt::format("user '{}' has {} activity levels, need {}", row.user,
                              row.activity.size(), dims));
    }
    for (int d = 0; d < dims; ++d) {
      columns[static_cast<std::size_t>(d)].push_back(
          row.activity[static_cast<std::size_t>(d)]);
    }
  }
  std::vector<std::vector<int>> keys;
  for (const auto& col : columns) keys.push_back(deciles(col));

  CohortTable table;
  table.dims = dims;
  std::map<CohortKey, double> sums;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const CohortKey key{keys[0][i], dims == 2 ? keys[1][i] : -1};
    sums[key] += rows[i].value;
    ++table.cells[key].count;
  }
  for (auto& [key, cell] : table.cells) {
    cell.mean = sums[key] / static_cast<double>(cell.count);
  }
  return table;
}

void write_cohort_csv(std::ostream& out, const CohortTable& table) {
  out << "first,second,count,mean\n";
  const int seconds = table.dims == 2 ? 10 : 1;
  for (int a = 0; a < 10; ++a) {
    for (int b = 0; b < seconds; ++b) {
      const CohortKey key{a, table.dims == 2 ? b : -1};
      auto it = table.cells.find(key);
      if (it == table.cells.end()) {
        out << fmt::format("{},{},0,\n", key.first, key.second);
      } else {
        out << fmt::format("{},{},{},{}\n", key.first, key.second, it->second.count,
                           it->second.mean);
      }
    }
  }
}

void write_cohort_table(std::ostream& out, const CohortTable& table) {
  if (table.dims == 1) {
    out << fmt::format("{:>8} {:>8} {:>12}\n", "decile", "count", "mean");
    for (const auto& [key, cell] : table.cells) {
      out << fmt::format("{:>8} {:>8} {:>12.6f}\n", key.first, cell.count, cell.mean);
    }
    return;
  }
  out << fmt::format("{:>6}", "A\\B");
  for (int b = 0; b < 10; ++b) out << fmt::format(" {:>9}", b);
  out << '\n';
  for (int a = 0; a < 10; ++a) {
    out << fmt::format("{:>6}", a);
    for (int b = 0; b < 10; ++b) {
      auto it = table.cells.find({a, b});
      if (it == table.cells.end()) {
        out << fmt::format(" {:>9}", "-");
      } else {
        out << fmt::format(" {:>9.4f}", it->second.mean);
      }
    }
    out << '\n';
  }
}

}  // namespace besttime
