#pragma once

#include <span>
#include <string>
#include <vector>

namespace rsdbpf {

/// sqrt(mean_t (estimate_t - truth_t)^2).
double rmse(std::span<const double> estimates, std::span<const double> truth);

struct RmseSummary {
  double average = 0.0;
  double best = 0.0;
  double worst = 0.0;
};

RmseSummary summarize_rmse(std::span<const double> per_trajectory_rmse);

/// One filter's results over a set of trajectories.
struct ResultsRow {
  std::string filter;  // e.g. "rs-dbpf"
  std::string label;   // e.g. "RS-DBPF (proposed)"
  RmseSummary rmse;
  std::vector<double> per_trajectory_rmse;
  std::vector<double> per_step_mae;  // length T, mean over trajectories of |s_hat_t - s_t|
};

/// Builds a row from per-trajectory estimates and truths (s_1..s_T each).
ResultsRow make_results_row(std::string filter, std::string label,
                            std::span<const std::vector<double>> estimates,
                            std::span<const std::vector<double>> truths);

struct ResultsTable {
  std::string title;
  std::vector<std::string> notes;
  std::vector<ResultsRow> rows;

  const ResultsRow* find(const std::string& filter) const;
  std::string to_markdown() const;
  /// filter,label,average,best,worst
  std::string to_csv() const;
  /// t,<filter>... one column per row
  std::string per_step_mae_csv() const;
  /// filter,traj_index,rmse
  std::string per_trajectory_csv(std::span<const unsigned long long> traj_ids) const;
};

/// Shortest decimal that round-trips to the same binary64 value.
std::string format_double(double x);

}  // namespace rsdbpf
