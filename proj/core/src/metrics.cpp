#include "rsdbpf/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace rsdbpf {

double rmse(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size() || estimates.empty()) {
    throw std::invalid_argument("rmse: estimates and truth must have the same non-zero length");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < estimates.size(); ++t) {
    const double e = estimates[t] - truth[t];
    total += e * e;
  }
  return std::sqrt(total / static_cast<double>(estimates.size()));
}

RmseSummary summarize_rmse(std::span<const double> per_trajectory_rmse) {
  if (per_trajectory_rmse.empty()) throw std::invalid_argument("no trajectories to summarise");
  RmseSummary s;
  double total = 0.0;
  s.best = per_trajectory_rmse.front();
  s.worst = per_trajectory_rmse.front();
  for (double r : per_trajectory_rmse) {
    total += r;
    s.best = std::min(s.best, r);
    s.worst = std::max(s.worst, r);
  }
  s.average = total / static_cast<double>(per_trajectory_rmse.size());
  return s;
}

ResultsRow make_results_row(std::string filter, std::string label, std::span<const std::vector<double>> estimates,
                            std::span<const std::vector<double>> truths) {
  if (estimates.size() != truths.size() || estimates.empty()) {
    throw std::invalid_argument("make_results_row: need one truth per estimate trajectory");
  }
  ResultsRow row;
  row.filter = std::move(filter);
  row.label = std::move(label);
  const std::size_t horizon = truths.front().size();
  row.per_step_mae.assign(horizon, 0.0);
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (truths[k].size() != horizon || estimates[k].size() != horizon) {
      throw std::invalid_argument("make_results_row: trajectories have different horizons");
    }
    row.per_trajectory_rmse.push_back(rmse(estimates[k], truths[k]));
    for (std::size_t t = 0; t < horizon; ++t) row.per_step_mae[t] += std::fabs(estimates[k][t] - truths[k][t]);
  }
  for (double& m : row.per_step_mae) m /= static_cast<double>(estimates.size());
  row.rmse = summarize_rmse(row.per_trajectory_rmse);
  return row;
}

const ResultsRow* ResultsTable::find(const std::string& filter) const {
  for (const auto& r : rows) {
    if (r.filter == filter) return &r;
  }
  return nullptr;
}

std::string format_double(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

std::string ResultsTable::to_markdown() const {
  std::ostringstream out;
  if (!title.empty()) out << "## " << title << "\n\n";
  for (const auto& n : notes) out << "- " << n << "\n";
  if (!notes.empty()) out << "\n";
  out << "| Filter | Average | Best | Worst |\n";
  out << "|---|---|---|---|\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "| %.4f | %.4f | %.4f |", r.rmse.average, r.rmse.best, r.rmse.worst);
    out << "| " << r.label << " " << buf << "\n";
  }
  return out.str();
}

std::string ResultsTable::to_csv() const {
  std::ostringstream out;
  out << "filter,label,average,best,worst\n";
  for (const auto& r : rows) {
    out << r.filter << ',' << r.label << ',' << format_double(r.rmse.average) << ',' << format_double(r.rmse.best)
        << ',' << format_double(r.rmse.worst) << '\n';
  }
  return out.str();
}

std::string ResultsTable::per_step_mae_csv() const {
  std::ostringstream out;
  out << 't';
  for (const auto& r : rows) out << ',' << r.filter;
  out << '\n';
  const std::size_t horizon = rows.empty() ? 0 : rows.front().per_step_mae.size();
  for (std::size_t t = 0; t < horizon; ++t) {
    out << t + 1;
    for (const auto& r : rows) out << ',' << format_double(r.per_step_mae[t]);
    out << '\n';
  }
  return out.str();
}

std::string ResultsTable::per_trajectory_csv(std::span<const unsigned long long> traj_ids) const {
  std::ostringstream out;
  out << "filter,traj_id,rmse\n";
  for (const auto& r : rows) {
    if (r.per_trajectory_rmse.size() != traj_ids.size()) {
      throw std::invalid_argument("per_trajectory_csv: id count does not match row " + r.filter);
    }
    for (std::size_t k = 0; k < traj_ids.size(); ++k) {
      out << r.filter << ',' << traj_ids[k] << ',' << format_double(r.per_trajectory_rmse[k]) << '\n';
    }
  }
  return out.str();
}

}  // namespace rsdbpf
