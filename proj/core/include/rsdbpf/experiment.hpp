#pragma once

// Experiment harness behind the command-line tool: run configuration,
// dataset generation, the learning-rate grid, and evaluation of all four
// filters on the test split.
//
// Output layout under out_dir:
//   dataset.jsonl
//   checkpoints/{dbpf,rs-dbpf}.json               selected checkpoint
//   checkpoints/<filter>/eta_<eta>/epoch_NNN.json  every improvement
//   checkpoints/<filter>/eta_<eta>/final.json
//   logs/<filter>_eta_<eta>.csv, logs/<filter>_selection.json
//   results/table.md, table.csv, per_step_mae.csv, per_traj_rmse.csv,
//   results/estimates_<filter>.csv

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rsdbpf/dataset.hpp"
#include "rsdbpf/filters.hpp"
#include "rsdbpf/metrics.hpp"
#include "rsdbpf/ssm.hpp"
#include "rsdbpf/training.hpp"

namespace rsdbpf {

enum class FilterKind { kMmPf, kDbpf, kRsDbpf, kRsPf };

std::string_view to_string(FilterKind kind);
FilterKind parse_filter_kind(std::string_view name);
/// Row label used in the results table.
std::string_view table_label(FilterKind kind);
/// Comma-separated list, e.g. "mm-pf,rs-pf". Duplicates are rejected.
std::vector<FilterKind> parse_filter_list(std::string_view list);

/// Invalid configuration; `field()` is a dotted path such as "train.epochs".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct RunConfig {
  DynamicsKind dynamics = DynamicsKind::kMarkov;
  std::uint64_t seed = 2024;
  std::filesystem::path out_dir = "out";

  /// Empty means out_dir / "dataset.jsonl".
  std::filesystem::path dataset_path;
  SplitCounts counts;

  int eval_particles = 2000;
  double ess_fraction = 0.5;
  RegimeProposal regime_proposal = RegimeProposal::kUniform;

  std::vector<double> eta_grid{0.01, 0.02, 0.05, 0.1};
  /// learning_rate is taken from eta_grid; seed from `seed`.
  TrainConfig train;

  std::vector<FilterKind> filters{FilterKind::kMmPf, FilterKind::kDbpf, FilterKind::kRsDbpf, FilterKind::kRsPf};

  std::filesystem::path resolved_dataset_path() const;
  std::filesystem::path checkpoint_path(LearnedFilter kind) const;
  TrainConfig train_config(double eta) const;
  FilterConfig eval_filter_config() const;
  void validate() const;
};

/// Parses a JSON config. Missing keys keep their defaults; unknown keys and
/// ill-typed values raise ConfigError naming the field.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

/// Command-line overrides; unset members leave the config untouched.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::string> filters;
  std::optional<int> particles;
  /// A number pins one learning rate; "grid" keeps the configured grid.
  std::optional<std::string> eta;
  std::optional<std::string> dynamics;
};

void apply_overrides(RunConfig& cfg, const Overrides& overrides);

// ---- Commands ---------------------------------------------------------------

struct GenerateReport {
  std::filesystem::path path;
  std::size_t trajectories = 0;
};

GenerateReport cmd_generate(const RunConfig& cfg, std::ostream& log);

struct EtaRun {
  double eta = 0.0;
  int best_epoch = -1;
  double best_val_rmse = 0.0;
  std::filesystem::path log_path;
  /// Empty on success, otherwise the divergence diagnostic; such runs are never selected.
  std::string failure;
};

struct TrainReport {
  LearnedFilter kind = LearnedFilter::kRsDbpf;
  std::vector<EtaRun> runs;
  std::size_t selected = 0;
  std::filesystem::path checkpoint;
};

/// Trains one learned filter over the eta grid and keeps the best run.
TrainReport cmd_train(const RunConfig& cfg, LearnedFilter kind, std::ostream& log);

/// Seed of the filter RNG for one (filter, trajectory) pair during evaluation.
std::uint64_t evaluation_seed(std::uint64_t master, FilterKind kind, std::uint64_t traj_id);

/// Runs one filter over a set of trajectories and collects the table row.
ResultsRow evaluate_filter(FilterKind kind, const ModelSuite& suite, const NeuralRegimeSet* params,
                           std::span<const Trajectory> trajectories, const FilterConfig& cfg, std::uint64_t seed,
                           std::vector<FilterOutput>* outputs = nullptr);

/// Per-step CSV: traj_id,t,estimate,truth,abs_error,ess.
std::string estimates_csv(std::span<const Trajectory> trajectories, std::span<const FilterOutput> outputs);

ResultsTable cmd_evaluate(const RunConfig& cfg, std::ostream& log);

ResultsTable cmd_reproduce(const RunConfig& cfg, std::ostream& log);

}  // namespace rsdbpf
