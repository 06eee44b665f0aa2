#pragma once

// Supervised end-to-end training of the learned filters: per-trajectory MSE
// between weighted-mean estimates and true states, SGD with classical
// momentum, step-wise learning-rate halving, best-on-validation selection.

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "rsdbpf/autodiff.hpp"
#include "rsdbpf/dataset.hpp"
#include "rsdbpf/filters.hpp"
#include "rsdbpf/neural.hpp"

namespace rsdbpf {

enum class LearnedFilter { kDbpf, kRsDbpf };

std::string_view to_string(LearnedFilter kind);
LearnedFilter parse_learned_filter(std::string_view name);

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  int lr_halving_period = 10;
  int epochs = 60;
  int batch_size = 100;
  int train_particles = 200;
  double ess_fraction = 0.5;
  RegimeProposal regime_proposal = RegimeProposal::kUniform;
  /// Max global gradient norm; 0 disables clipping.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;

  FilterConfig filter_config() const;
  void validate(std::size_t train_size) const;
};

struct OptimizerState {
  std::vector<double> velocity;
};

/// (1/T) sum_t (estimate_t - truth_t)^2.
ad::Var trajectory_loss(std::span<const ad::Var> estimates, std::span<const double> truth);
double trajectory_loss(std::span<const double> estimates, std::span<const double> truth);

/// v <- momentum * v + g;  theta <- theta - lr * v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                       double momentum = 0.9);

/// learning_rate * 0.5^floor(epoch / lr_halving_period), epochs counted from 0.
double lr_at(int epoch, const TrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_rmse = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  NeuralRegimeSet best;
  NeuralRegimeSet final_params;
  int best_epoch = -1;
  std::vector<EpochLog> log;
};

/// Called after every epoch with the current parameters; `improved` marks a
/// new best validation RMSE.
using EpochCallback = std::function<void(const EpochLog&, const NeuralRegimeSet&, bool improved)>;

/// Number of regimes the learned filter uses (1 for DBPF).
int learned_regime_count(LearnedFilter kind, const RegimeDynamics& dynamics);

/// Loss and gradient of one trajectory (flatten() order), on a caller-owned tape.
double trajectory_loss_and_gradient(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                                    const Trajectory& traj, const FilterConfig& cfg, Rng& rng, ad::Tape& tape,
                                    std::span<double> grad_accumulator, double scale);

/// Learned-filter estimates on plain doubles.
FilterOutput run_learned(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                         std::span<const double> obs, const FilterConfig& cfg, Rng& rng);

/// Mean per-trajectory RMSE with a fixed filter seed per trajectory.
double validation_rmse(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                       std::span<const Trajectory> trajectories, const FilterConfig& cfg, std::uint64_t seed);

TrainResult train(LearnedFilter kind, std::span<const Trajectory> train_set, std::span<const Trajectory> val_set,
                  const TrainConfig& cfg, const RegimeDynamics& dynamics, const EpochCallback& on_epoch = {});

TrainResult train(LearnedFilter kind, const Dataset& dataset, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace rsdbpf
