#include "rsdbpf/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rsdbpf/metrics.hpp"
#include "rsdbpf/random.hpp"

namespace rsdbpf {

std::string_view to_string(LearnedFilter kind) { return kind == LearnedFilter::kDbpf ? "dbpf" : "rs-dbpf"; }

LearnedFilter parse_learned_filter(std::string_view name) {
  if (name == "dbpf") return LearnedFilter::kDbpf;
  if (name == "rs-dbpf") return LearnedFilter::kRsDbpf;
  throw std::invalid_argument("unknown learned filter '" + std::string(name) + "' (expected dbpf|rs-dbpf)");
}

FilterConfig TrainConfig::filter_config() const {
  return FilterConfig::with_particles(train_particles, ess_fraction, regime_proposal);
}

void TrainConfig::validate(std::size_t train_size) const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (lr_halving_period < 1) throw std::invalid_argument("lr_halving_period must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > train_size) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) + " exceeds training set size " +
                                std::to_string(train_size));
  }
  if (train_particles < 1) throw std::invalid_argument("train_particles must be >= 1");
  if (!(ess_fraction > 0.0 && ess_fraction <= 1.0)) throw std::invalid_argument("ess_fraction must lie in (0, 1]");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be >= 0");
}

ad::Var trajectory_loss(std::span<const ad::Var> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size() || estimates.empty()) {
    throw std::invalid_argument("trajectory_loss: length mismatch");
  }
  std::vector<ad::Var> terms;
  terms.reserve(estimates.size());
  for (std::size_t t = 0; t < estimates.size(); ++t) terms.push_back(ad::square(estimates[t] - truth[t]));
  return ad::sum(terms) * (1.0 / static_cast<double>(estimates.size()));
}

double trajectory_loss(std::span<const double> estimates, std::span<const double> truth) {
  if (estimates.size() != truth.size() || estimates.empty()) {
    throw std::invalid_argument("trajectory_loss: length mismatch");
  }
  double total = 0.0;
  for (std::size_t t = 0; t < estimates.size(); ++t) total += (estimates[t] - truth[t]) * (estimates[t] - truth[t]);
  return total * (1.0 / static_cast<double>(estimates.size()));
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr,
                       double momentum) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("gradient has " + std::to_string(grads.size()) + " entries for " +
                                std::to_string(params.size()) + " parameters");
  }
  if (state.velocity.empty()) state.velocity.assign(params.size(), 0.0);
  if (state.velocity.size() != params.size()) throw std::invalid_argument("optimizer state has the wrong size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.velocity[i] = momentum * state.velocity[i] + grads[i];
    params[i] -= lr * state.velocity[i];
  }
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("epoch must be >= 0");
  return cfg.learning_rate * std::pow(0.5, epoch / cfg.lr_halving_period);
}

int learned_regime_count(LearnedFilter kind, const RegimeDynamics& dynamics) {
  return kind == LearnedFilter::kDbpf ? 1 : dynamics.n_regimes();
}

double trajectory_loss_and_gradient(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                                    const Trajectory& traj, const FilterConfig& cfg, Rng& rng, ad::Tape& tape,
                                    std::span<double> grad_accumulator, double scale) {
  tape.clear();
  const BoundRegimeSet bound = bind(tape, params);
  const DiffFilterOutput out =
      kind == LearnedFilter::kDbpf ? run_dbpf(bound.nets.front(), traj.observations, cfg, rng, tape)
                                   : run_rs_dbpf(bound.nets, dynamics, traj.observations, cfg, rng, tape);
  const std::span<const double> truth(traj.states.data() + 1, traj.observations.size());
  const ad::Var loss = trajectory_loss(out.estimates, truth);
  const ad::Gradient grad = tape.backward(loss, bound.leaves);
  const auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) grad_accumulator[i] += scale * g[i];
  return loss.value();
}

FilterOutput run_learned(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                         std::span<const double> obs, const FilterConfig& cfg, Rng& rng) {
  return kind == LearnedFilter::kDbpf ? run_dbpf(params.nets.front(), obs, cfg, rng)
                                      : run_rs_dbpf(params, dynamics, obs, cfg, rng);
}

double validation_rmse(LearnedFilter kind, const NeuralRegimeSet& params, const RegimeDynamics& dynamics,
                       std::span<const Trajectory> trajectories, const FilterConfig& cfg, std::uint64_t seed) {
  if (trajectories.empty()) throw std::invalid_argument("empty validation set");
  double total = 0.0;
  for (const auto& traj : trajectories) {
    Rng rng = make_rng(seed, {stream_tag("val"), traj.traj_id});
    const FilterOutput out = run_learned(kind, params, dynamics, traj.observations, cfg, rng);
    total += rmse(out.estimates, std::span<const double>(traj.states.data() + 1, traj.observations.size()));
  }
  return total / static_cast<double>(trajectories.size());
}

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TrainResult train(LearnedFilter kind, std::span<const Trajectory> train_set, std::span<const Trajectory> val_set,
                  const TrainConfig& cfg, const RegimeDynamics& dynamics, const EpochCallback& on_epoch) {
  cfg.validate(train_set.size());
  if (val_set.empty()) throw std::invalid_argument("training needs a validation split");
  const FilterConfig filter_cfg = cfg.filter_config();

  NeuralRegimeSet params = init_params(cfg.seed, learned_regime_count(kind, dynamics));
  std::vector<double> flat = params.flatten();
  std::vector<double> grad(flat.size());
  OptimizerState opt;
  ad::Tape tape;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = make_rng(cfg.seed, {stream_tag("shuffle"), static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const double lr = lr_at(epoch, cfg);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const Trajectory& traj = train_set[order[k]];
        Rng rng = make_rng(cfg.seed, {stream_tag("train"), static_cast<std::uint64_t>(epoch), batch_index,
                                      traj.traj_id});
        try {
          batch_loss += scale * trajectory_loss_and_gradient(kind, params, dynamics, traj, filter_cfg, rng, tape,
                                                             grad, scale);
        } catch (const std::domain_error&) {
          batch_loss = std::numeric_limits<double>::quiet_NaN();
          break;
        }
      }
      if (!std::isfinite(batch_loss) || !std::isfinite(l2_norm(grad))) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << " (loss " << batch_loss
            << ", parameter norm " << l2_norm(flat) << ")";
        throw std::runtime_error(msg.str());
      }
      if (cfg.clip_norm > 0.0) {
        const double norm = l2_norm(grad);
        if (norm > cfg.clip_norm) {
          for (double& g : grad) g *= cfg.clip_norm / norm;
        }
      }
      sgd_momentum_step(flat, grad, opt, lr, cfg.momentum);
      params.assign(flat);
      epoch_loss += batch_loss * static_cast<double>(stop - start);
    }

    EpochLog entry{.epoch = epoch,
                   .train_loss = epoch_loss / static_cast<double>(order.size()),
                   .val_rmse = validation_rmse(kind, params, dynamics, val_set, filter_cfg, cfg.seed),
                   .lr = lr};
    result.log.push_back(entry);
    const bool improved = entry.val_rmse < best_val;
    if (improved) {
      best_val = entry.val_rmse;
      result.best = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(entry, params, improved);
  }
  result.final_params = params;
  if (result.best_epoch < 0) {
    result.best = params;
    result.best_epoch = cfg.epochs - 1;
  }
  return result;
}

TrainResult train(LearnedFilter kind, const Dataset& dataset, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  const auto train_set = dataset.subset(Split::kTrain);
  const auto val_set = dataset.subset(Split::kVal);
  return train(kind, train_set, val_set, cfg, dataset.suite.dynamics, on_epoch);
}

}  // namespace rsdbpf
