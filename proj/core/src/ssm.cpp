#include "rsdbpf/ssm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rsdbpf {

double step_state(const CandidateModel& model, double s_prev, double u) {
  return model.a * s_prev + model.b + u;
}

double emit_observation(const CandidateModel& model, double s, double v) {
  return model.c * std::sqrt(std::fabs(s)) + model.d + v;
}

double observation_log_density(const CandidateModel& model, double obs, double s) {
  const double residual = obs - emit_observation(model, s, 0.0);
  return -0.5 * std::log(2.0 * std::numbers::pi * model.obs_noise_var) -
         residual * residual / (2.0 * model.obs_noise_var);
}

std::string_view to_string(DynamicsKind kind) {
  return kind == DynamicsKind::kMarkov ? "markov" : "polya";
}

DynamicsKind parse_dynamics(std::string_view name) {
  if (name == "markov") return DynamicsKind::kMarkov;
  if (name == "polya") return DynamicsKind::kPolya;
  throw std::invalid_argument("unknown dynamics '" + std::string(name) + "' (expected markov|polya)");
}

RegimeDynamics RegimeDynamics::markov(std::size_t n, std::vector<double> transition) {
  if (n == 0) throw std::invalid_argument("markov dynamics need at least one regime");
  if (transition.size() != n * n) throw std::invalid_argument("transition matrix must be n x n");
  for (std::size_t j = 0; j < n; ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double p = transition[j * n + k];
      if (!(p >= 0.0)) throw std::invalid_argument("transition entries must be non-negative");
      row += p;
    }
    if (std::fabs(row - 1.0) > 1e-12) {
      throw std::invalid_argument("transition row " + std::to_string(j + 1) + " sums to " + std::to_string(row));
    }
  }
  RegimeDynamics d;
  d.kind_ = DynamicsKind::kMarkov;
  d.n_ = static_cast<int>(n);
  d.transition_ = std::move(transition);
  return d;
}

RegimeDynamics RegimeDynamics::polya(std::vector<double> beta) {
  if (beta.empty()) throw std::invalid_argument("polya dynamics need at least one regime");
  for (double b : beta) {
    if (!(b > 0.0)) throw std::invalid_argument("polya pseudo-counts must be positive");
  }
  RegimeDynamics d;
  d.kind_ = DynamicsKind::kPolya;
  d.n_ = static_cast<int>(beta.size());
  d.beta_ = std::move(beta);
  return d;
}

void RegimeDynamics::check_index(int k) const {
  if (k < 0 || k >= n_) throw std::out_of_range("regime index " + std::to_string(k) + " out of range");
}

double RegimeDynamics::transition(int from, int to) const {
  if (kind_ != DynamicsKind::kMarkov) throw std::logic_error("transition() on non-Markov dynamics");
  check_index(from);
  check_index(to);
  return transition_[static_cast<std::size_t>(from) * n_ + to];
}

double RegimeDynamics::prob(std::span<const int> history, int k) const {
  check_index(k);
  for (int m : history) check_index(m);
  if (kind_ == DynamicsKind::kMarkov) {
    if (history.empty()) throw std::invalid_argument("markov regime probability needs a non-empty history");
    return transition_[static_cast<std::size_t>(history.back()) * n_ + k];
  }
  std::vector<int> counts(static_cast<std::size_t>(n_), 0);
  for (int m : history) ++counts[static_cast<std::size_t>(m)];
  return prob_given(history.empty() ? 0 : history.back(), counts, k);
}

double RegimeDynamics::prob_given(int last, std::span<const int> counts, int k) const {
  if (kind_ == DynamicsKind::kMarkov) {
    return transition_[static_cast<std::size_t>(last) * n_ + k];
  }
  double total = 0.0;
  for (int j = 0; j < n_; ++j) total += counts[static_cast<std::size_t>(j)] + beta_[static_cast<std::size_t>(j)];
  return (counts[static_cast<std::size_t>(k)] + beta_[static_cast<std::size_t>(k)]) / total;
}

int RegimeDynamics::sample_given(int last, std::span<const int> counts, Rng& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cumulative = 0.0;
  for (int k = 0; k + 1 < n_; ++k) {
    cumulative += prob_given(last, counts, k);
    if (u < cumulative) return k;
  }
  return n_ - 1;
}

void ModelSuite::validate() const {
  if (candidates.empty()) throw std::invalid_argument("suite has no candidate models");
  if (static_cast<int>(candidates.size()) != dynamics.n_regimes()) {
    throw std::invalid_argument("candidate count does not match regime dynamics");
  }
  for (const auto& m : candidates) {
    if (!(m.dyn_noise_var >= 0.0) || !(m.obs_noise_var >= 0.0)) {
      throw std::invalid_argument("noise variances must be non-negative");
    }
  }
  if (!(init_low < init_high)) throw std::invalid_argument("initial state bounds must satisfy low < high");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

RegimeDynamics benchmark_markov_dynamics() {
  constexpr std::size_t n = 8;
  constexpr double rho = 1.0 / 120.0;
  std::vector<double> p(n * n, rho);
  for (std::size_t j = 0; j < n; ++j) {
    p[j * n + j] = 0.80;
    p[j * n + (j + 1) % n] = 0.15;
  }
  return RegimeDynamics::markov(n, std::move(p));
}

RegimeDynamics benchmark_polya_dynamics(int n_regimes) {
  return RegimeDynamics::polya(std::vector<double>(static_cast<std::size_t>(n_regimes), 1.0));
}

ModelSuite benchmark_suite(DynamicsKind kind) {
  const double a[] = {-0.1, -0.3, -0.5, -0.9, 0.1, 0.3, 0.5, 0.9};
  const double b[] = {0.0, -2.0, 2.0, -4.0, 0.0, 2.0, -2.0, 4.0};
  ModelSuite suite{
      .candidates = {},
      .dynamics = kind == DynamicsKind::kMarkov ? benchmark_markov_dynamics() : benchmark_polya_dynamics(8),
  };
  for (int j = 0; j < 8; ++j) {
    suite.candidates.push_back(
        CandidateModel{.a = a[j], .b = b[j], .c = a[j], .d = b[j], .dyn_noise_var = 0.1, .obs_noise_var = 0.1});
  }
  return suite;
}

void Trajectory::validate(int n_regimes, int horizon_) const {
  const auto t = static_cast<std::size_t>(horizon_);
  if (observations.size() != t) {
    throw std::invalid_argument("trajectory " + std::to_string(traj_id) + ": expected " + std::to_string(t) +
                                " observations, got " + std::to_string(observations.size()));
  }
  if (states.size() != t + 1 || regimes.size() != t + 1) {
    throw std::invalid_argument("trajectory " + std::to_string(traj_id) + ": states/regimes must have length T+1");
  }
  for (int m : regimes) {
    if (m < 0 || m >= n_regimes) {
      throw std::invalid_argument("trajectory " + std::to_string(traj_id) + ": regime index " +
                                  std::to_string(m + 1) + " outside 1.." + std::to_string(n_regimes));
    }
  }
}

Trajectory simulate(const ModelSuite& suite, std::uint64_t seed, std::uint64_t traj_id) {
  suite.validate();
  Rng rng(seed);
  std::normal_distribution<double> standard_normal(0.0, 1.0);
  const int n = suite.n_regimes();
  const auto horizon = static_cast<std::size_t>(suite.horizon);

  Trajectory traj;
  traj.traj_id = traj_id;
  traj.states.reserve(horizon + 1);
  traj.regimes.reserve(horizon + 1);
  traj.observations.reserve(horizon);

  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  int regime = std::uniform_int_distribution<int>(0, n - 1)(rng);
  double state = std::uniform_real_distribution<double>(suite.init_low, suite.init_high)(rng);
  traj.regimes.push_back(regime);
  traj.states.push_back(state);
  ++counts[static_cast<std::size_t>(regime)];

  for (std::size_t t = 1; t <= horizon; ++t) {
    regime = suite.dynamics.sample_given(regime, counts, rng);
    ++counts[static_cast<std::size_t>(regime)];
    const CandidateModel& model = suite.candidates[static_cast<std::size_t>(regime)];
    state = step_state(model, state, std::sqrt(model.dyn_noise_var) * standard_normal(rng));
    const double obs = emit_observation(model, state, std::sqrt(model.obs_noise_var) * standard_normal(rng));
    traj.regimes.push_back(regime);
    traj.states.push_back(state);
    traj.observations.push_back(obs);
  }
  return traj;
}

}  // namespace rsdbpf
