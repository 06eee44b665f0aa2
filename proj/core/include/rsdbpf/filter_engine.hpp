#pragma once

// Step-wise SMC engine shared by every filter in filters.hpp.
//
// One step: draw regime indices, propagate states, reweight, normalise,
// form the weighted-mean estimate, then resample if ESS drops below the
// threshold. The estimate is taken from the weighted particles before
// resampling. Resampled states are detached from the tape and weights reset
// to 1/N_p.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "rsdbpf/autodiff.hpp"
#include "rsdbpf/filters.hpp"
#include "rsdbpf/neural.hpp"
#include "rsdbpf/ssm.hpp"

namespace rsdbpf {

template <class T>
struct ParticleSystemT {
  std::vector<T> states;
  std::vector<T> log_weights;
  /// Current regime m_t per particle (the fixed regime for the multi-model filter).
  std::vector<int> regimes;
  /// Polya dynamics only: n_particles x n_regimes counts of m_{0:t}.
  std::vector<int> regime_counts;
  int n_regimes = 1;

  std::size_t size() const { return states.size(); }
  std::span<int> counts(std::size_t i) {
    if (regime_counts.empty()) return {};
    return {regime_counts.data() + i * static_cast<std::size_t>(n_regimes), static_cast<std::size_t>(n_regimes)};
  }
  std::span<const int> counts(std::size_t i) const {
    if (regime_counts.empty()) return {};
    return {regime_counts.data() + i * static_cast<std::size_t>(n_regimes), static_cast<std::size_t>(n_regimes)};
  }
};

using ParticleSystem = ParticleSystemT<double>;

/// Multinomial resampling. Copies states and regime summaries from the drawn
/// ancestors, detaches Var states and resets every log weight to -log N_p.
template <class T>
ParticleSystemT<T> resample(const ParticleSystemT<T>& system, Rng& rng) {
  const std::size_t n = system.size();
  std::vector<double> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = std::exp(ad::value_of(system.log_weights[i]));
  const auto ancestors = multinomial_ancestors(weights, n, rng);

  ParticleSystemT<T> out;
  out.n_regimes = system.n_regimes;
  out.states.reserve(n);
  out.log_weights.reserve(n);
  out.regimes.reserve(n);
  out.regime_counts.reserve(system.regime_counts.size());
  const double uniform = -std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = ancestors[i];
    if constexpr (std::is_same_v<T, ad::Var>) {
      ad::Tape& tape = ad::tape_of(system.states[a]);
      out.states.push_back(tape.detach(system.states[a]));
      out.log_weights.push_back(tape.constant(uniform));
    } else {
      out.states.push_back(system.states[a]);
      out.log_weights.push_back(uniform);
    }
    out.regimes.push_back(system.regimes[a]);
    const auto c = system.counts(a);
    out.regime_counts.insert(out.regime_counts.end(), c.begin(), c.end());
  }
  return out;
}

/// Analytic candidate models (oracle and multi-model filters).
class AnalyticModel {
 public:
  explicit AnalyticModel(const ModelSuite& suite) : suite_(&suite) {}
  int n_regimes() const { return suite_->n_regimes(); }
  double propagate(int regime, double s_prev, double eps) const {
    const auto& m = suite_->candidates[static_cast<std::size_t>(regime)];
    return step_state(m, s_prev, std::sqrt(m.dyn_noise_var) * eps);
  }
  double log_likelihood(int regime, double obs, double s) const {
    return observation_log_density(suite_->candidates[static_cast<std::size_t>(regime)], obs, s);
  }

 private:
  const ModelSuite* suite_;
};

/// Learned candidate models, one RegimeNet per regime.
template <class T>
class NeuralModel {
 public:
  explicit NeuralModel(std::span<const RegimeNetT<T>> nets) : nets_(nets) {}
  int n_regimes() const { return static_cast<int>(nets_.size()); }
  T propagate(int regime, const T& s_prev, const T& eps) const {
    return propose(nets_[static_cast<std::size_t>(regime)], s_prev, eps);
  }
  T log_likelihood(int regime, double obs, const T& s) const {
    return rsdbpf::log_likelihood(nets_[static_cast<std::size_t>(regime)], obs, s);
  }

 private:
  std::span<const RegimeNetT<T>> nets_;
};

enum class RegimeMode {
  kNone,       // single model, no regime variable
  kFixed,      // regime drawn once from the prior and kept
  kSwitching,  // regime re-drawn every step from the proposal, weighted by p/q
};

template <class T, class Model>
class ParticleFilter {
 public:
  struct Step {
    T estimate{};
    double ess = 0.0;
    bool resampled = false;
  };

  ParticleFilter(Model model, RegimeMode mode, const RegimeDynamics* dynamics, FilterConfig cfg,
                 ad::Tape* tape = nullptr)
      : model_(std::move(model)), mode_(mode), dynamics_(dynamics), cfg_(cfg), tape_(tape) {
    cfg_.validate(model_.n_regimes());
    if (mode_ == RegimeMode::kSwitching) {
      if (dynamics_ == nullptr) throw std::invalid_argument("switching filter needs regime dynamics");
      if (dynamics_->n_regimes() != model_.n_regimes()) {
        throw std::invalid_argument("regime dynamics and model disagree on the number of regimes");
      }
    }
    if constexpr (std::is_same_v<T, ad::Var>) {
      if (tape_ == nullptr) throw std::invalid_argument("differentiable filter needs a tape");
    }
  }

  int n_regimes() const { return model_.n_regimes(); }
  const ParticleSystemT<T>& particles() const { return system_; }
  ParticleSystemT<T>& particles() { return system_; }
  /// log p(m_t) - log q(m_t) per particle from the last step (all 0 unless switching).
  std::span<const double> log_proposal_ratios() const { return log_ratio_; }

  /// s_0 ~ U[init_low, init_high], m_0 ~ uniform prior, w_0 = 1/N_p.
  void initialize(Rng& rng) {
    const auto n = static_cast<std::size_t>(cfg_.n_particles);
    const int regimes = model_.n_regimes();
    system_ = ParticleSystemT<T>{};
    system_.n_regimes = regimes;
    std::uniform_real_distribution<double> init(cfg_.init_low, cfg_.init_high);
    system_.states.reserve(n);
    for (std::size_t i = 0; i < n; ++i) system_.states.push_back(lift(init(rng)));
    system_.regimes.assign(n, 0);
    if (mode_ != RegimeMode::kNone && regimes > 1) {
      std::uniform_int_distribution<int> prior(0, regimes - 1);
      for (auto& m : system_.regimes) m = prior(rng);
    }
    if (tracks_counts()) {
      system_.regime_counts.assign(n * static_cast<std::size_t>(regimes), 0);
      for (std::size_t i = 0; i < n; ++i) ++system_.counts(i)[static_cast<std::size_t>(system_.regimes[i])];
    }
    const T uniform = lift(-std::log(static_cast<double>(n)));
    system_.log_weights.assign(n, uniform);
  }

  /// Advances one time step; fills `posterior_row` (size n_regimes) with the
  /// weighted regime frequencies when it is non-empty.
  Step step(double obs, Rng& rng, std::span<double> posterior_row = {}) {
    const std::size_t n = system_.size();
    log_ratio_.assign(n, 0.0);
    if (mode_ == RegimeMode::kSwitching) draw_regimes(rng);

    std::normal_distribution<double> standard_normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      const T eps = lift(standard_normal(rng));
      system_.states[i] = model_.propagate(system_.regimes[i], system_.states[i], eps);
    }

    for (std::size_t i = 0; i < n; ++i) {
      T lw = system_.log_weights[i] + model_.log_likelihood(system_.regimes[i], obs, system_.states[i]);
      if (mode_ == RegimeMode::kSwitching) lw = lw + lift(log_ratio_[i]);
      system_.log_weights[i] = lw;
    }

    // Normalise: log w_i - logsumexp(log w).
    double max_lw = -std::numeric_limits<double>::infinity();
    for (const auto& lw : system_.log_weights) max_lw = std::max(max_lw, ad::value_of(lw));
    if (!std::isfinite(max_lw)) throw std::domain_error("degenerate weights: no particle has finite log weight");

    Step result;
    if constexpr (std::is_same_v<T, ad::Var>) {
      const ad::Var shift = tape_->constant(max_lw);
      terms_.clear();
      for (const auto& lw : system_.log_weights) terms_.push_back(ad::exp(lw - shift));
      const ad::Var lse = ad::log(ad::sum(terms_)) + shift;
      terms_.clear();
      for (std::size_t i = 0; i < n; ++i) {
        system_.log_weights[i] = system_.log_weights[i] - lse;
        terms_.push_back(ad::exp(system_.log_weights[i]) * system_.states[i]);
      }
      result.estimate = ad::sum(terms_);
    } else {
      double total = 0.0;
      for (double lw : system_.log_weights) total += std::exp(lw - max_lw);
      const double lse = max_lw + std::log(total);
      double estimate = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        system_.log_weights[i] -= lse;
        estimate += std::exp(system_.log_weights[i]) * system_.states[i];
      }
      result.estimate = estimate;
    }

    double sum_sq = 0.0;
    if (!posterior_row.empty()) std::fill(posterior_row.begin(), posterior_row.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = std::exp(ad::value_of(system_.log_weights[i]));
      sum_sq += w * w;
      if (!posterior_row.empty()) posterior_row[static_cast<std::size_t>(system_.regimes[i])] += w;
    }
    result.ess = 1.0 / sum_sq;
    if (result.ess < cfg_.ess_threshold) {
      system_ = resample(system_, rng);
      result.resampled = true;
    }
    return result;
  }

  /// Runs initialize() and T steps over `obs`.
  FilterOutputT<T> run(std::span<const double> obs, Rng& rng) {
    if (obs.empty()) throw std::invalid_argument("no observations");
    FilterOutputT<T> out;
    out.n_regimes = model_.n_regimes();
    out.estimates.reserve(obs.size());
    out.ess_trace.reserve(obs.size());
    out.regime_posterior.assign(obs.size() * static_cast<std::size_t>(out.n_regimes), 0.0);
    initialize(rng);
    for (std::size_t t = 0; t < obs.size(); ++t) {
      std::span<double> row(out.regime_posterior.data() + t * static_cast<std::size_t>(out.n_regimes),
                            static_cast<std::size_t>(out.n_regimes));
      Step s = step(obs[t], rng, row);
      out.estimates.push_back(s.estimate);
      out.ess_trace.push_back(s.ess);
      if (s.resampled) ++out.resample_count;
    }
    return out;
  }

 private:
  bool tracks_counts() const {
    return mode_ == RegimeMode::kSwitching && dynamics_->kind() == DynamicsKind::kPolya;
  }

  T lift(double v) {
    if constexpr (std::is_same_v<T, ad::Var>) {
      return tape_->constant(v);
    } else {
      return v;
    }
  }

  void draw_regimes(Rng& rng) {
    const std::size_t n = system_.size();
    const int regimes = model_.n_regimes();
    const double log_uniform = -std::log(static_cast<double>(regimes));
    std::uniform_int_distribution<int> uniform(0, regimes - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const int last = system_.regimes[i];
      const auto counts = std::as_const(system_).counts(i);
      int m = 0;
      double log_q = log_uniform;
      switch (cfg_.regime_proposal) {
        case RegimeProposal::kUniform:
          m = regimes > 1 ? uniform(rng) : 0;
          break;
        case RegimeProposal::kBootstrap:
          m = regimes > 1 ? dynamics_->sample_given(last, counts, rng) : 0;
          log_q = std::log(dynamics_->prob_given(last, counts, m));
          break;
        case RegimeProposal::kDeterministic:
          m = static_cast<int>(i % static_cast<std::size_t>(regimes));
          break;
      }
      if (!std::isfinite(log_q)) throw std::domain_error("regime proposal assigned zero mass to a drawn index");
      const double log_p = std::log(dynamics_->prob_given(last, counts, m));
      log_ratio_[i] = log_p - log_q;
      system_.regimes[i] = m;
      if (tracks_counts()) ++system_.counts(i)[static_cast<std::size_t>(m)];
    }
  }

  Model model_;
  RegimeMode mode_;
  const RegimeDynamics* dynamics_;
  FilterConfig cfg_;
  ad::Tape* tape_;
  ParticleSystemT<T> system_;
  std::vector<double> log_ratio_;
  std::vector<ad::Var> terms_;
};

}  // namespace rsdbpf
