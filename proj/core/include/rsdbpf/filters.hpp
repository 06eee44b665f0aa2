#pragma once

// Particle filters for regime-switching models.
//
//   run_rs_pf    oracle regime-switching PF with the analytic candidate models
//   run_mm_pf    multi-model baseline: one fixed regime per particle
//   run_rs_dbpf  regime-switching differentiable bootstrap PF (learned models)
//   run_dbpf     differentiable bootstrap PF with a single learned model
//
// All weight arithmetic is done on log weights. The learned filters have a
// double overload for evaluation and an ad::Var overload that records the
// run on a tape for training.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "rsdbpf/autodiff.hpp"
#include "rsdbpf/neural.hpp"
#include "rsdbpf/random.hpp"
#include "rsdbpf/ssm.hpp"

namespace rsdbpf {

/// Regime index proposal q(m_t | m_{0:t-1}).
enum class RegimeProposal {
  kUniform,        // 1 / N_m
  kBootstrap,      // q = p(m_t | m_{0:t-1})
  kDeterministic,  // round-robin, N_p / N_m particles per regime
};

std::string_view to_string(RegimeProposal proposal);
RegimeProposal parse_regime_proposal(std::string_view name);

struct FilterConfig {
  int n_particles = 2000;
  /// Resample when ESS < ess_threshold.
  double ess_threshold = 1000.0;
  RegimeProposal regime_proposal = RegimeProposal::kUniform;
  /// mu(s_0) for the learned filters; the analytic filters take it from the suite.
  double init_low = -0.5;
  double init_high = 0.5;

  static FilterConfig with_particles(int n_particles, double ess_fraction = 0.5,
                                     RegimeProposal proposal = RegimeProposal::kUniform);
  void validate(int n_regimes) const;
};

template <class T>
struct FilterOutputT {
  std::vector<T> estimates;             // s_hat_1..s_hat_T
  std::vector<double> ess_trace;        // ESS_t before any resampling
  std::vector<double> regime_posterior; // T x n_regimes, row-major
  int n_regimes = 1;
  std::size_t resample_count = 0;

  double posterior(std::size_t t, int k) const {
    return regime_posterior[t * static_cast<std::size_t>(n_regimes) + static_cast<std::size_t>(k)];
  }
};

using FilterOutput = FilterOutputT<double>;
using DiffFilterOutput = FilterOutputT<ad::Var>;

std::vector<double> estimate_values(const DiffFilterOutput& out);

// ---- SMC primitives -------------------------------------------------------

double log_sum_exp(std::span<const double> xs);
/// raw - logsumexp(raw). Throws std::domain_error if no entry is finite.
std::vector<double> normalize_log_weights(std::span<const double> raw);
/// 1 / sum_i w_i^2 for normalised log weights.
double ess(std::span<const double> log_weights);
/// log_w_prev + log p + log g - log q. Throws std::domain_error if log q is -inf.
double rs_weight_update(double log_w_prev, double log_p_regime, double log_q_regime, double log_lik);
/// `count` i.i.d. ancestor indices from the categorical law given by `weights`.
std::vector<std::size_t> multinomial_ancestors(std::span<const double> weights, std::size_t count, Rng& rng);

// ---- Filters --------------------------------------------------------------

FilterOutput run_rs_pf(const ModelSuite& suite, std::span<const double> obs, const FilterConfig& cfg, Rng& rng);
FilterOutput run_mm_pf(const ModelSuite& suite, std::span<const double> obs, const FilterConfig& cfg, Rng& rng);

FilterOutput run_rs_dbpf(const NeuralRegimeSet& nets, const RegimeDynamics& dynamics, std::span<const double> obs,
                         const FilterConfig& cfg, Rng& rng);
DiffFilterOutput run_rs_dbpf(std::span<const RegimeNetT<ad::Var>> nets, const RegimeDynamics& dynamics,
                             std::span<const double> obs, const FilterConfig& cfg, Rng& rng, ad::Tape& tape);

FilterOutput run_dbpf(const RegimeNet& net, std::span<const double> obs, const FilterConfig& cfg, Rng& rng);
DiffFilterOutput run_dbpf(const RegimeNetT<ad::Var>& net, std::span<const double> obs, const FilterConfig& cfg,
                          Rng& rng, ad::Tape& tape);

}  // namespace rsdbpf
