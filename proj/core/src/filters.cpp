#include "rsdbpf/filters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "rsdbpf/filter_engine.hpp"

namespace rsdbpf {

std::string_view to_string(RegimeProposal proposal) {
  switch (proposal) {
    case RegimeProposal::kUniform: return "uniform";
    case RegimeProposal::kBootstrap: return "bootstrap";
    case RegimeProposal::kDeterministic: return "deterministic";
  }
  return "?";
}

RegimeProposal parse_regime_proposal(std::string_view name) {
  if (name == "uniform") return RegimeProposal::kUniform;
  if (name == "bootstrap") return RegimeProposal::kBootstrap;
  if (name == "deterministic") return RegimeProposal::kDeterministic;
  throw std::invalid_argument("unknown regime proposal '" + std::string(name) +
                              "' (expected uniform|bootstrap|deterministic)");
}

FilterConfig FilterConfig::with_particles(int n_particles, double ess_fraction, RegimeProposal proposal) {
  FilterConfig cfg;
  cfg.n_particles = n_particles;
  cfg.ess_threshold = ess_fraction * n_particles;
  cfg.regime_proposal = proposal;
  return cfg;
}

void FilterConfig::validate(int n_regimes) const {
  if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");
  if (!(ess_threshold > 0.0) || ess_threshold > n_particles) {
    throw std::invalid_argument("ess_threshold must lie in (0, n_particles]");
  }
  if (!(init_low < init_high)) throw std::invalid_argument("init_low must be < init_high");
  if (regime_proposal == RegimeProposal::kDeterministic && n_particles % n_regimes != 0) {
    throw std::invalid_argument("deterministic regime proposal needs n_particles divisible by n_regimes");
  }
}

std::vector<double> estimate_values(const DiffFilterOutput& out) {
  std::vector<double> v;
  v.reserve(out.estimates.size());
  for (const auto& e : out.estimates) v.push_back(e.value());
  return v;
}

double log_sum_exp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) {
    if (m > 0.0) return m;
    throw std::domain_error("degenerate weights: all log weights are -inf");
  }
  double total = 0.0;
  for (double x : xs) total += std::exp(x - m);
  return m + std::log(total);
}

std::vector<double> normalize_log_weights(std::span<const double> raw) {
  const double lse = log_sum_exp(raw);
  std::vector<double> out(raw.begin(), raw.end());
  for (double& x : out) x -= lse;
  return out;
}

double ess(std::span<const double> log_weights) {
  double sum_sq = 0.0;
  bool any = false;
  for (double lw : log_weights) {
    if (lw > -std::numeric_limits<double>::infinity()) any = true;
    const double w = std::exp(lw);
    sum_sq += w * w;
  }
  if (!any) throw std::domain_error("degenerate weights: all log weights are -inf");
  return 1.0 / sum_sq;
}

double rs_weight_update(double log_w_prev, double log_p_regime, double log_q_regime, double log_lik) {
  if (!std::isfinite(log_q_regime)) {
    throw std::domain_error("regime proposal log-probability must be finite");
  }
  return log_w_prev + log_p_regime + log_lik - log_q_regime;
}

std::vector<std::size_t> multinomial_ancestors(std::span<const double> weights, std::size_t count, Rng& rng) {
  if (weights.empty()) throw std::invalid_argument("no weights to resample from");
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw std::invalid_argument("negative or NaN resampling weight");
    total += weights[i];
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw std::domain_error("degenerate weights: total weight is zero");
  std::uniform_real_distribution<double> uniform(0.0, total);
  std::vector<std::size_t> ancestors(count);
  for (auto& a : ancestors) {
    const double u = uniform(rng);
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    // u can only land past the end through rounding; map it to the last positive weight.
    if (it == cumulative.end()) it = std::lower_bound(cumulative.begin(), cumulative.end(), total);
    a = static_cast<std::size_t>(it - cumulative.begin());
  }
  return ancestors;
}

namespace {

void check_horizon(const ModelSuite& suite, std::span<const double> obs) {
  if (static_cast<int>(obs.size()) != suite.horizon) {
    throw std::invalid_argument("observation length " + std::to_string(obs.size()) + " does not match horizon " +
                                std::to_string(suite.horizon));
  }
}

FilterConfig with_suite_prior(FilterConfig cfg, const ModelSuite& suite) {
  cfg.init_low = suite.init_low;
  cfg.init_high = suite.init_high;
  return cfg;
}

}  // namespace

FilterOutput run_rs_pf(const ModelSuite& suite, std::span<const double> obs, const FilterConfig& cfg, Rng& rng) {
  check_horizon(suite, obs);
  ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kSwitching, &suite.dynamics,
                                           with_suite_prior(cfg, suite));
  return pf.run(obs, rng);
}

FilterOutput run_mm_pf(const ModelSuite& suite, std::span<const double> obs, const FilterConfig& cfg, Rng& rng) {
  check_horizon(suite, obs);
  ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kFixed, nullptr,
                                           with_suite_prior(cfg, suite));
  return pf.run(obs, rng);
}

FilterOutput run_rs_dbpf(const NeuralRegimeSet& nets, const RegimeDynamics& dynamics, std::span<const double> obs,
                         const FilterConfig& cfg, Rng& rng) {
  ParticleFilter<double, NeuralModel<double>> pf(NeuralModel<double>(nets.nets), RegimeMode::kSwitching, &dynamics,
                                                 cfg);
  return pf.run(obs, rng);
}

DiffFilterOutput run_rs_dbpf(std::span<const RegimeNetT<ad::Var>> nets, const RegimeDynamics& dynamics,
                             std::span<const double> obs, const FilterConfig& cfg, Rng& rng, ad::Tape& tape) {
  ParticleFilter<ad::Var, NeuralModel<ad::Var>> pf(NeuralModel<ad::Var>(nets), RegimeMode::kSwitching, &dynamics,
                                                   cfg, &tape);
  return pf.run(obs, rng);
}

FilterOutput run_dbpf(const RegimeNet& net, std::span<const double> obs, const FilterConfig& cfg, Rng& rng) {
  ParticleFilter<double, NeuralModel<double>> pf(NeuralModel<double>(std::span<const RegimeNet>(&net, 1)),
                                                 RegimeMode::kNone, nullptr, cfg);
  return pf.run(obs, rng);
}

DiffFilterOutput run_dbpf(const RegimeNetT<ad::Var>& net, std::span<const double> obs, const FilterConfig& cfg,
                          Rng& rng, ad::Tape& tape) {
  ParticleFilter<ad::Var, NeuralModel<ad::Var>> pf(
      NeuralModel<ad::Var>(std::span<const RegimeNetT<ad::Var>>(&net, 1)), RegimeMode::kNone, nullptr, cfg, &tape);
  return pf.run(obs, rng);
}

}  // namespace rsdbpf
