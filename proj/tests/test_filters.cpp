#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "rsdbpf/filter_engine.hpp"
#include "rsdbpf/filters.hpp"
#include "rsdbpf/metrics.hpp"
#include "rsdbpf/neural.hpp"
#include "rsdbpf/ssm.hpp"

using namespace rsdbpf;
using ad::Tape;
using ad::Var;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModelSuite single_model_suite(const CandidateModel& m) {
  ModelSuite s;
  s.candidates = {m};
  s.dynamics = RegimeDynamics::markov(1, {1.0});
  return s;
}

FilterConfig small_cfg(int n, RegimeProposal proposal = RegimeProposal::kUniform) {
  return FilterConfig::with_particles(n, 0.5, proposal);
}

// Plain bootstrap PF written independently of the engine. It consumes the
// random stream in the same order: initial states, then per step one normal
// draw per particle, then the multinomial ancestors when ESS drops.
std::vector<double> reference_bpf(const CandidateModel& m, std::span<const double> obs, int n, double threshold,
                                  Rng& rng) {
  std::vector<double> s(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  for (auto& x : s) x = init(rng);
  std::vector<double> lw(s.size(), -std::log(static_cast<double>(n)));
  std::vector<double> est;
  for (double o : obs) {
    std::normal_distribution<double> z(0.0, 1.0);
    for (auto& x : s) x = m.a * x + m.b + std::sqrt(m.dyn_noise_var) * z(rng);
    for (std::size_t i = 0; i < s.size(); ++i) lw[i] = lw[i] + observation_log_density(m, o, s[i]);
    const double mx = *std::max_element(lw.begin(), lw.end());
    double total = 0.0;
    for (double l : lw) total += std::exp(l - mx);
    const double lse = mx + std::log(total);
    double e = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      lw[i] -= lse;
      e += std::exp(lw[i]) * s[i];
    }
    for (double l : lw) sq += std::exp(l) * std::exp(l);
    est.push_back(e);
    if (1.0 / sq < threshold) {
      std::vector<double> w(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) w[i] = std::exp(lw[i]);
      const auto anc = multinomial_ancestors(w, s.size(), rng);
      std::vector<double> next(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) next[i] = s[anc[i]];
      s = next;
      std::fill(lw.begin(), lw.end(), -std::log(static_cast<double>(n)));
    }
  }
  return est;
}

double mean_rmse(const std::vector<double>& xs) { return std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size(); }

}  // namespace

// ---- SMC primitives ----------------------------------------------------------

TEST(Ess, Examples) {
  const std::vector<double> uniform(200, -std::log(200.0));
  EXPECT_NEAR(ess(uniform), 200.0, 1e-9);
  std::vector<double> degenerate(10, -kInf);
  degenerate[3] = 0.0;
  EXPECT_DOUBLE_EQ(ess(degenerate), 1.0);
  const std::vector<double> w{std::log(0.5), std::log(0.25), std::log(0.25)};
  EXPECT_NEAR(ess(w), 8.0 / 3.0, 1e-14);
  EXPECT_THROW(ess(std::vector<double>(3, -kInf)), std::domain_error);
}

TEST(NormalizeLogWeights, Examples) {
  const auto a = normalize_log_weights(std::vector<double>{0.0, 0.0});
  EXPECT_NEAR(a[0], std::log(0.5), 1e-15);
  EXPECT_NEAR(a[1], std::log(0.5), 1e-15);
  const auto b = normalize_log_weights(std::vector<double>{std::log(2.0), std::log(6.0)});
  EXPECT_NEAR(b[0], std::log(0.25), 1e-15);
  EXPECT_NEAR(b[1], std::log(0.75), 1e-15);
  EXPECT_THROW(normalize_log_weights(std::vector<double>{-kInf, -kInf}), std::domain_error);
}

TEST(NormalizeLogWeights, SumsToOneOnRandomInputs) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-800.0, 50.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(57);
    for (auto& r : raw) r = u(rng);
    const auto n = normalize_log_weights(raw);
    double total = 0.0;
    for (double l : n) total += std::exp(l);
    EXPECT_NEAR(total, 1.0, 1e-12);
    const double e = ess(n);
    EXPECT_GE(e, 1.0 - 1e-12);
    EXPECT_LE(e, 57.0 + 1e-9);
  }
}

TEST(RsWeightUpdate, Examples) {
  // w_prev = 1/200, p = 0.8, q = 1/8, lik = 0.5 -> 0.016
  const double lw = rs_weight_update(std::log(1.0 / 200.0), std::log(0.8), std::log(1.0 / 8.0), std::log(0.5));
  EXPECT_NEAR(std::exp(lw), 0.016, 1e-15);
  EXPECT_DOUBLE_EQ(rs_weight_update(-1.3, std::log(0.3), std::log(0.3), -2.0), -3.3);
  EXPECT_EQ(rs_weight_update(-4.0, std::log(0.2), std::log(0.2), 0.0), -4.0);
  EXPECT_THROW(rs_weight_update(0.0, 0.0, -kInf, 0.0), std::domain_error);
}

TEST(Resample, DegenerateWeightsCopyOneAncestor) {
  Rng rng(3);
  std::vector<double> w(6, 0.0);
  w[0] = 1.0;
  const auto anc = multinomial_ancestors(w, 6, rng);
  for (auto a : anc) EXPECT_EQ(a, 0u);
}

TEST(Resample, AncestorFrequencyWithinBinomialBounds) {
  Rng rng(4);
  const std::vector<double> w{0.7, 0.3};
  const int repeats = 10000;
  int first = 0;
  for (int r = 0; r < repeats; ++r) first += multinomial_ancestors(w, 1, rng)[0] == 0 ? 1 : 0;
  const double sigma = std::sqrt(0.7 * 0.3 / repeats);
  EXPECT_LE(std::fabs(static_cast<double>(first) / repeats - 0.7), 3.0 * sigma);
}

TEST(Resample, ResetsWeightsAndDetachesStates) {
  Tape tape;
  const Var theta = tape.leaf(2.0);
  ParticleSystemT<Var> sys;
  sys.n_regimes = 2;
  for (int i = 0; i < 5; ++i) {
    sys.states.push_back(theta * static_cast<double>(i));
    sys.log_weights.push_back(tape.constant(std::log(i == 2 ? 0.6 : 0.1)));
    sys.regimes.push_back(i % 2);
  }
  Rng rng(5);
  const auto out = resample(sys, rng);
  ASSERT_EQ(out.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(out.log_weights[i].value(), -std::log(5.0));
    EXPECT_FALSE(tape.requires_grad(out.states[i]));
    const auto v = out.states[i].value();
    const int ancestor = static_cast<int>(v / 2.0);
    EXPECT_EQ(out.regimes[i], ancestor % 2);
  }
}

TEST(Resample, CopiesPolyaCounts) {
  ParticleSystem sys;
  sys.n_regimes = 3;
  sys.states = {1.0, 2.0};
  sys.log_weights = {0.0, -kInf};
  sys.regimes = {2, 0};
  sys.regime_counts = {0, 1, 4, 7, 0, 0};
  Rng rng(6);
  const auto out = resample(sys, rng);
  EXPECT_EQ(out.regime_counts, (std::vector<int>{0, 1, 4, 0, 1, 4}));
  EXPECT_EQ(out.regimes, (std::vector<int>{2, 2}));
}

TEST(FilterConfig, Validation) {
  FilterConfig c = small_cfg(10);
  EXPECT_NO_THROW(c.validate(8));
  c.ess_threshold = 0.0;
  EXPECT_THROW(c.validate(8), std::invalid_argument);
  c.ess_threshold = 11.0;
  EXPECT_THROW(c.validate(8), std::invalid_argument);
  FilterConfig d = small_cfg(10, RegimeProposal::kDeterministic);
  EXPECT_THROW(d.validate(8), std::invalid_argument);
  EXPECT_NO_THROW(small_cfg(16, RegimeProposal::kDeterministic).validate(8));
  EXPECT_EQ(FilterConfig::with_particles(2000).ess_threshold, 1000.0);
}

TEST(RegimeProposalNames, RoundTrip) {
  for (auto p : {RegimeProposal::kUniform, RegimeProposal::kBootstrap, RegimeProposal::kDeterministic}) {
    EXPECT_EQ(parse_regime_proposal(to_string(p)), p);
  }
  EXPECT_THROW(parse_regime_proposal("greedy"), std::invalid_argument);
}

// ---- Analytic filters -------------------------------------------------------------

TEST(RsPf, SingleRegimeEqualsReferenceBootstrapFilter) {
  const CandidateModel m{0.5, -2.0, 0.5, -2.0, 0.1, 0.1};
  const ModelSuite suite = single_model_suite(m);
  const Trajectory traj = simulate(suite, 21);
  for (int n : {1, 7, 64}) {
    const FilterConfig cfg = small_cfg(n);
    Rng a(99), b(99);
    const auto out = run_rs_pf(suite, traj.observations, cfg, a);
    const auto ref = reference_bpf(m, traj.observations, n, cfg.ess_threshold, b);
    ASSERT_EQ(out.estimates.size(), ref.size());
    for (std::size_t t = 0; t < ref.size(); ++t) EXPECT_EQ(out.estimates[t], ref[t]) << "n=" << n << " t=" << t;
  }
}

TEST(RsPf, RejectsWrongObservationLength) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  Rng rng(1);
  const std::vector<double> obs(49, 0.0);
  EXPECT_THROW(run_rs_pf(suite, obs, small_cfg(10), rng), std::invalid_argument);
  EXPECT_THROW(run_mm_pf(suite, obs, small_cfg(10), rng), std::invalid_argument);
}

TEST(FilterInvariants, EveryStepEveryFilter) {
  for (auto kind : {DynamicsKind::kMarkov, DynamicsKind::kPolya}) {
    const ModelSuite suite = benchmark_suite(kind);
    const Trajectory traj = simulate(suite, 8);
    const NeuralRegimeSet nets = init_params(3, 8);
    const FilterConfig cfg = small_cfg(64);
    for (int which = 0; which < 4; ++which) {
      Rng rng(11);
      FilterOutput out;
      switch (which) {
        case 0: out = run_rs_pf(suite, traj.observations, cfg, rng); break;
        case 1: out = run_mm_pf(suite, traj.observations, cfg, rng); break;
        case 2: out = run_rs_dbpf(nets, suite.dynamics, traj.observations, cfg, rng); break;
        default: out = run_dbpf(nets.nets[0], traj.observations, cfg, rng); break;
      }
      ASSERT_EQ(out.estimates.size(), 50u);
      for (std::size_t t = 0; t < 50; ++t) {
        EXPECT_GE(out.ess_trace[t], 1.0 - 1e-9);
        EXPECT_LE(out.ess_trace[t], 64.0 + 1e-9);
        double row = 0.0;
        for (int k = 0; k < out.n_regimes; ++k) row += out.posterior(t, k);
        EXPECT_NEAR(row, 1.0, 1e-9);
      }
    }
  }
}

TEST(FilterInvariants, WeightsNormalisedAfterEachStep) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  const Trajectory traj = simulate(suite, 9);
  ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kSwitching, &suite.dynamics,
                                           small_cfg(128));
  Rng rng(2);
  pf.initialize(rng);
  for (std::size_t t = 0; t < traj.observations.size(); ++t) {
    pf.step(traj.observations[t], rng);
    double total = 0.0;
    for (double lw : pf.particles().log_weights) total += std::exp(lw);
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t i = 0; i < pf.particles().size(); ++i) {
      const auto c = pf.particles().counts(i);
      // m_0..m_t counted once each.
      EXPECT_EQ(std::accumulate(c.begin(), c.end(), 0), static_cast<int>(t) + 2);
    }
  }
}

TEST(FilterInvariants, BootstrapProposalRatioIsZero) {
  for (auto kind : {DynamicsKind::kMarkov, DynamicsKind::kPolya}) {
    const ModelSuite suite = benchmark_suite(kind);
    const Trajectory traj = simulate(suite, 10);
    ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kSwitching, &suite.dynamics,
                                             small_cfg(200, RegimeProposal::kBootstrap));
    Rng rng(3);
    pf.initialize(rng);
    for (double o : traj.observations) {
      pf.step(o, rng);
      for (double r : pf.log_proposal_ratios()) EXPECT_NEAR(r, 0.0, 1e-12);
    }
  }
}

TEST(FilterInvariants, UniformProposalRatioIsLogPTimesNm) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  FilterConfig c = small_cfg(50);
  c.ess_threshold = 1.0;  // ESS >= 1 always, so never resample
  ParticleFilter<double, AnalyticModel> keep(AnalyticModel(suite), RegimeMode::kSwitching, &suite.dynamics, c);
  Rng r2(4);
  keep.initialize(r2);
  const std::vector<int> prev = keep.particles().regimes;
  keep.step(0.3, r2);
  for (std::size_t i = 0; i < 50; ++i) {
    const int m = keep.particles().regimes[i];
    const double expected = std::log(suite.dynamics.transition(prev[i], m)) + std::log(8.0);
    EXPECT_NEAR(keep.log_proposal_ratios()[i], expected, 1e-12);
  }
}

TEST(FilterInvariants, DeterministicProposalBalancesRegimes) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  FilterConfig c = small_cfg(96, RegimeProposal::kDeterministic);
  c.ess_threshold = 1.0;
  ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kSwitching, &suite.dynamics, c);
  Rng rng(5);
  pf.initialize(rng);
  for (int t = 0; t < 5; ++t) {
    pf.step(1.0, rng);
    std::vector<int> count(8, 0);
    for (int m : pf.particles().regimes) ++count[static_cast<std::size_t>(m)];
    for (int k : count) EXPECT_EQ(k, 12);
  }
}

TEST(FilterInvariants, SeededDeterminism) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  const Trajectory traj = simulate(suite, 12);
  const NeuralRegimeSet nets = init_params(4, 8);
  const FilterConfig cfg = small_cfg(100);
  Rng a(7), b(7);
  const auto x = run_rs_pf(suite, traj.observations, cfg, a);
  const auto y = run_rs_pf(suite, traj.observations, cfg, b);
  EXPECT_EQ(x.estimates, y.estimates);
  EXPECT_EQ(x.ess_trace, y.ess_trace);
  EXPECT_EQ(x.regime_posterior, y.regime_posterior);
  Rng c(7), d(7);
  EXPECT_EQ(run_rs_dbpf(nets, suite.dynamics, traj.observations, cfg, c).estimates,
            run_rs_dbpf(nets, suite.dynamics, traj.observations, cfg, d).estimates);
}

TEST(FilterInvariants, OracleBetterWithoutObservationNoise) {
  ModelSuite noisy = benchmark_suite(DynamicsKind::kMarkov);
  ModelSuite clean = noisy;
  for (auto& c : clean.candidates) c.obs_noise_var = 0.0;
  const FilterConfig cfg = small_cfg(300, RegimeProposal::kBootstrap);
  std::vector<double> e_noisy, e_clean;
  for (std::uint64_t k = 0; k < 100; ++k) {
    // Same seed: identical regimes, states and v_t draws, scaled by 0 in the clean copy.
    const Trajectory tn = simulate(noisy, 500 + k, k);
    const Trajectory tc = simulate(clean, 500 + k, k);
    ASSERT_EQ(tn.states, tc.states);
    Rng r1(k), r2(k);
    e_noisy.push_back(rmse(run_rs_pf(noisy, tn.observations, cfg, r1).estimates,
                           std::span<const double>(tn.states).subspan(1)));
    e_clean.push_back(rmse(run_rs_pf(noisy, tc.observations, cfg, r2).estimates,
                           std::span<const double>(tc.states).subspan(1)));
  }
  EXPECT_LT(mean_rmse(e_clean), mean_rmse(e_noisy));
}

TEST(MmPf, RegimeFixedPerParticleUntilResampling) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  FilterConfig c = small_cfg(40);
  c.ess_threshold = 1.0;
  ParticleFilter<double, AnalyticModel> pf(AnalyticModel(suite), RegimeMode::kFixed, nullptr, c);
  Rng rng(8);
  pf.initialize(rng);
  const auto initial = pf.particles().regimes;
  for (int t = 0; t < 10; ++t) {
    pf.step(0.5, rng);
    EXPECT_EQ(pf.particles().regimes, initial);
  }
}

TEST(MmPf, BeatsWrongFixedModelWithoutSwitching) {
  ModelSuite still = benchmark_suite(DynamicsKind::kMarkov);
  std::vector<double> identity(64, 0.0);
  for (int k = 0; k < 8; ++k) identity[static_cast<std::size_t>(k * 9)] = 1.0;
  still.dynamics = RegimeDynamics::markov(8, identity);
  const ModelSuite wrong = single_model_suite(still.candidates[0]);
  const FilterConfig cfg = small_cfg(400);
  std::vector<double> mm, bpf;
  for (std::uint64_t k = 0; k < 40; ++k) {
    const Trajectory t = simulate(still, 900 + k, k);
    for (int m : t.regimes) ASSERT_EQ(m, t.regimes[0]);
    const auto truth = std::span<const double>(t.states).subspan(1);
    Rng r1(k), r2(k);
    mm.push_back(rmse(run_mm_pf(still, t.observations, cfg, r1).estimates, truth));
    bpf.push_back(rmse(run_rs_pf(wrong, t.observations, cfg, r2).estimates, truth));
  }
  EXPECT_LT(mean_rmse(mm), mean_rmse(bpf));
}

// ---- Learned filters ----------------------------------------------------------------

TEST(LearnedFilters, ZeroNetworksEstimateZero) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  const Trajectory traj = simulate(suite, 13);
  const NeuralRegimeSet zero = zero_params(8);
  Rng a(1), b(1);
  for (double e : run_rs_dbpf(zero, suite.dynamics, traj.observations, small_cfg(50), a).estimates) EXPECT_EQ(e, 0.0);
  for (double e : run_dbpf(zero.nets[0], traj.observations, small_cfg(50), b).estimates) EXPECT_EQ(e, 0.0);
}

TEST(LearnedFilters, SingleRegimeRsDbpfEqualsDbpfBitwise) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  const NeuralRegimeSet one = init_params(6, 1);
  for (const auto& dyn : {RegimeDynamics::markov(1, {1.0}), RegimeDynamics::polya({1.0})}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Trajectory traj = simulate(suite, 40 + seed);
      Rng a(seed), b(seed);
      const auto rs = run_rs_dbpf(one, dyn, traj.observations, small_cfg(77), a);
      const auto db = run_dbpf(one.nets[0], traj.observations, small_cfg(77), b);
      EXPECT_EQ(rs.estimates, db.estimates);
      EXPECT_EQ(rs.ess_trace, db.ess_trace);
    }
  }
}

TEST(LearnedFilters, TapeAndDoubleRunsAgree) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kMarkov);
  const Trajectory traj = simulate(suite, 14);
  const NeuralRegimeSet nets = init_params(7, 8);
  Tape tape;
  const BoundRegimeSet bound = bind(tape, nets);
  Rng a(3), b(3);
  const auto diff = run_rs_dbpf(bound.nets, suite.dynamics, traj.observations, small_cfg(60), a, tape);
  const auto plain = run_rs_dbpf(nets, suite.dynamics, traj.observations, small_cfg(60), b);
  const auto values = estimate_values(diff);
  for (std::size_t t = 0; t < values.size(); ++t) EXPECT_NEAR(values[t], plain.estimates[t], 1e-12);
  EXPECT_EQ(diff.resample_count, plain.resample_count);
}

TEST(LearnedFilters, RsDbpfGradientMatchesFiniteDifferencesWithoutResampling) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  const Trajectory traj = simulate(suite, 15);
  const std::vector<double> obs(traj.observations.begin(), traj.observations.begin() + 3);
  const NeuralRegimeSet nets = init_params(8, 8);
  FilterConfig cfg = small_cfg(4);
  cfg.ess_threshold = 1.0;
  const double err = ad::finite_diff_check(
      [&](Tape& tape, std::span<const Var> x) {
        std::vector<RegimeNetT<Var>> bound(8);
        std::size_t pos = 0;
        for (auto& net : bound) {
          net.proposer.assign(x.begin() + pos, x.begin() + pos + 33);
          net.embedder.assign(x.begin() + pos + 33, x.begin() + pos + 58);
          net.log_bandwidth = x[pos + 58];
          pos += 59;
        }
        Rng rng(17);
        const auto out = run_rs_dbpf(bound, suite.dynamics, obs, cfg, rng, tape);
        EXPECT_EQ(out.resample_count, 0u);
        return ad::sum(out.estimates);
      },
      nets.flatten(), 1e-5);
  EXPECT_LE(err, 1e-4);
}

TEST(LearnedFilters, GradientTruncatedAtResampling) {
  const ModelSuite suite = benchmark_suite(DynamicsKind::kPolya);
  const Trajectory traj = simulate(suite, 16);
  const NeuralRegimeSet nets = init_params(9, 8);
  FilterConfig cfg = small_cfg(32);
  cfg.ess_threshold = 32.0;  // resample whenever the weights are not exactly uniform
  const std::size_t steps = 6;

  // Full run on one tape, recording the particle system and RNG before each step.
  Tape tape;
  const BoundRegimeSet bound = bind(tape, nets);
  ParticleFilter<Var, NeuralModel<Var>> pf(NeuralModel<Var>(bound.nets), RegimeMode::kSwitching, &suite.dynamics,
                                           cfg, &tape);
  Rng rng(21);
  pf.initialize(rng);
  std::vector<ParticleSystem> snapshots;
  std::vector<Rng> rngs;
  std::vector<Var> estimates;
  for (std::size_t t = 0; t < steps; ++t) {
    ParticleSystem snap;
    snap.n_regimes = pf.particles().n_regimes;
    snap.regimes = pf.particles().regimes;
    snap.regime_counts = pf.particles().regime_counts;
    for (const auto& s : pf.particles().states) snap.states.push_back(s.value());
    for (const auto& w : pf.particles().log_weights) snap.log_weights.push_back(w.value());
    snapshots.push_back(snap);
    rngs.push_back(rng);
    const auto step = pf.step(traj.observations[t], rng);
    ASSERT_TRUE(step.resampled) << t;
    estimates.push_back(step.estimate);
  }
  const auto full = tape.backward(ad::sum(estimates), bound.leaves);

  // Per-segment reconstruction: each step on its own tape from detached inputs.
  std::vector<double> summed(nets.param_count(), 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    Tape seg;
    const BoundRegimeSet b = bind(seg, nets);
    ParticleFilter<Var, NeuralModel<Var>> p(NeuralModel<Var>(b.nets), RegimeMode::kSwitching, &suite.dynamics, cfg,
                                            &seg);
    auto& sys = p.particles();
    sys.n_regimes = snapshots[t].n_regimes;
    sys.regimes = snapshots[t].regimes;
    sys.regime_counts = snapshots[t].regime_counts;
    for (double s : snapshots[t].states) sys.states.push_back(seg.constant(s));
    for (double w : snapshots[t].log_weights) sys.log_weights.push_back(seg.constant(w));
    Rng r = rngs[t];
    const auto step = p.step(traj.observations[t], r);
    EXPECT_EQ(step.estimate.value(), estimates[t].value());
    const auto g = seg.backward(step.estimate, b.leaves);
    for (std::size_t k = 0; k < summed.size(); ++k) summed[k] += g.values()[k];
  }
  for (std::size_t k = 0; k < summed.size(); ++k) {
    EXPECT_NEAR(full.values()[k], summed[k], 1e-12 * std::max(1.0, std::fabs(summed[k]))) << k;
  }
}
