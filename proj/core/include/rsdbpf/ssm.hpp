#pragma once

// Ground-truth regime-switching state-space model: analytic candidate
// sub-models, the regime index process and a trajectory simulator.
//
// Regime indices are 0-based in this API. Files and reports use 1-based
// indices; conversion happens at the serialization boundary.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsdbpf/random.hpp"

namespace rsdbpf {

/// s_t = a s_{t-1} + b + u_t,  o_t = c sqrt|s_t| + d + v_t.
struct CandidateModel {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double d = 0.0;
  double dyn_noise_var = 0.1;
  double obs_noise_var = 0.1;

  bool operator==(const CandidateModel&) const = default;
};

double step_state(const CandidateModel& model, double s_prev, double u);
double emit_observation(const CandidateModel& model, double s, double v);
/// log N(obs; c sqrt|s| + d, obs_noise_var).
double observation_log_density(const CandidateModel& model, double obs, double s);

enum class DynamicsKind { kMarkov, kPolya };

std::string_view to_string(DynamicsKind kind);
/// Accepts "markov" or "polya"; throws std::invalid_argument otherwise.
DynamicsKind parse_dynamics(std::string_view name);

/// Law of the regime index process p(m_t | m_{0:t-1}).
///
/// Markov dynamics only look at the last index; Polya urn dynamics only at
/// per-regime counts. Filters keep exactly that summary per particle and use
/// the *_given overloads.
class RegimeDynamics {
 public:
  /// Empty dynamics with zero regimes; assign from markov()/polya().
  RegimeDynamics() = default;

  /// Row-major n x n matrix with P[j][k] = p(m_t = k | m_{t-1} = j).
  static RegimeDynamics markov(std::size_t n, std::vector<double> transition);
  static RegimeDynamics polya(std::vector<double> beta);

  DynamicsKind kind() const { return kind_; }
  int n_regimes() const { return n_; }
  double transition(int from, int to) const;
  std::span<const double> transition_matrix() const { return transition_; }
  std::span<const double> beta() const { return beta_; }

  /// p(m_t = k | history). Markov needs a non-empty history; for Polya an
  /// empty history gives the prior beta_k / sum(beta).
  double prob(std::span<const int> history, int k) const;

  /// Same law from the sufficient statistics: `last` = m_{t-1}, `counts[j]`
  /// = #{tau < t : m_tau = j}. Markov ignores counts, Polya ignores last.
  double prob_given(int last, std::span<const int> counts, int k) const;
  int sample_given(int last, std::span<const int> counts, Rng& rng) const;

  bool operator==(const RegimeDynamics&) const = default;

 private:
  void check_index(int k) const;

  DynamicsKind kind_ = DynamicsKind::kMarkov;
  int n_ = 0;
  std::vector<double> transition_;
  std::vector<double> beta_;
};

struct ModelSuite {
  std::vector<CandidateModel> candidates;
  RegimeDynamics dynamics;
  double init_low = -0.5;
  double init_high = 0.5;
  int horizon = 50;

  int n_regimes() const { return static_cast<int>(candidates.size()); }
  /// Throws std::invalid_argument on an inconsistent suite.
  void validate() const;

  bool operator==(const ModelSuite&) const = default;
};

/// The eight-model benchmark suite with Markov or Polya switching.
ModelSuite benchmark_suite(DynamicsKind kind);
RegimeDynamics benchmark_markov_dynamics();
RegimeDynamics benchmark_polya_dynamics(int n_regimes = 8);

struct Trajectory {
  std::uint64_t traj_id = 0;
  std::vector<double> states;        // s_0..s_T
  std::vector<int> regimes;          // m_0..m_T, 0-based
  std::vector<double> observations;  // o_1..o_T (observations[t-1] is o_t)

  int horizon() const { return static_cast<int>(observations.size()); }
  /// Throws std::invalid_argument if lengths or regime range are off.
  void validate(int n_regimes, int horizon) const;

  bool operator==(const Trajectory&) const = default;
};

Trajectory simulate(const ModelSuite& suite, std::uint64_t seed, std::uint64_t traj_id = 0);

}  // namespace rsdbpf
