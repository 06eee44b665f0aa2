#pragma once

// Learnable candidate models: one particle proposer and one observation
// likelihood per regime.
//
// The forward functions are templates over the scalar type so the same code
// runs on plain doubles (evaluation) and on ad::Var (training).

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rsdbpf/autodiff.hpp"

namespace rsdbpf {

/// Two-layer perceptron in -> hidden (tanh) -> out (identity).
/// Flat parameter layout: W1 (hidden x in, row-major), b1, W2 (out x hidden), b2.
struct MlpShape {
  int in = 1;
  int hidden = 8;
  int out = 1;

  constexpr std::size_t param_count() const {
    return static_cast<std::size_t>(in * hidden + hidden + hidden * out + out);
  }
};

inline constexpr int kMaxHidden = 64;
/// k_theta(s_{t-1}, eps).
inline constexpr MlpShape kProposerShape{2, 8, 1};
/// State embedding compared against the observation inside the likelihood.
inline constexpr MlpShape kEmbedderShape{1, 8, 1};

template <class T>
struct RegimeNetT {
  std::vector<T> proposer;
  std::vector<T> embedder;
  T log_bandwidth{};

  bool operator==(const RegimeNetT&) const = default;
};

using RegimeNet = RegimeNetT<double>;

/// Scalar output of a single-output MLP.
template <class T>
T mlp_forward(std::span<const T> params, const MlpShape& shape, std::span<const T> x) {
  using ad::affine;
  using std::tanh;
  const auto in = static_cast<std::size_t>(shape.in);
  const auto hidden = static_cast<std::size_t>(shape.hidden);
  const T* w1 = params.data();
  const T* b1 = w1 + hidden * in;
  const T* w2 = b1 + hidden;
  const T* b2 = w2 + hidden;
  std::array<T, kMaxHidden> h{};
  for (std::size_t k = 0; k < hidden; ++k) {
    h[k] = tanh(affine(b1[k], std::span<const T>(w1 + k * in, in), x));
  }
  return affine(*b2, std::span<const T>(w2, hidden), std::span<const T>(h.data(), hidden));
}

/// Reparameterised proposal s_t = k_theta(s_prev, eps) with eps ~ N(0, 1)
/// drawn by the caller.
template <class T>
T propose(const RegimeNetT<T>& net, const T& s_prev, const T& eps) {
  const std::array<T, 2> x{s_prev, eps};
  return mlp_forward<T>(net.proposer, kProposerShape, x);
}

template <class T>
T embed(const RegimeNetT<T>& net, const T& s) {
  const std::array<T, 1> x{s};
  return mlp_forward<T>(net.embedder, kEmbedderShape, x);
}

/// log N(obs; embed(s), sigma^2) with sigma = exp(log_bandwidth).
template <class T>
T log_likelihood(const RegimeNetT<T>& net, double obs, const T& s) {
  using std::exp;
  const T z = (obs - embed(net, s)) * exp(-net.log_bandwidth);
  return -0.5 * ad::square(z) - net.log_bandwidth - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Gaussian kernel value (1 / (sigma sqrt(2 pi))) exp(-(obs - embed(s))^2 / (2 sigma^2)).
template <class T>
T likelihood(const RegimeNetT<T>& net, double obs, const T& s) {
  using std::exp;
  return exp(log_likelihood(net, obs, s));
}

/// Parameter sets theta_1..theta_{N_m}, one RegimeNet per regime.
struct NeuralRegimeSet {
  std::vector<RegimeNet> nets;

  int n_regimes() const { return static_cast<int>(nets.size()); }
  static constexpr std::size_t params_per_regime() {
    return kProposerShape.param_count() + kEmbedderShape.param_count() + 1;
  }
  std::size_t param_count() const { return nets.size() * params_per_regime(); }

  /// Canonical order: per regime, proposer (W1, b1, W2, b2), embedder
  /// (W1, b1, W2, b2), log_bandwidth.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const NeuralRegimeSet&) const = default;
};

/// Weights ~ U(-sqrt(1/fan_in), sqrt(1/fan_in)), biases 0, log_bandwidth 0.
NeuralRegimeSet init_params(std::uint64_t seed, int n_regimes);
NeuralRegimeSet zero_params(int n_regimes);

/// Parameters recorded as leaves on a tape; `leaves` follows flatten() order.
struct BoundRegimeSet {
  std::vector<RegimeNetT<ad::Var>> nets;
  std::vector<ad::Var> leaves;
};

BoundRegimeSet bind(ad::Tape& tape, const NeuralRegimeSet& set);

/// One named block of the checkpoint file.
struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

/// Flat ordered list of named arrays matching flatten() order.
std::vector<NamedArray> named_arrays(const NeuralRegimeSet& set);
NeuralRegimeSet from_named_arrays(std::span<const NamedArray> arrays);

std::string checkpoint_to_json(const NeuralRegimeSet& set);
NeuralRegimeSet checkpoint_from_json(std::string_view text);
void save_checkpoint(const NeuralRegimeSet& set, const std::filesystem::path& path);
NeuralRegimeSet load_checkpoint(const std::filesystem::path& path);

}  // namespace rsdbpf
