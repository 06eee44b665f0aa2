#pragma once

// Scalar reverse-mode automatic differentiation.
//
// A Tape records every primitive evaluated on Vars as a node holding its
// value and the local partial derivatives with respect to its inputs. Node
// ids are assigned in evaluation order, so the tape is topologically sorted
// and a single reverse sweep accumulates adjoints.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace rsdbpf::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  kConst,
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLn,
  kTanh,
  kSqrt,
  kAbs,
  kSquare,
  kSum,
  // bias + sum_k w_k * x_k over inputs laid out as [bias, w_1..w_n, x_1..x_n].
  kAffine,
};

const char* op_name(Op op);

class Tape;

/// Handle to a node on a Tape. Only valid against the tape that created it.
class Var {
 public:
  Var() = default;

  double value() const { return value_; }
  NodeId id() const { return id_; }
  const Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  friend Tape& tape_of(const Var& v);
  Var(Tape* tape, NodeId id, double value) : tape_(tape), id_(id), value_(value) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
  double value_ = 0.0;
};

/// Adjoints of a root with respect to the requested nodes, in request order.
class Gradient {
 public:
  Gradient() = default;
  Gradient(std::vector<NodeId> ids, std::vector<double> adjoints);

  std::size_t size() const { return ids_.size(); }
  std::span<const double> values() const { return adjoints_; }
  std::span<const NodeId> ids() const { return ids_; }

  /// Adjoint for `v`; throws std::out_of_range if `v` was not requested.
  double operator[](const Var& v) const;

 private:
  std::vector<NodeId> ids_;
  std::vector<double> adjoints_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Independent variable; gradients can be requested for it.
  Var leaf(double value);
  /// Value that does not carry gradient (also used to detach a Var).
  Var constant(double value);
  Var detach(const Var& v) { return constant(v.value()); }

  /// Generic entry point: records `op` applied to `inputs`.
  /// Arity: unary ops take 1 input, binary ops 2, kSum any number >= 1,
  /// kAffine 1 + 2n. kConst and kLeaf are not accepted here.
  Var record(Op op, std::span<const Var> inputs);

  Var add(const Var& x, const Var& y);
  Var sub(const Var& x, const Var& y);
  Var mul(const Var& x, const Var& y);
  Var div(const Var& x, const Var& y);
  Var neg(const Var& x);
  Var exp(const Var& x);
  Var ln(const Var& x);
  Var tanh(const Var& x);
  Var sqrt(const Var& x);
  Var abs(const Var& x);
  Var square(const Var& x);
  Var sum(std::span<const Var> xs);
  Var affine(const Var& bias, std::span<const Var> weights, std::span<const Var> inputs);

  /// Reverse sweep from `root`. A tape supports one backward pass; call
  /// clear() before recording a new graph.
  Gradient backward(const Var& root, std::span<const Var> wrt);

  /// Recomputes every node from its op and inputs and returns the largest
  /// absolute difference from the cached values.
  double replay_max_deviation() const;

  std::size_t size() const { return ops_.size(); }
  std::size_t edge_count() const { return edge_input_.size(); }
  bool consumed() const { return consumed_; }
  bool requires_grad(const Var& v) const;

  /// Drops all nodes (capacity is kept) and re-arms backward().
  void clear();

 private:
  void check(const Var& v) const {
    if (v.tape_ != this || v.id_ >= ops_.size()) [[unlikely]] fail_check(v);
  }
  [[noreturn]] void fail_check(const Var& v) const;
  Var push_node(Op op, double value, bool needs_grad);
  Var unary(Op op, const Var& x, double value, double partial);
  Var binary(Op op, const Var& x, const Var& y, double value, double dx, double dy);
  double evaluate(Op op, std::size_t node) const;

  std::vector<Op> ops_;
  std::vector<double> values_;
  std::vector<std::uint8_t> needs_grad_;
  std::vector<std::uint32_t> edge_begin_{0};
  std::vector<NodeId> edge_input_;
  std::vector<double> edge_partial_;
  std::vector<double> adjoint_;
  bool consumed_ = false;
};

/// Owning tape of a valid Var (throws std::invalid_argument otherwise).
Tape& tape_of(const Var& v);

// Operator sugar. Mixed Var/double operands record the double as a constant.
Var operator+(const Var& x, const Var& y);
Var operator-(const Var& x, const Var& y);
Var operator*(const Var& x, const Var& y);
Var operator/(const Var& x, const Var& y);
Var operator-(const Var& x);
Var operator+(const Var& x, double y);
Var operator+(double x, const Var& y);
Var operator-(const Var& x, double y);
Var operator-(double x, const Var& y);
Var operator*(const Var& x, double y);
Var operator*(double x, const Var& y);
Var operator/(const Var& x, double y);
Var operator/(double x, const Var& y);

Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sqrt(const Var& x);
Var abs(const Var& x);
Var square(const Var& x);
Var sum(std::span<const Var> xs);
Var affine(const Var& bias, std::span<const Var> weights, std::span<const Var> inputs);

inline double value_of(const Var& v) { return v.value(); }
inline double value_of(double v) { return v; }
inline double square(double x) { return x * x; }
double sum(std::span<const double> xs);
double affine(double bias, std::span<const double> weights, std::span<const double> inputs);

/// Function of a parameter vector recorded on the given tape.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|),
/// with the analytic gradient taken from a reverse sweep of `f`.
double finite_diff_check(const TapeFunction& f, std::span<const double> point, double step);

}  // namespace rsdbpf::ad
