#include "rsdbpf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rsdbpf::ad {

namespace {

bool is_unary(Op op) {
  switch (op) {
    case Op::kNeg:
    case Op::kExp:
    case Op::kLn:
    case Op::kTanh:
    case Op::kSqrt:
    case Op::kAbs:
    case Op::kSquare:
      return true;
    default:
      return false;
  }
}

bool is_binary(Op op) {
  return op == Op::kAdd || op == Op::kSub || op == Op::kMul || op == Op::kDiv;
}

double checked_ln_arg(double x) {
  if (!(x > 0.0)) throw std::domain_error("ln of non-positive value " + std::to_string(x));
  return x;
}

double checked_sqrt_arg(double x) {
  if (!(x > 0.0)) throw std::domain_error("sqrt of non-positive value " + std::to_string(x));
  return x;
}

double checked_divisor(double y) {
  if (y == 0.0) throw std::domain_error("division by zero");
  return y;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConst: return "const";
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLn: return "ln";
    case Op::kTanh: return "tanh";
    case Op::kSqrt: return "sqrt";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSum: return "sum";
    case Op::kAffine: return "affine";
  }
  return "?";
}

Gradient::Gradient(std::vector<NodeId> ids, std::vector<double> adjoints)
    : ids_(std::move(ids)), adjoints_(std::move(adjoints)) {}

double Gradient::operator[](const Var& v) const {
  auto it = std::find(ids_.begin(), ids_.end(), v.id());
  if (it == ids_.end()) throw std::out_of_range("node " + std::to_string(v.id()) + " not in gradient");
  return adjoints_[static_cast<std::size_t>(it - ids_.begin())];
}

void Tape::fail_check(const Var& v) const {
  if (v.tape_ != this) throw std::invalid_argument("Var belongs to a different tape");
  throw std::invalid_argument("Var id past end of tape (tape cleared?)");
}

bool Tape::requires_grad(const Var& v) const {
  check(v);
  return needs_grad_[v.id_] != 0;
}

Var Tape::push_node(Op op, double value, bool needs_grad) {
  if (consumed_) throw std::logic_error("tape already consumed by backward(); clear() it first");
  const auto id = static_cast<NodeId>(ops_.size());
  ops_.push_back(op);
  values_.push_back(value);
  needs_grad_.push_back(needs_grad ? 1 : 0);
  edge_begin_.push_back(static_cast<std::uint32_t>(edge_input_.size()));
  return Var(this, id, value);
}

Var Tape::leaf(double value) { return push_node(Op::kLeaf, value, true); }

Var Tape::constant(double value) { return push_node(Op::kConst, value, false); }

Var Tape::unary(Op op, const Var& x, double value, double partial) {
  check(x);
  edge_input_.push_back(x.id_);
  edge_partial_.push_back(partial);
  return push_node(op, value, needs_grad_[x.id_] != 0);
}

Var Tape::binary(Op op, const Var& x, const Var& y, double value, double dx, double dy) {
  check(x);
  check(y);
  edge_input_.push_back(x.id_);
  edge_partial_.push_back(dx);
  edge_input_.push_back(y.id_);
  edge_partial_.push_back(dy);
  return push_node(op, value, (needs_grad_[x.id_] | needs_grad_[y.id_]) != 0);
}

Var Tape::add(const Var& x, const Var& y) { return binary(Op::kAdd, x, y, x.value_ + y.value_, 1.0, 1.0); }

Var Tape::sub(const Var& x, const Var& y) { return binary(Op::kSub, x, y, x.value_ - y.value_, 1.0, -1.0); }

Var Tape::mul(const Var& x, const Var& y) {
  return binary(Op::kMul, x, y, x.value_ * y.value_, y.value_, x.value_);
}

Var Tape::div(const Var& x, const Var& y) {
  const double inv = 1.0 / checked_divisor(y.value_);
  const double q = x.value_ / y.value_;
  return binary(Op::kDiv, x, y, q, inv, -q * inv);
}

Var Tape::neg(const Var& x) { return unary(Op::kNeg, x, -x.value_, -1.0); }

Var Tape::exp(const Var& x) {
  const double e = std::exp(x.value_);
  return unary(Op::kExp, x, e, e);
}

Var Tape::ln(const Var& x) {
  const double v = checked_ln_arg(x.value_);
  return unary(Op::kLn, x, std::log(v), 1.0 / v);
}

Var Tape::tanh(const Var& x) {
  const double t = std::tanh(x.value_);
  return unary(Op::kTanh, x, t, 1.0 - t * t);
}

Var Tape::sqrt(const Var& x) {
  const double r = std::sqrt(checked_sqrt_arg(x.value_));
  return unary(Op::kSqrt, x, r, 0.5 / r);
}

Var Tape::abs(const Var& x) {
  // Subgradient 0 at exactly zero.
  const double v = x.value_;
  const double sign = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  return unary(Op::kAbs, x, std::fabs(v), sign);
}

Var Tape::square(const Var& x) { return unary(Op::kSquare, x, x.value_ * x.value_, 2.0 * x.value_); }

Var Tape::sum(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("sum of no inputs");
  for (const auto& x : xs) check(x);
  const std::size_t base = edge_input_.size();
  edge_input_.resize(base + xs.size());
  edge_partial_.resize(base + xs.size(), 1.0);
  double total = 0.0;
  std::uint8_t grad = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    total += xs[k].value_;
    grad |= needs_grad_[xs[k].id_];
    edge_input_[base + k] = xs[k].id_;
  }
  return push_node(Op::kSum, total, grad != 0);
}

Var Tape::affine(const Var& bias, std::span<const Var> weights, std::span<const Var> inputs) {
  const std::size_t n = weights.size();
  if (inputs.size() != n) throw std::invalid_argument("affine: weights/inputs size mismatch");
  check(bias);
  for (std::size_t k = 0; k < n; ++k) {
    check(weights[k]);
    check(inputs[k]);
  }
  const std::size_t base = edge_input_.size();
  edge_input_.resize(base + 1 + 2 * n);
  edge_partial_.resize(base + 1 + 2 * n);
  NodeId* ids = edge_input_.data() + base;
  double* partials = edge_partial_.data() + base;
  double total = bias.value_;
  std::uint8_t grad = needs_grad_[bias.id_];
  ids[0] = bias.id_;
  partials[0] = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const Var& w = weights[k];
    const Var& x = inputs[k];
    total += w.value_ * x.value_;
    grad |= needs_grad_[w.id_] | needs_grad_[x.id_];
    ids[1 + k] = w.id_;
    partials[1 + k] = x.value_;
    ids[1 + n + k] = x.id_;
    partials[1 + n + k] = w.value_;
  }
  return push_node(Op::kAffine, total, grad != 0);
}

Var Tape::record(Op op, std::span<const Var> inputs) {
  if (is_unary(op)) {
    if (inputs.size() != 1) throw std::invalid_argument(std::string(op_name(op)) + " takes one input");
    switch (op) {
      case Op::kNeg: return neg(inputs[0]);
      case Op::kExp: return exp(inputs[0]);
      case Op::kLn: return ln(inputs[0]);
      case Op::kTanh: return tanh(inputs[0]);
      case Op::kSqrt: return sqrt(inputs[0]);
      case Op::kAbs: return abs(inputs[0]);
      default: return square(inputs[0]);
    }
  }
  if (is_binary(op)) {
    if (inputs.size() != 2) throw std::invalid_argument(std::string(op_name(op)) + " takes two inputs");
    switch (op) {
      case Op::kAdd: return add(inputs[0], inputs[1]);
      case Op::kSub: return sub(inputs[0], inputs[1]);
      case Op::kMul: return mul(inputs[0], inputs[1]);
      default: return div(inputs[0], inputs[1]);
    }
  }
  if (op == Op::kSum) return sum(inputs);
  if (op == Op::kAffine) {
    if (inputs.empty() || inputs.size() % 2 == 0) {
      throw std::invalid_argument("affine takes 1 + 2n inputs");
    }
    const std::size_t n = (inputs.size() - 1) / 2;
    return affine(inputs[0], inputs.subspan(1, n), inputs.subspan(1 + n, n));
  }
  throw std::invalid_argument(std::string("record() does not accept ") + op_name(op));
}

Gradient Tape::backward(const Var& root, std::span<const Var> wrt) {
  check(root);
  for (const auto& v : wrt) check(v);
  std::vector<NodeId> ids;
  ids.reserve(wrt.size());
  for (const auto& v : wrt) {
    if (std::find(ids.begin(), ids.end(), v.id_) != ids.end()) {
      throw std::invalid_argument("gradient requested twice for node " + std::to_string(v.id_));
    }
    ids.push_back(v.id_);
  }
  if (consumed_) throw std::logic_error("backward() already run on this tape");
  consumed_ = true;

  std::vector<double>& adjoint = adjoint_;
  adjoint.assign(static_cast<std::size_t>(root.id_) + 1, 0.0);
  adjoint[root.id_] = 1.0;
  for (std::size_t node = root.id_ + 1; node-- > 0;) {
    const double a = adjoint[node];
    if (a == 0.0) continue;
    for (std::uint32_t e = edge_begin_[node]; e < edge_begin_[node + 1]; ++e) {
      const NodeId in = edge_input_[e];
      if (needs_grad_[in]) adjoint[in] += a * edge_partial_[e];
    }
  }

  std::vector<double> out;
  out.reserve(ids.size());
  for (NodeId id : ids) out.push_back(id <= root.id_ ? adjoint[id] : 0.0);
  return Gradient(std::move(ids), std::move(out));
}

double Tape::evaluate(Op op, std::size_t node) const {
  const std::uint32_t b = edge_begin_[node];
  const std::uint32_t e = edge_begin_[node + 1];
  auto in = [&](std::uint32_t k) { return values_[edge_input_[b + k]]; };
  switch (op) {
    case Op::kConst:
    case Op::kLeaf: return values_[node];
    case Op::kAdd: return in(0) + in(1);
    case Op::kSub: return in(0) - in(1);
    case Op::kMul: return in(0) * in(1);
    case Op::kDiv: return in(0) / in(1);
    case Op::kNeg: return -in(0);
    case Op::kExp: return std::exp(in(0));
    case Op::kLn: return std::log(in(0));
    case Op::kTanh: return std::tanh(in(0));
    case Op::kSqrt: return std::sqrt(in(0));
    case Op::kAbs: return std::fabs(in(0));
    case Op::kSquare: return in(0) * in(0);
    case Op::kSum: {
      double total = 0.0;
      for (std::uint32_t k = 0; k < e - b; ++k) total += in(k);
      return total;
    }
    case Op::kAffine: {
      const std::uint32_t n = (e - b - 1) / 2;
      double total = in(0);
      for (std::uint32_t k = 0; k < n; ++k) total += in(1 + k) * in(1 + n + k);
      return total;
    }
  }
  return values_[node];
}

double Tape::replay_max_deviation() const {
  double worst = 0.0;
  for (std::size_t node = 0; node < ops_.size(); ++node) {
    const std::uint32_t b = edge_begin_[node];
    for (std::uint32_t e = b; e < edge_begin_[node + 1]; ++e) {
      if (edge_input_[e] >= node) throw std::logic_error("tape is not topologically ordered");
    }
    worst = std::max(worst, std::fabs(evaluate(ops_[node], node) - values_[node]));
  }
  return worst;
}

void Tape::clear() {
  ops_.clear();
  values_.clear();
  needs_grad_.clear();
  edge_begin_.assign(1, 0);
  edge_input_.clear();
  edge_partial_.clear();
  adjoint_.clear();
  consumed_ = false;
}

Tape& tape_of(const Var& v) {
  if (v.tape_ == nullptr) throw std::invalid_argument("Var is not attached to a tape");
  return *v.tape_;
}

Var operator+(const Var& x, const Var& y) { return tape_of(x).add(x, y); }
Var operator-(const Var& x, const Var& y) { return tape_of(x).sub(x, y); }
Var operator*(const Var& x, const Var& y) { return tape_of(x).mul(x, y); }
Var operator/(const Var& x, const Var& y) { return tape_of(x).div(x, y); }
Var operator-(const Var& x) { return tape_of(x).neg(x); }

Var operator+(const Var& x, double y) {
  Tape& t = tape_of(x);
  return t.add(x, t.constant(y));
}
Var operator+(double x, const Var& y) {
  Tape& t = tape_of(y);
  return t.add(t.constant(x), y);
}
Var operator-(const Var& x, double y) {
  Tape& t = tape_of(x);
  return t.sub(x, t.constant(y));
}
Var operator-(double x, const Var& y) {
  Tape& t = tape_of(y);
  return t.sub(t.constant(x), y);
}
Var operator*(const Var& x, double y) {
  Tape& t = tape_of(x);
  return t.mul(x, t.constant(y));
}
Var operator*(double x, const Var& y) {
  Tape& t = tape_of(y);
  return t.mul(t.constant(x), y);
}
Var operator/(const Var& x, double y) {
  Tape& t = tape_of(x);
  return t.div(x, t.constant(y));
}
Var operator/(double x, const Var& y) {
  Tape& t = tape_of(y);
  return t.div(t.constant(x), y);
}

Var exp(const Var& x) { return tape_of(x).exp(x); }
Var log(const Var& x) { return tape_of(x).ln(x); }
Var tanh(const Var& x) { return tape_of(x).tanh(x); }
Var sqrt(const Var& x) { return tape_of(x).sqrt(x); }
Var abs(const Var& x) { return tape_of(x).abs(x); }
Var square(const Var& x) { return tape_of(x).square(x); }

Var sum(std::span<const Var> xs) {
  if (xs.empty()) throw std::invalid_argument("sum of no inputs");
  return tape_of(xs.front()).sum(xs);
}

Var affine(const Var& bias, std::span<const Var> weights, std::span<const Var> inputs) {
  return tape_of(bias).affine(bias, weights, inputs);
}

double sum(std::span<const double> xs) {
  double total = 0.0;
  for (double x : xs) total += x;
  return total;
}

double affine(double bias, std::span<const double> weights, std::span<const double> inputs) {
  if (weights.size() != inputs.size()) throw std::invalid_argument("affine: weights/inputs size mismatch");
  double total = bias;
  for (std::size_t k = 0; k < weights.size(); ++k) total += weights[k] * inputs[k];
  return total;
}

double finite_diff_check(const TapeFunction& f, std::span<const double> point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (double p : point) leaves.push_back(tape.leaf(p));
  const Var root = f(tape, leaves);
  const Gradient grad = tape.backward(root, leaves);

  auto evaluate_at = [&](const std::vector<double>& x) {
    Tape probe;
    std::vector<Var> xs;
    xs.reserve(x.size());
    for (double v : x) xs.push_back(probe.leaf(v));
    return f(probe, xs).value();
  };

  double worst = 0.0;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double centre = x[i];
    x[i] = centre + step;
    const double up = evaluate_at(x);
    x[i] = centre - step;
    const double down = evaluate_at(x);
    x[i] = centre;
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = grad.values()[i];
    worst = std::max(worst, std::fabs(analytic - numeric) / std::max(1.0, std::fabs(analytic)));
  }
  return worst;
}

}  // namespace rsdbpf::ad
