#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "deepritz/activations.hpp"
#include "deepritz/kernels.hpp"

namespace deepritz {

// Scalar reverse-mode tape. Nodes are appended in topological order; each
// node stores its operand indices, the local partial derivatives evaluated
// at record time, and the forward value. The reverse sweep only reads the
// stored partials, so it is independent of the operation kind except for
// fused dot nodes, whose partials are the partner operand values.
//
// All arithmetic is double precision. Sums recorded through dot nodes run
// left-to-right over the argument pairs, which is what makes tape values
// agree bit-for-bit with the plain-double evaluation paths.

enum class Op : std::uint8_t {
  Const,
  Leaf,
  Add,
  Sub,
  Mul,
  NMul,   // -(a*b)
  Div,
  Aff,    // c1*a + c2, constants in (pa, pb)
  Lin2,   // c1*a + c2*b, constants in (pa, pb)
  Abs,
  Sgn,
  Sin,
  Cos,
  Tanh,
  Exp,
  Pow,     // a^c, exponent c in pb
  PowAbs,  // |a|^c with 0 at a=0, exponent in pb
  PowNN,   // a^c for a>=0 with a hard zero branch at a=0, exponent in pb
  MaxC,    // max(a, c), constant in pb
  Relu2,
  Relu2D,
  Gelu,
  GeluD,
  S2Relu,
  S2ReluD,
  Dot,  // sum of products over index pairs; a = args offset, b = pair count
};

const char* op_name(Op op);

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
 public:
  struct Mark {
    std::size_t nodes = 0;
    std::size_t args = 0;
  };

  struct NodeMeta {
    Op kind;
    std::int32_t a;
    std::int32_t b;
    double pa;
    double pb;
  };

  Tape() { reserve(1 << 12); }

  void reserve(std::size_t n) {
    meta_.reserve(n);
    val_.reserve(n);
    adj_.reserve(n);
    dot_args_.reserve(n);
  }

  std::size_t size() const { return meta_.size(); }
  Mark mark() const { return {meta_.size(), dot_args_.size()}; }

  // Truncates everything recorded after `m`; earlier nodes are untouched.
  void rewind(const Mark& m) {
    meta_.resize(m.nodes);
    val_.resize(m.nodes);
    adj_.resize(m.nodes);
    dot_args_.resize(m.args);
    if (one_.valid() && static_cast<std::size_t>(one_.idx) >= m.nodes) one_ = Var{};
  }

  void clear() {
    rewind(Mark{});
    one_ = Var{};
  }

  double value(Var v) const { return val_[static_cast<std::size_t>(v.idx)]; }
  double adjoint(Var v) const { return adj_[static_cast<std::size_t>(v.idx)]; }

  Var constant(double v) { return push(Op::Const, -1, -1, 0.0, 0.0, v); }
  Var leaf(double v) { return push(Op::Leaf, -1, -1, 0.0, 0.0, v); }

  // Shared constant 1.0, used as the partner index for bias terms in dots.
  Var one() {
    if (!one_.valid()) one_ = constant(1.0);
    return one_;
  }

  Var add(Var x, Var y) { return push(Op::Add, x.idx, y.idx, 1.0, 1.0, val(x) + val(y)); }
  Var sub(Var x, Var y) { return push(Op::Sub, x.idx, y.idx, 1.0, -1.0, val(x) - val(y)); }
  Var mul(Var x, Var y) {
    return push(Op::Mul, x.idx, y.idx, val(y), val(x), val(x) * val(y));
  }
  Var nmul(Var x, Var y) {
    return push(Op::NMul, x.idx, y.idx, -val(y), -val(x), -(val(x) * val(y)));
  }
  Var div(Var x, Var y) {
    const double vy = val(y);
    const double v = val(x) / vy;
    return push(Op::Div, x.idx, y.idx, 1.0 / vy, -v / vy, v);
  }
  // c1*x + c2
  Var aff(Var x, double c1, double c2) {
    return push(Op::Aff, x.idx, -1, c1, c2, c1 * val(x) + c2);
  }
  Var scale(Var x, double c) { return aff(x, c, 0.0); }
  Var neg(Var x) { return aff(x, -1.0, 0.0); }
  // c1*x + c2*y
  Var lin2(Var x, Var y, double c1, double c2) {
    return push(Op::Lin2, x.idx, y.idx, c1, c2, c1 * val(x) + c2 * val(y));
  }
  Var abs(Var x) {
    const double v = val(x);
    const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return push(Op::Abs, x.idx, -1, s, 0.0, std::abs(v));
  }
  Var sgn(Var x) {
    const double v = val(x);
    const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
    return push(Op::Sgn, x.idx, -1, 0.0, 0.0, s);
  }
  Var sin(Var x) { return push(Op::Sin, x.idx, -1, std::cos(val(x)), 0.0, std::sin(val(x))); }
  Var cos(Var x) { return push(Op::Cos, x.idx, -1, -std::sin(val(x)), 0.0, std::cos(val(x))); }
  Var tanh(Var x) {
    const double t = std::tanh(val(x));
    return push(Op::Tanh, x.idx, -1, 1.0 - t * t, 0.0, t);
  }
  Var exp(Var x) {
    const double e = std::exp(val(x));
    return push(Op::Exp, x.idx, -1, e, 0.0, e);
  }
  Var pow(Var x, double c) {
    const double v = val(x);
    return push(Op::Pow, x.idx, -1, c * std::pow(v, c - 1.0), c, std::pow(v, c));
  }
  // |x|^c with value and derivative 0 at x=0 (sign(0) := 0).
  Var pow_abs(Var x, double c) {
    const double v = val(x);
    return push(Op::PowAbs, x.idx, -1, pow_abs_d1(v, c), c, pow_abs_val(v, c));
  }
  // x^c for x >= 0, hard zero branch at x=0 (value and derivative).
  Var pow_nn(Var x, double c) {
    const double v = val(x);
    return push(Op::PowNN, x.idx, -1, pow_nn_d1(v, c), c, pow_nn_val(v, c));
  }
  Var max_c(Var x, double c) {
    const double v = val(x);
    const bool above = v > c;
    return push(Op::MaxC, x.idx, -1, above ? 1.0 : 0.0, c, above ? v : c);
  }

  Var relu2(Var x) {
    const ActTriple t = relu2_triple(val(x));
    return push(Op::Relu2, x.idx, -1, t.g1, 0.0, t.g);
  }
  Var relu2_deriv(Var x) {
    const ActTriple t = relu2_triple(val(x));
    return push(Op::Relu2D, x.idx, -1, t.g2, 0.0, t.g1);
  }
  Var gelu(Var x) {
    const ActTriple t = gelu_triple(val(x));
    return push(Op::Gelu, x.idx, -1, t.g1, 0.0, t.g);
  }
  Var gelu_deriv(Var x) {
    const ActTriple t = gelu_triple(val(x));
    return push(Op::GeluD, x.idx, -1, t.g2, 0.0, t.g1);
  }
  Var s2relu(Var x) {
    const ActTriple t = s2relu_triple(val(x));
    return push(Op::S2Relu, x.idx, -1, t.g1, 0.0, t.g);
  }
  Var s2relu_deriv(Var x) {
    const ActTriple t = s2relu_triple(val(x));
    return push(Op::S2ReluD, x.idx, -1, t.g2, 0.0, t.g1);
  }

  Var activation(Activation a, Var x) {
    switch (a) {
      case Activation::Relu2: return relu2(x);
      case Activation::GeluApprox: return gelu(x);
      default: return s2relu(x);
    }
  }
  Var activation_deriv(Activation a, Var x) {
    switch (a) {
      case Activation::Relu2: return relu2_deriv(x);
      case Activation::GeluApprox: return gelu_deriv(x);
      default: return s2relu_deriv(x);
    }
  }

  // Value node and derivative node from one shared kernel evaluation;
  // records the same two nodes as activation() + activation_deriv().
  struct VarPair {
    Var first, second;
  };
  VarPair activation_pair(Activation a, Var x) {
    const ActTriple t = act_triple(a, val(x));
    Op kv = Op::Relu2, kd = Op::Relu2D;
    if (a == Activation::GeluApprox) {
      kv = Op::Gelu;
      kd = Op::GeluD;
    } else if (a == Activation::S2Relu) {
      kv = Op::S2Relu;
      kd = Op::S2ReluD;
    }
    const Var g = push(kv, x.idx, -1, t.g1, 0.0, t.g);
    const Var gd = push(kd, x.idx, -1, t.g2, 0.0, t.g1);
    return {g, gd};
  }

  // cos node and sin node sharing one evaluation of each kernel.
  VarPair sincos_pair(Var x) {
    const double c = std::cos(val(x));
    const double s = std::sin(val(x));
    const Var cv = push(Op::Cos, x.idx, -1, -s, 0.0, c);
    const Var sv = push(Op::Sin, x.idx, -1, c, 0.0, s);
    return {cv, sv};
  }

  // Fused sum of products: value = sum_k val[xa_k] * val[xb_k], accumulated
  // left-to-right. Pairs are staged through dot_begin()/dot_arg()/dot_end().
  void dot_begin() { dot_start_ = dot_args_.size(); }
  void dot_arg(Var x, Var y) {
    dot_args_.push_back(pack(x.idx, y.idx));
  }
  Var dot_end() {
    double s = 0.0;
    for (std::size_t j = dot_start_; j < dot_args_.size(); ++j) {
      const std::uint64_t pr = dot_args_[j];
      s += val_[pr & 0xffffffffu] * val_[pr >> 32];
    }
    const auto pairs = static_cast<std::int32_t>(dot_args_.size() - dot_start_);
    return push(Op::Dot, static_cast<std::int32_t>(dot_start_), pairs, 0.0, 0.0, s);
  }

  // Seeds adj[root] += 1 and sweeps adjoints down to node index `lo`.
  // Adjoints of nodes below `lo` keep accumulating across calls, which is
  // what batched per-point gradient evaluation relies on.
  void reverse(Var root, std::size_t lo = 0) {
    adj_[static_cast<std::size_t>(root.idx)] += 1.0;
    const std::int64_t last = static_cast<std::int64_t>(meta_.size()) - 1;
    for (std::int64_t i = last; i >= static_cast<std::int64_t>(lo); --i) {
      const double g = adj_[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      const NodeMeta& nm = meta_[static_cast<std::size_t>(i)];
      if (nm.kind == Op::Dot) {
        const std::size_t off = static_cast<std::size_t>(nm.a);
        const std::size_t end = off + static_cast<std::size_t>(nm.b);
        for (std::size_t j = off; j < end; ++j) {
          const std::uint64_t pr = dot_args_[j];
          const std::size_t ia = pr & 0xffffffffu;
          const std::size_t ib = pr >> 32;
          adj_[ia] += val_[ib] * g;
          adj_[ib] += val_[ia] * g;
        }
      } else if (nm.a >= 0) {
        adj_[static_cast<std::size_t>(nm.a)] += nm.pa * g;
        if (nm.b >= 0) adj_[static_cast<std::size_t>(nm.b)] += nm.pb * g;
      }
    }
  }

  void zero_adjoints(std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) adj_[i] = 0.0;
  }
  void zero_all_adjoints() { zero_adjoints(0, adj_.size()); }

  // Throws if any recorded value is non-finite, naming the first bad node.
  void check_finite() const;

  // Recomputes every node value from the leaves and verifies the stored
  // values are reproduced exactly. Returns the first mismatching index or
  // -1 if the tape replays cleanly.
  std::int64_t replay_mismatch() const;

  std::span<const double> values() const { return val_; }
  Op kind_of(Var v) const { return meta_[static_cast<std::size_t>(v.idx)].kind; }
  std::span<const NodeMeta> nodes() const { return meta_; }
  std::span<const std::uint64_t> dot_pairs() const { return dot_args_; }

 private:
  static std::uint64_t pack(std::int32_t x, std::int32_t y) {
    return static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) |
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(y)) << 32);
  }

  double val(Var v) const { return val_[static_cast<std::size_t>(v.idx)]; }

  Var push(Op k, std::int32_t a, std::int32_t b, double pa, double pb, double v) {
    meta_.push_back(NodeMeta{k, a, b, pa, pb});
    val_.push_back(v);
    adj_.push_back(0.0);
    return Var{this, static_cast<std::int32_t>(meta_.size() - 1)};
  }

  std::vector<NodeMeta> meta_;
  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<std::uint64_t> dot_args_;
  std::size_t dot_start_ = 0;
  Var one_{};
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Var operator+(Var x, Var y) { return x.tape->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape->div(x, y); }
inline Var operator-(Var x) { return x.tape->neg(x); }
inline Var operator+(Var x, double c) { return x.tape->aff(x, 1.0, c); }
inline Var operator+(double c, Var x) { return x.tape->aff(x, 1.0, c); }
inline Var operator-(Var x, double c) { return x.tape->aff(x, 1.0, -c); }
inline Var operator-(double c, Var x) { return x.tape->aff(x, -1.0, c); }
inline Var operator*(Var x, double c) { return x.tape->scale(x, c); }
inline Var operator*(double c, Var x) { return x.tape->scale(x, c); }
inline Var operator/(Var x, double c) { return x.tape->scale(x, 1.0 / c); }
inline Var abs(Var x) { return x.tape->abs(x); }
inline Var sin(Var x) { return x.tape->sin(x); }
inline Var cos(Var x) { return x.tape->cos(x); }
inline Var tanh(Var x) { return x.tape->tanh(x); }
inline Var exp(Var x) { return x.tape->exp(x); }
inline Var pow(Var x, double c) { return x.tape->pow(x, c); }
inline Var max(Var x, double c) { return x.tape->max_c(x, c); }

// A scalar program over a flat parameter vector, recorded on a caller tape.
using TapeProgram = std::function<Var(Tape&, std::span<const Var>)>;

struct GradResult {
  double value = 0.0;
  std::vector<double> gradient;
};

// Records `program` at theta, checks every intermediate for finiteness and
// returns the value together with d(value)/d(theta).
GradResult grad(const TapeProgram& program, std::span<const double> theta);

// Max over coordinates of |AD - FD| / max(|AD|, |FD|, 1e-12), central
// differences with step h.
double check_gradient(const TapeProgram& program, std::span<const double> theta, double h);

}  // namespace deepritz
