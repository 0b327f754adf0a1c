#include "deepritz/tape.hpp"

namespace deepritz {

const char* op_name(Op op) {
  switch (op) {
    case Op::Const: return "const";
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::NMul: return "nmul";
    case Op::Div: return "div";
    case Op::Aff: return "aff";
    case Op::Lin2: return "lin2";
    case Op::Abs: return "abs";
    case Op::Sgn: return "sgn";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Pow: return "pow";
    case Op::PowAbs: return "pow_abs";
    case Op::PowNN: return "pow_nn";
    case Op::MaxC: return "max_c";
    case Op::Relu2: return "relu2";
    case Op::Relu2D: return "relu2_deriv";
    case Op::Gelu: return "gelu";
    case Op::GeluD: return "gelu_deriv";
    case Op::S2Relu: return "s2relu";
    case Op::S2ReluD: return "s2relu_deriv";
    case Op::Dot: return "dot";
  }
  return "?";
}

void Tape::check_finite() const {
  for (std::size_t i = 0; i < val_.size(); ++i) {
    if (!std::isfinite(val_[i])) {
      throw NumericError("non-finite value in node " + std::to_string(i) + " (" +
                         op_name(meta_[i].kind) + ")");
    }
  }
}

std::int64_t Tape::replay_mismatch() const {
  auto v = [&](std::int32_t i) { return val_[static_cast<std::size_t>(i)]; };
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    const NodeMeta& nm = meta_[i];
    const std::int32_t ia = nm.a;
    const std::int32_t ib = nm.b;
    double r = val_[i];
    switch (nm.kind) {
      case Op::Const:
      case Op::Leaf: continue;
      case Op::Add: r = v(ia) + v(ib); break;
      case Op::Sub: r = v(ia) - v(ib); break;
      case Op::Mul: r = v(ia) * v(ib); break;
      case Op::NMul: r = -(v(ia) * v(ib)); break;
      case Op::Div: r = v(ia) / v(ib); break;
      case Op::Aff: r = nm.pa * v(ia) + nm.pb; break;
      case Op::Lin2: r = nm.pa * v(ia) + nm.pb * v(ib); break;
      case Op::Abs: r = std::abs(v(ia)); break;
      case Op::Sgn: r = v(ia) > 0.0 ? 1.0 : (v(ia) < 0.0 ? -1.0 : 0.0); break;
      case Op::Sin: r = std::sin(v(ia)); break;
      case Op::Cos: r = std::cos(v(ia)); break;
      case Op::Tanh: r = std::tanh(v(ia)); break;
      case Op::Exp: r = std::exp(v(ia)); break;
      case Op::Pow: r = std::pow(v(ia), nm.pb); break;
      case Op::PowAbs: r = pow_abs_val(v(ia), nm.pb); break;
      case Op::PowNN: r = pow_nn_val(v(ia), nm.pb); break;
      case Op::MaxC: r = v(ia) > nm.pb ? v(ia) : nm.pb; break;
      case Op::Relu2: r = relu2_triple(v(ia)).g; break;
      case Op::Relu2D: r = relu2_triple(v(ia)).g1; break;
      case Op::Gelu: r = gelu_triple(v(ia)).g; break;
      case Op::GeluD: r = gelu_triple(v(ia)).g1; break;
      case Op::S2Relu: r = s2relu_triple(v(ia)).g; break;
      case Op::S2ReluD: r = s2relu_triple(v(ia)).g1; break;
      case Op::Dot: {
        double s = 0.0;
        const std::size_t off = static_cast<std::size_t>(ia);
        for (std::size_t j = off; j < off + static_cast<std::size_t>(ib); ++j) {
          const std::uint64_t pr = dot_args_[j];
          s += val_[pr & 0xffffffffu] * val_[pr >> 32];
        }
        r = s;
        break;
      }
    }
    const bool same = (r == val_[i]) || (std::isnan(r) && std::isnan(val_[i]));
    if (!same) return static_cast<std::int64_t>(i);
  }
  return -1;
}

GradResult grad(const TapeProgram& program, std::span<const double> theta) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(theta.size());
  for (double t : theta) leaves.push_back(tape.leaf(t));
  const Var root = program(tape, leaves);
  tape.check_finite();
  tape.reverse(root);
  GradResult out;
  out.value = tape.value(root);
  out.gradient.resize(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) out.gradient[i] = tape.adjoint(leaves[i]);
  return out;
}

namespace {
double eval_program(const TapeProgram& program, std::span<const double> theta) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(theta.size());
  for (double t : theta) leaves.push_back(tape.leaf(t));
  return tape.value(program(tape, leaves));
}
}  // namespace

double check_gradient(const TapeProgram& program, std::span<const double> theta, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be positive");
  const GradResult ad = grad(program, theta);
  std::vector<double> bumped(theta.begin(), theta.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double keep = bumped[i];
    bumped[i] = keep + h;
    const double fp = eval_program(program, bumped);
    bumped[i] = keep - h;
    const double fm = eval_program(program, bumped);
    bumped[i] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(ad.gradient[i]), std::abs(fd), 1e-12});
    worst = std::max(worst, std::abs(ad.gradient[i] - fd) / denom);
  }
  return worst;
}

}  // namespace deepritz
