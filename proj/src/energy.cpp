#include "deepritz/energy.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace deepritz {

namespace {

constexpr std::int64_t kChunk = 1024;

// Left-to-right accumulation in fixed-size chunks, then left-to-right over
// chunk subtotals. Both the tape and the plain-double paths use this exact
// nesting so their sums agree bit-for-bit.
struct ChunkedVarSum {
  Tape* tape;
  Var total{};
  Var chunk{};
  std::int64_t in_chunk = 0;

  explicit ChunkedVarSum(Tape& t) : tape(&t) {}

  void add(Var x) {
    chunk = chunk.valid() ? tape->add(chunk, x) : x;
    if (++in_chunk == kChunk) flush();
  }
  void flush() {
    if (chunk.valid()) {
      total = total.valid() ? tape->add(total, chunk) : chunk;
      chunk = Var{};
      in_chunk = 0;
    }
  }
  Var result() {
    flush();
    return total.valid() ? total : tape->constant(0.0);
  }
};

struct ChunkedSum {
  double total = 0.0;
  double chunk = 0.0;
  bool any_total = false;
  bool any_chunk = false;
  std::int64_t in_chunk = 0;

  void add(double x) {
    chunk = any_chunk ? chunk + x : x;
    any_chunk = true;
    if (++in_chunk == kChunk) flush();
  }
  void flush() {
    if (any_chunk) {
      total = any_total ? total + chunk : chunk;
      any_total = true;
      any_chunk = false;
      in_chunk = 0;
    }
  }
  double result() {
    flush();
    return any_total ? total : 0.0;
  }
};

// Per-quadrature-point caches of f and the exponent, rebuilt whenever the
// interior set changes (e.g. on re-sampling).
struct Workspace {
  std::vector<double> f_vals;
  std::vector<double> p_vals;
  bool p_varies = false;
};

Workspace make_workspace(const ProblemSpec& spec) {
  Workspace ws;
  const QuadratureSet& q = spec.interior;
  ws.f_vals.resize(static_cast<std::size_t>(q.n));
  ws.p_varies = spec.exponent_varies();
  if (ws.p_varies) ws.p_vals.resize(static_cast<std::size_t>(q.n));
  for (std::int64_t i = 0; i < q.n; ++i) {
    const auto z = q.point(i);
    const auto pc = z.subspan(0, static_cast<std::size_t>(spec.param_dim));
    const auto x = z.subspan(static_cast<std::size_t>(spec.param_dim));
    ws.f_vals[static_cast<std::size_t>(i)] = spec.rhs.eval(pc, x);
    if (ws.p_varies) ws.p_vals[static_cast<std::size_t>(i)] = spec.p_of.eval(pc, {});
  }
  return ws;
}

// Point-varying scalars enter the recorded program through these nodes, so
// one recorded body can be re-evaluated with patched inputs.
struct PointInputs {
  std::span<const Var> z;
  Var f{};
  Var eta{}, deta{};
};

// Nodes whose constant fields change per point under a varying exponent.
struct PatchSlots {
  std::int32_t pow_node = -1;   // pb holds p/2
  std::int32_t invp_node = -1;  // pa holds 1/p
};

bool lift_active(const ProblemSpec& spec) { return spec.lift.kind != LiftSpec::Kind::None; }

// The single point program shared by every evaluation path: lifted network
// jet, then the energy density.
Var record_point_body(Tape& tape, const ProblemSpec& spec, const BoundNet& net,
                      const PointInputs& in, std::span<const int> tracked, double p_here,
                      PatchSlots* slots) {
  Jet u = forward_jet(net, in.z, tracked);
  if (lift_active(spec)) {
    Jet lifted;
    lifted.ndirs = u.ndirs;
    lifted.v = tape.mul(in.eta, u.v);
    const Var d0 = u.dir(0);
    lifted.d[0] = d0.valid() ? tape.add(tape.mul(in.eta, d0), tape.mul(in.deta, u.v))
                             : tape.mul(in.deta, u.v);
    u = lifted;
  }
  Var s{};
  if (u.ndirs == 1) {
    const Var d0 = u.dir(0).valid() ? u.dir(0) : tape.constant(0.0);
    s = tape.mul(d0, d0);
  } else {
    tape.dot_begin();
    for (int t = 0; t < u.ndirs; ++t) {
      const Var dt = u.dir(t).valid() ? u.dir(t) : tape.constant(0.0);
      tape.dot_arg(dt, dt);
    }
    s = tape.dot_end();
  }
  Var grad_term{};
  if (!spec.exponent_varies() && p_here == 2.0) {
    grad_term = tape.scale(s, 0.5);
  } else {
    const Var pw = tape.pow_nn(s, 0.5 * p_here);
    grad_term = tape.scale(pw, 1.0 / p_here);
    if (slots) {
      slots->pow_node = pw.idx;
      slots->invp_node = grad_term.idx;
    }
  }
  Var density = tape.sub(grad_term, tape.mul(in.f, u.v));
  if (spec.has_mass_term()) {
    density = tape.lin2(density, tape.mul(u.v, u.v), 1.0, 0.5);
  }
  return density;
}

// Scalar path: inputs materialize as fresh constants for each point.
Var record_interior_point(Tape& tape, const ProblemSpec& spec, const BoundNet& net,
                          const Workspace& ws, std::span<const int> tracked, std::int64_t i,
                          std::vector<Var>& zbuf) {
  const auto z = spec.interior.point(i);
  PointInputs in;
  zbuf.resize(z.size());
  for (std::size_t d = 0; d < z.size(); ++d) zbuf[d] = tape.constant(z[d]);
  in.z = zbuf;
  in.f = tape.constant(ws.f_vals[static_cast<std::size_t>(i)]);
  if (lift_active(spec)) {
    const LiftEval le = lift_eval(spec.lift, z, spec.param_dim);
    in.eta = tape.constant(le.eta);
    in.deta = tape.constant(le.deta[0]);
  }
  const double p = ws.p_varies ? ws.p_vals[static_cast<std::size_t>(i)] : spec.p;
  return record_point_body(tape, spec, net, in, tracked, p, nullptr);
}

Var record_boundary_point(Tape& tape, const ProblemSpec& spec, const BoundNet& net,
                          std::int64_t i) {
  const auto z = spec.boundary->point(i);
  const Var u = forward(net, z);
  return tape.pow_abs(u, spec.p);
}

std::vector<int> tracked_indices(const ProblemSpec& spec) {
  std::vector<int> tracked(static_cast<std::size_t>(spec.spatial_dim));
  for (int t = 0; t < spec.spatial_dim; ++t) tracked[static_cast<std::size_t>(t)] = spec.param_dim + t;
  return tracked;
}

[[noreturn]] void bad_point(const char* where, const ProblemSpec& spec, std::int64_t i,
                            bool boundary_point) {
  const auto z = boundary_point ? spec.boundary->point(i) : spec.interior.point(i);
  std::string msg = std::string("non-finite energy density (") + where + ") at " +
                    (boundary_point ? "boundary" : "interior") + " point " + std::to_string(i) +
                    " [";
  for (std::size_t d = 0; d < z.size(); ++d) {
    if (d) msg += ", ";
    msg += std::to_string(z[d]);
  }
  msg += "]";
  throw NumericError(msg);
}

// ----------------------------------------------------------------------
// Batched replay: the point body is recorded once, then re-evaluated for
// kLanes points at a time over lane-major value/adjoint/partial arrays.
// Lane arithmetic is elementwise, so each lane reproduces the scalar tape
// value bit for bit.
class PointBatchEngine {
 public:
  static constexpr int kLanes = 4;

  PointBatchEngine(const ProblemSpec& spec, const ArchSpec& arch, std::span<const double> theta,
                   const Workspace& ws)
      : spec_(spec), ws_(ws) {
    tape_.reserve(1 << 14);
    net_ = bind_net(tape_, arch, theta);
    const auto z0 = spec.interior.point(0);
    z_nodes_.resize(z0.size());
    for (std::size_t d = 0; d < z0.size(); ++d) z_nodes_[d] = tape_.constant(z0[d]);
    inputs_.z = z_nodes_;
    inputs_.f = tape_.constant(0.0);
    if (lift_active(spec)) {
      inputs_.eta = tape_.constant(1.0);
      inputs_.deta = tape_.constant(0.0);
    }
    base_ = tape_.mark().nodes;
    tracked_ = tracked_indices(spec);
    const double p0 = ws.p_varies ? ws.p_vals[0] : spec.p;
    density_ = record_point_body(tape_, spec_, net_, inputs_, tracked_, p0, &slots_);

    n_ = tape_.size();
    body_ = n_ - base_;
    val_.assign(n_ * kLanes, 0.0);
    adj_.assign(n_ * kLanes, 0.0);
    pa_.assign(body_ * kLanes, 0.0);
    pb_.assign(body_ * kLanes, 0.0);
    const auto tv = tape_.values();
    for (std::size_t i = 0; i < n_; ++i) {
      for (int l = 0; l < kLanes; ++l) val_[i * kLanes + static_cast<std::size_t>(l)] = tv[i];
    }
    pow_half_[0] = pow_half_[1] = pow_half_[2] = pow_half_[3] = 0.5 * spec.p;
    inv_p_[0] = inv_p_[1] = inv_p_[2] = inv_p_[3] = 1.0 / spec.p;
  }

  std::size_t leaf_count() const { return net_.params.size(); }

  void begin_chunk() {
    std::memset(adj_.data(), 0, adj_.size() * sizeof(double));
  }

  // Evaluates points [first, first+count), count <= kLanes, accumulating
  // the densities into `sum` in point order and their adjoints into the
  // engine's leaf slots. Returns the first non-finite point or -1.
  std::int64_t eval_group(std::int64_t first, int count, ChunkedSum& sum) {
    for (int l = 0; l < count; ++l) patch_lane(l, first + l);
    for (int l = count; l < kLanes; ++l) patch_lane(l, first + count - 1);
    forward_lanes();
    const std::size_t droot = static_cast<std::size_t>(density_.idx);
    std::int64_t bad = -1;
    for (int l = 0; l < count; ++l) {
      const double dv = val_[droot * kLanes + static_cast<std::size_t>(l)];
      if (!std::isfinite(dv)) {
        if (bad < 0) bad = first + l;
        continue;
      }
      sum.add(dv);
    }
    if (bad >= 0) return bad;
    reverse_lanes(count);
    return -1;
  }

  // Chunk-ordered lane reduction of the parameter adjoints.
  void extract_grad(std::span<double> grad) {
    for (std::size_t k = 0; k < net_.params.size(); ++k) {
      const std::size_t idx = static_cast<std::size_t>(net_.params[k].idx) * kLanes;
      grad[k] = ((adj_[idx] + adj_[idx + 1]) + adj_[idx + 2]) + adj_[idx + 3];
    }
  }

 private:
  void patch_lane(int lane, std::int64_t point) {
    const auto z = spec_.interior.point(point);
    for (std::size_t d = 0; d < z.size(); ++d) {
      val_[static_cast<std::size_t>(inputs_.z[d].idx) * kLanes + static_cast<std::size_t>(lane)] =
          z[d];
    }
    val_[static_cast<std::size_t>(inputs_.f.idx) * kLanes + static_cast<std::size_t>(lane)] =
        ws_.f_vals[static_cast<std::size_t>(point)];
    if (lift_active(spec_)) {
      const LiftEval le = lift_eval(spec_.lift, z, spec_.param_dim);
      val_[static_cast<std::size_t>(inputs_.eta.idx) * kLanes + static_cast<std::size_t>(lane)] =
          le.eta;
      val_[static_cast<std::size_t>(inputs_.deta.idx) * kLanes + static_cast<std::size_t>(lane)] =
          le.deta[0];
    }
    if (ws_.p_varies) {
      const double p = ws_.p_vals[static_cast<std::size_t>(point)];
      pow_half_[lane] = 0.5 * p;
      inv_p_[lane] = 1.0 / p;
    }
  }

  void forward_lanes() {
    const auto nodes = tape_.nodes();
    const auto pairs = tape_.dot_pairs();
    for (std::size_t i = base_; i < n_; ++i) {
      const Tape::NodeMeta& nm = nodes[i];
      double* v = &val_[i * kLanes];
      double* pa = &pa_[(i - base_) * kLanes];
      double* pb = &pb_[(i - base_) * kLanes];
      const double* va = nm.a >= 0 ? &val_[static_cast<std::size_t>(nm.a) * kLanes] : nullptr;
      const double* vb = nm.b >= 0 ? &val_[static_cast<std::size_t>(nm.b) * kLanes] : nullptr;
      switch (nm.kind) {
        case Op::Const:
          break;  // broadcast at construction
        case Op::Dot: {
          for (int l = 0; l < kLanes; ++l) v[l] = 0.0;
          const std::size_t off = static_cast<std::size_t>(nm.a);
          const std::size_t end = off + static_cast<std::size_t>(nm.b);
          for (std::size_t j = off; j < end; ++j) {
            const std::uint64_t pr = pairs[j];
            const double* xa = &val_[(pr & 0xffffffffu) * kLanes];
            const double* xb = &val_[(pr >> 32) * kLanes];
            for (int l = 0; l < kLanes; ++l) v[l] += xa[l] * xb[l];
          }
          break;
        }
        case Op::Add:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = va[l] + vb[l];
            pa[l] = 1.0;
            pb[l] = 1.0;
          }
          break;
        case Op::Sub:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = va[l] - vb[l];
            pa[l] = 1.0;
            pb[l] = -1.0;
          }
          break;
        case Op::Mul:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = va[l] * vb[l];
            pa[l] = vb[l];
            pb[l] = va[l];
          }
          break;
        case Op::NMul:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = -(va[l] * vb[l]);
            pa[l] = -vb[l];
            pb[l] = -va[l];
          }
          break;
        case Op::Div:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = va[l] / vb[l];
            pa[l] = 1.0 / vb[l];
            pb[l] = -v[l] / vb[l];
          }
          break;
        case Op::Aff: {
          const bool patched = static_cast<std::int32_t>(i) == slots_.invp_node;
          for (int l = 0; l < kLanes; ++l) {
            const double c1 = patched ? inv_p_[l] : nm.pa;
            v[l] = c1 * va[l] + nm.pb;
            pa[l] = c1;
          }
          break;
        }
        case Op::Lin2:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = nm.pa * va[l] + nm.pb * vb[l];
            pa[l] = nm.pa;
            pb[l] = nm.pb;
          }
          break;
        case Op::PowNN: {
          const bool patched = static_cast<std::int32_t>(i) == slots_.pow_node;
          for (int l = 0; l < kLanes; ++l) {
            const double q = patched ? pow_half_[l] : nm.pb;
            v[l] = pow_nn_val(va[l], q);
            pa[l] = pow_nn_d1(va[l], q);
          }
          break;
        }
        case Op::PowAbs:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = pow_abs_val(va[l], nm.pb);
            pa[l] = pow_abs_d1(va[l], nm.pb);
          }
          break;
        case Op::Cos:
          // the recorder emits cos/sin pairs over a shared operand
          if (i + 1 < n_ && nodes[i + 1].kind == Op::Sin && nodes[i + 1].a == nm.a) {
            double* v2 = &val_[(i + 1) * kLanes];
            double* pa2 = &pa_[(i + 1 - base_) * kLanes];
            for (int l = 0; l < kLanes; ++l) {
              const double c = std::cos(va[l]);
              const double s = std::sin(va[l]);
              v[l] = c;
              pa[l] = -s;
              v2[l] = s;
              pa2[l] = c;
            }
            ++i;
          } else {
            for (int l = 0; l < kLanes; ++l) {
              v[l] = std::cos(va[l]);
              pa[l] = -std::sin(va[l]);
            }
          }
          break;
        case Op::Sin:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = std::sin(va[l]);
            pa[l] = std::cos(va[l]);
          }
          break;
        case Op::Tanh:
          for (int l = 0; l < kLanes; ++l) {
            const double t = std::tanh(va[l]);
            v[l] = t;
            pa[l] = 1.0 - t * t;
          }
          break;
        case Op::Exp:
          for (int l = 0; l < kLanes; ++l) {
            const double e = std::exp(va[l]);
            v[l] = e;
            pa[l] = e;
          }
          break;
        case Op::Relu2:
        case Op::Gelu:
        case Op::S2Relu: {
          const Activation act = nm.kind == Op::Relu2   ? Activation::Relu2
                                 : nm.kind == Op::Gelu ? Activation::GeluApprox
                                                        : Activation::S2Relu;
          const Op dkind = nm.kind == Op::Relu2   ? Op::Relu2D
                           : nm.kind == Op::Gelu ? Op::GeluD
                                                  : Op::S2ReluD;
          if (i + 1 < n_ && nodes[i + 1].kind == dkind && nodes[i + 1].a == nm.a) {
            double* v2 = &val_[(i + 1) * kLanes];
            double* pa2 = &pa_[(i + 1 - base_) * kLanes];
            for (int l = 0; l < kLanes; ++l) {
              const ActTriple t = act_triple(act, va[l]);
              v[l] = t.g;
              pa[l] = t.g1;
              v2[l] = t.g1;
              pa2[l] = t.g2;
            }
            ++i;
          } else {
            for (int l = 0; l < kLanes; ++l) {
              const ActTriple t = act_triple(act, va[l]);
              v[l] = t.g;
              pa[l] = t.g1;
            }
          }
          break;
        }
        case Op::Relu2D:
        case Op::GeluD:
        case Op::S2ReluD: {
          const Activation act = nm.kind == Op::Relu2D   ? Activation::Relu2
                                 : nm.kind == Op::GeluD ? Activation::GeluApprox
                                                         : Activation::S2Relu;
          for (int l = 0; l < kLanes; ++l) {
            const ActTriple t = act_triple(act, va[l]);
            v[l] = t.g1;
            pa[l] = t.g2;
          }
          break;
        }
        case Op::Abs:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = std::abs(va[l]);
            pa[l] = va[l] > 0.0 ? 1.0 : (va[l] < 0.0 ? -1.0 : 0.0);
          }
          break;
        case Op::Sgn:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = va[l] > 0.0 ? 1.0 : (va[l] < 0.0 ? -1.0 : 0.0);
            pa[l] = 0.0;
          }
          break;
        case Op::MaxC:
          for (int l = 0; l < kLanes; ++l) {
            const bool above = va[l] > nm.pb;
            v[l] = above ? va[l] : nm.pb;
            pa[l] = above ? 1.0 : 0.0;
          }
          break;
        case Op::Pow:
          for (int l = 0; l < kLanes; ++l) {
            v[l] = std::pow(va[l], nm.pb);
            pa[l] = nm.pb * std::pow(va[l], nm.pb - 1.0);
          }
          break;
        case Op::Leaf:
          throw std::logic_error("replay: leaf inside a point body");
      }
    }
  }

  void reverse_lanes(int count) {
    const auto nodes = tape_.nodes();
    const auto pairs = tape_.dot_pairs();
    const std::size_t droot = static_cast<std::size_t>(density_.idx);
    for (int l = 0; l < count; ++l) adj_[droot * kLanes + static_cast<std::size_t>(l)] += 1.0;
    for (std::size_t i = n_; i-- > base_;) {
      double* g = &adj_[i * kLanes];
      const bool any = (g[0] != 0.0) | (g[1] != 0.0) | (g[2] != 0.0) | (g[3] != 0.0);
      if (!any) continue;
      const Tape::NodeMeta& nm = nodes[i];
      if (nm.kind == Op::Dot) {
        const std::size_t off = static_cast<std::size_t>(nm.a);
        const std::size_t end = off + static_cast<std::size_t>(nm.b);
        for (std::size_t j = off; j < end; ++j) {
          const std::uint64_t pr = pairs[j];
          const std::size_t ia = (pr & 0xffffffffu) * kLanes;
          const std::size_t ib = (pr >> 32) * kLanes;
          for (int l = 0; l < kLanes; ++l) {
            adj_[ia + static_cast<std::size_t>(l)] += val_[ib + static_cast<std::size_t>(l)] * g[l];
            adj_[ib + static_cast<std::size_t>(l)] += val_[ia + static_cast<std::size_t>(l)] * g[l];
          }
        }
      } else if (nm.a >= 0) {
        const double* pa = &pa_[(i - base_) * kLanes];
        double* aa = &adj_[static_cast<std::size_t>(nm.a) * kLanes];
        for (int l = 0; l < kLanes; ++l) aa[l] += pa[l] * g[l];
        if (nm.b >= 0) {
          const double* pb = &pb_[(i - base_) * kLanes];
          double* ab = &adj_[static_cast<std::size_t>(nm.b) * kLanes];
          for (int l = 0; l < kLanes; ++l) ab[l] += pb[l] * g[l];
        }
      }
      g[0] = g[1] = g[2] = g[3] = 0.0;
    }
  }

  const ProblemSpec& spec_;
  const Workspace& ws_;
  Tape tape_;
  BoundNet net_;
  std::vector<Var> z_nodes_;
  PointInputs inputs_;
  PatchSlots slots_;
  std::vector<int> tracked_;
  Var density_{};
  std::size_t base_ = 0;
  std::size_t n_ = 0;
  std::size_t body_ = 0;
  std::vector<double> val_;
  std::vector<double> adj_;
  std::vector<double> pa_;
  std::vector<double> pb_;
  double pow_half_[kLanes];
  double inv_p_[kLanes];
};

}  // namespace

void ProblemSpec::validate() const {
  if (param_dim < 0 || spatial_dim < 1 || spatial_dim > 2)
    throw std::invalid_argument("problem: need param_dim >= 0 and spatial_dim in {1,2}");
  if (interior.dim != param_dim + spatial_dim)
    throw std::invalid_argument("problem: interior quadrature dimension mismatch");
  if (lift.kind != LiftSpec::Kind::None && spatial_dim != 1)
    throw std::invalid_argument("problem: multiplicative lifts are one-dimensional");
  if (variant == Variant::Penalty) {
    if (!boundary) throw std::invalid_argument("problem: penalty variant requires boundary_quad");
    if (!(lambda >= 0.0)) throw std::invalid_argument("problem: penalty lambda must be >= 0");
    if (lift.kind != LiftSpec::Kind::None)
      throw std::invalid_argument("problem: penalty variant excludes a multiplicative lift");
    if (boundary->dim != param_dim + spatial_dim)
      throw std::invalid_argument("problem: boundary quadrature dimension mismatch");
  } else if (boundary) {
    throw std::invalid_argument("problem: only the penalty variant takes a boundary_quad");
  }
  if (exponent_varies()) {
    if (!(p_min > 1.0) || !(p_max >= p_min))
      throw std::invalid_argument("problem: variable exponent needs 1 < p_min <= p_max");
    for (std::int64_t i = 0; i < interior.n; ++i) {
      const auto pc = interior.point(i).subspan(0, static_cast<std::size_t>(param_dim));
      const double pe = p_of.eval(pc, {});
      if (!(pe >= p_min && pe <= p_max))
        throw std::invalid_argument("problem: p(params) leaves [p_min, p_max] at sampled point " +
                                    std::to_string(i));
    }
  } else {
    if (!(p > 1.0)) throw std::invalid_argument("problem: exponent p must exceed 1");
  }
}

Var integrand(Tape& tape, const ProblemSpec& spec, std::span<const double> pcoords,
              std::span<const double> x, Var u, std::span<const Var> gradu) {
  if (static_cast<int>(gradu.size()) != spec.spatial_dim)
    throw std::invalid_argument("integrand: gradient dimension mismatch");
  const double p = spec.exponent_at(pcoords);
  const double f = spec.rhs.eval(pcoords, x);
  Var s{};
  if (gradu.size() == 1) {
    const Var d0 = gradu[0].valid() ? gradu[0] : tape.constant(0.0);
    s = tape.mul(d0, d0);
  } else {
    tape.dot_begin();
    for (const Var& dt : gradu) {
      const Var d = dt.valid() ? dt : tape.constant(0.0);
      tape.dot_arg(d, d);
    }
    s = tape.dot_end();
  }
  Var grad_term = (!spec.exponent_varies() && p == 2.0)
                      ? tape.scale(s, 0.5)
                      : tape.scale(tape.pow_nn(s, 0.5 * p), 1.0 / p);
  Var density = tape.sub(grad_term, tape.mul(tape.constant(f), u));
  if (spec.has_mass_term()) density = tape.lin2(density, tape.mul(u, u), 1.0, 0.5);
  return density;
}

Var energy(Tape& tape, const ProblemSpec& spec, const ArchSpec& arch,
           std::span<const double> theta) {
  return energy_of_net(tape, spec, bind_net(tape, arch, theta));
}

Var energy_of_net(Tape& tape, const ProblemSpec& spec, const BoundNet& net) {
  spec.validate();
  const Workspace ws = make_workspace(spec);
  const auto tracked = tracked_indices(spec);

  std::vector<Var> zbuf;
  ChunkedVarSum interior_sum(tape);
  for (std::int64_t i = 0; i < spec.interior.n; ++i) {
    const Var d = record_interior_point(tape, spec, net, ws, tracked, i, zbuf);
    if (!std::isfinite(tape.value(d))) bad_point("energy", spec, i, false);
    interior_sum.add(d);
  }
  const Var interior = interior_sum.result();
  if (!spec.boundary) return tape.scale(interior, spec.interior.weight);

  ChunkedVarSum bnd_sum(tape);
  for (std::int64_t i = 0; i < spec.boundary->n; ++i) {
    const Var d = record_boundary_point(tape, spec, net, i);
    if (!std::isfinite(tape.value(d))) bad_point("energy", spec, i, true);
    bnd_sum.add(d);
  }
  const double cb = spec.lambda / spec.p * spec.boundary->weight;
  return tape.lin2(interior, bnd_sum.result(), spec.interior.weight, cb);
}

double energy_slice(const ProblemSpec& spec, const ArchSpec& arch, std::span<const double> theta,
                    std::span<const double> pcoords, const QuadratureSet& spatial_quad) {
  const double p = spec.exponent_at(pcoords);
  std::vector<double> z(static_cast<std::size_t>(spec.param_dim + spec.spatial_dim));
  for (int d = 0; d < spec.param_dim; ++d) z[static_cast<std::size_t>(d)] = pcoords[static_cast<std::size_t>(d)];
  const auto tracked = tracked_indices(spec);
  double du[2] = {0.0, 0.0};
  const std::span<double> du_span(du, static_cast<std::size_t>(spec.spatial_dim));
  const bool fold_p2 = !spec.exponent_varies() && p == 2.0;

  ChunkedSum sum;
  for (std::int64_t i = 0; i < spatial_quad.n; ++i) {
    const auto x = spatial_quad.point(i);
    for (int d = 0; d < spec.spatial_dim; ++d)
      z[static_cast<std::size_t>(spec.param_dim + d)] = x[static_cast<std::size_t>(d)];
    double u = eval_jet(arch, theta, z, tracked, du_span);
    if (lift_active(spec)) {
      const LiftEval le = lift_eval(spec.lift, z, spec.param_dim);
      du[0] = le.eta * du[0] + le.deta[0] * u;
      u = le.eta * u;
    }
    const double f = spec.rhs.eval(pcoords, x);
    double s;
    if (spec.spatial_dim == 1) {
      s = du[0] * du[0];
    } else {
      s = 0.0;
      for (int d = 0; d < spec.spatial_dim; ++d) s += du[d] * du[d];
    }
    const double grad_term = fold_p2 ? s * 0.5 : pow_nn_val(s, 0.5 * p) * (1.0 / p);
    double density = grad_term - f * u;
    if (spec.has_mass_term()) density = 1.0 * density + 0.5 * (u * u);
    sum.add(density);
  }
  double e = spatial_quad.weight * sum.result();
  if (spec.boundary) {
    ChunkedSum bsum;
    for (std::int64_t i = 0; i < spec.boundary->n; ++i) {
      const auto zb = spec.boundary->point(i);
      bsum.add(pow_abs_val(eval(arch, theta, zb), spec.p));
    }
    e += spec.lambda / spec.p * spec.boundary->weight * bsum.result();
  }
  return e;
}

namespace {

struct ChunkRange {
  std::int64_t lo, hi;
  bool is_boundary;
};

}  // namespace

EnergyResult energy_value_grad(const ProblemSpec& spec, const ArchSpec& arch,
                               std::span<const double> theta, int threads) {
  spec.validate();
  if (static_cast<std::int64_t>(theta.size()) != param_count(arch))
    throw std::invalid_argument("energy_value_grad: theta length mismatch");
  const Workspace ws = make_workspace(spec);
  const std::size_t ntheta = theta.size();

  std::vector<ChunkRange> chunks;
  for (std::int64_t lo = 0; lo < spec.interior.n; lo += kChunk) {
    chunks.push_back({lo, std::min(lo + kChunk, spec.interior.n), false});
  }
  if (spec.boundary) {
    for (std::int64_t lo = 0; lo < spec.boundary->n; lo += kChunk) {
      chunks.push_back({lo, std::min(lo + kChunk, spec.boundary->n), true});
    }
  }

  std::vector<double> chunk_value(chunks.size(), 0.0);
  std::vector<std::vector<double>> chunk_grad(chunks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::int64_t> first_bad{-1};
  std::atomic<bool> bad_is_boundary{false};
  std::exception_ptr worker_error;
  std::mutex error_mu;

  auto worker = [&]() {
    try {
      std::unique_ptr<PointBatchEngine> engine;
      if (spec.interior.n > 0) engine = std::make_unique<PointBatchEngine>(spec, arch, theta, ws);

      // boundary chunks run on a plain per-point tape
      Tape btape;
      BoundNet bnet;
      Tape::Mark bbase;
      bool bnet_ready = false;
      const auto tracked = tracked_indices(spec);
      (void)tracked;

      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= chunks.size()) return;
        const ChunkRange range = chunks[c];
        ChunkedSum sum;
        if (!range.is_boundary) {
          engine->begin_chunk();
          for (std::int64_t i = range.lo; i < range.hi; i += PointBatchEngine::kLanes) {
            const int count =
                static_cast<int>(std::min<std::int64_t>(PointBatchEngine::kLanes, range.hi - i));
            const std::int64_t bad = engine->eval_group(i, count, sum);
            if (bad >= 0) {
              std::int64_t expect = -1;
              if (first_bad.compare_exchange_strong(expect, bad)) bad_is_boundary.store(false);
              return;
            }
          }
          chunk_value[c] = sum.result();
          auto& g = chunk_grad[c];
          g.resize(engine->leaf_count());
          engine->extract_grad(g);
        } else {
          if (!bnet_ready) {
            btape.reserve(1 << 14);
            bnet = bind_net(btape, arch, theta);
            bbase = btape.mark();
            bnet_ready = true;
          }
          btape.rewind(bbase);
          btape.zero_adjoints(0, bbase.nodes);
          for (std::int64_t i = range.lo; i < range.hi; ++i) {
            const Var d = record_boundary_point(btape, spec, bnet, i);
            const double dv = btape.value(d);
            if (!std::isfinite(dv)) {
              std::int64_t expect = -1;
              if (first_bad.compare_exchange_strong(expect, i)) bad_is_boundary.store(true);
              return;
            }
            sum.add(dv);
            btape.reverse(d, bbase.nodes);
            btape.rewind(bbase);
          }
          chunk_value[c] = sum.result();
          auto& g = chunk_grad[c];
          g.resize(bnet.params.size());
          for (std::size_t k = 0; k < g.size(); ++k) g[k] = btape.adjoint(bnet.params[k]);
        }
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!worker_error) worker_error = std::current_exception();
    }
  };

  const int nthreads = std::max(1, threads);
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (worker_error) std::rethrow_exception(worker_error);
  if (first_bad.load() >= 0)
    bad_point("energy_value_grad", spec, first_bad.load(), bad_is_boundary.load());

  // Reduce in chunk order; assignment to workers does not affect the result.
  // The plain ordered sums here mirror ChunkedVarSum's flush sequence.
  EnergyResult out;
  out.grad.assign(ntheta, 0.0);
  double val_int = 0.0, val_bnd = 0.0;
  bool any_int = false, any_bnd = false;
  std::vector<double> grad_int(ntheta, 0.0), grad_bnd(ntheta, 0.0);
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    const bool bnd = chunks[c].is_boundary;
    double& val = bnd ? val_bnd : val_int;
    bool& any = bnd ? any_bnd : any_int;
    val = any ? val + chunk_value[c] : chunk_value[c];
    any = true;
    auto& acc = bnd ? grad_bnd : grad_int;
    const auto& g = chunk_grad[c];
    for (std::size_t k = 0; k < ntheta; ++k) acc[k] += g[k];
  }
  const double w = spec.interior.weight;
  if (!spec.boundary) {
    out.value = w * val_int;
    for (std::size_t k = 0; k < ntheta; ++k) out.grad[k] = w * grad_int[k];
  } else {
    const double cb = spec.lambda / spec.p * spec.boundary->weight;
    out.value = w * val_int + cb * val_bnd;
    for (std::size_t k = 0; k < ntheta; ++k) out.grad[k] = w * grad_int[k] + cb * grad_bnd[k];
  }
  return out;
}

double field_energy_1d(double p, const QuadratureSet& interior,
                       const std::function<double(double)>& f,
                       const std::function<std::pair<double, double>(double)>& field,
                       const QuadratureSet* bnd, double lambda) {
  ChunkedSum sum;
  for (std::int64_t i = 0; i < interior.n; ++i) {
    const double x = interior.point(i)[0];
    const auto [u, du] = field(x);
    const double s = du * du;
    const double grad_term = p == 2.0 ? s * 0.5 : pow_nn_val(s, 0.5 * p) * (1.0 / p);
    sum.add(grad_term - f(x) * u);
  }
  double e = interior.weight * sum.result();
  if (bnd) {
    ChunkedSum bsum;
    for (std::int64_t i = 0; i < bnd->n; ++i) {
      bsum.add(pow_abs_val(field(bnd->point(i)[0]).first, p));
    }
    e += lambda / p * bnd->weight * bsum.result();
  }
  return e;
}

}  // namespace deepritz
