#include "deepritz/network.hpp"

#include <cmath>
#include <stdexcept>

#include "deepritz/rng.hpp"

namespace deepritz {

namespace {

// Layer input/output widths under the flat layout.
std::vector<int> layer_dims(const ArchSpec& arch) {
  std::vector<int> dims;
  dims.push_back(arch.fourier ? 2 * arch.fourier->num_features : arch.input_dim);
  for (int w : arch.hidden) dims.push_back(w);
  dims.push_back(arch.output_dim);
  return dims;
}

void validate(const ArchSpec& arch) {
  if (arch.input_dim < 1) throw std::invalid_argument("arch: input_dim must be >= 1");
  if (arch.hidden.empty()) throw std::invalid_argument("arch: hidden_widths must be nonempty");
  if (arch.output_dim != 1) throw std::invalid_argument("arch: output_dim must be 1");
  for (int w : arch.hidden)
    if (w < 1) throw std::invalid_argument("arch: hidden width must be >= 1");
  if (arch.fourier && arch.fourier->num_features < 1)
    throw std::invalid_argument("arch: fourier num_features must be >= 1");
}

constexpr double kTwoPi = 2.0 * M_PI;

}  // namespace

std::int64_t param_count(const ArchSpec& arch) {
  validate(arch);
  std::int64_t n = 0;
  if (arch.fourier) n += static_cast<std::int64_t>(arch.fourier->num_features) * arch.input_dim;
  const auto dims = layer_dims(arch);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    n += static_cast<std::int64_t>(dims[l]) * dims[l + 1] + dims[l + 1];
  }
  return n;
}

std::vector<double> init_params(const ArchSpec& arch, std::uint64_t seed) {
  validate(arch);
  std::mt19937_64 gen(seed);
  std::vector<double> theta;
  theta.reserve(static_cast<std::size_t>(param_count(arch)));
  if (arch.fourier) {
    const int m = arch.fourier->num_features;
    for (int i = 0; i < m * arch.input_dim; ++i) theta.push_back(normal(gen, arch.fourier->sigma));
  }
  const auto dims = layer_dims(arch);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int nin = dims[l], nout = dims[l + 1];
    const double limit = std::sqrt(6.0 / (nin + nout));
    for (int i = 0; i < nin * nout; ++i) theta.push_back(uniform_in(gen, -limit, limit));
    for (int i = 0; i < nout; ++i) theta.push_back(0.0);
  }
  return theta;
}

BoundNet bind_net(Tape& tape, const ArchSpec& arch, std::span<const double> theta) {
  validate(arch);
  if (static_cast<std::int64_t>(theta.size()) != param_count(arch))
    throw std::invalid_argument("bind: theta length does not match architecture");
  BoundNet net;
  net.arch = &arch;
  net.tape = &tape;
  net.dims = layer_dims(arch);
  net.params.reserve(theta.size());
  for (double t : theta) net.params.push_back(tape.leaf(t));
  tape.one();  // materialize the shared constant ahead of any rewind mark
  return net;
}

Var forward(const BoundNet& net, std::span<const double> z) {
  Tape& tape = *net.tape;
  std::vector<Var>& zc = net.zbuf;
  zc.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zc[i] = tape.constant(z[i]);
  return forward(net, std::span<const Var>(zc));
}

Var forward(const BoundNet& net, std::span<const Var> z) {
  const ArchSpec& arch = *net.arch;
  Tape& tape = *net.tape;
  if (static_cast<int>(z.size()) != arch.input_dim)
    throw std::invalid_argument("forward: input size mismatch");

  std::vector<Var>& h0 = net.vbuf[0];
  std::vector<Var>& h1 = net.vbuf[1];
  std::vector<Var>* h = &h0;
  std::vector<Var>* out = &h1;
  std::size_t off = 0;
  if (arch.fourier) {
    const int m = arch.fourier->num_features;
    h->assign(static_cast<std::size_t>(2 * m), Var{});
    for (int j = 0; j < m; ++j) {
      tape.dot_begin();
      for (int k = 0; k < arch.input_dim; ++k) {
        tape.dot_arg(net.params[off + static_cast<std::size_t>(j * arch.input_dim + k)], z[static_cast<std::size_t>(k)]);
      }
      const Var w = tape.scale(tape.dot_end(), kTwoPi);
      const auto [cw, sw] = tape.sincos_pair(w);
      (*h)[static_cast<std::size_t>(j)] = cw;
      (*h)[static_cast<std::size_t>(m + j)] = sw;
    }
    off += static_cast<std::size_t>(m) * arch.input_dim;
  } else {
    h->assign(z.size(), Var{});
    for (std::size_t i = 0; i < z.size(); ++i) (*h)[i] = z[i];
  }

  const std::vector<int>& dims = net.dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int nin = dims[l], nout = dims[l + 1];
    out->assign(static_cast<std::size_t>(nout), Var{});
    const std::size_t a_off = off;
    const std::size_t b_off = off + static_cast<std::size_t>(nin) * nout;
    for (int i = 0; i < nout; ++i) {
      tape.dot_begin();
      for (int k = 0; k < nin; ++k) {
        tape.dot_arg(net.params[a_off + static_cast<std::size_t>(i * nin + k)], (*h)[static_cast<std::size_t>(k)]);
      }
      tape.dot_arg(net.params[b_off + static_cast<std::size_t>(i)], tape.one());
      Var s = tape.dot_end();
      if (l + 2 < dims.size()) s = tape.activation(arch.activation, s);
      (*out)[static_cast<std::size_t>(i)] = s;
    }
    std::swap(h, out);
    off = b_off + static_cast<std::size_t>(nout);
  }
  return (*h)[0];
}

Jet forward_jet(const BoundNet& net, std::span<const double> z, std::span<const int> tracked) {
  Tape& tape = *net.tape;
  std::vector<Var>& zc = net.zbuf;
  zc.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) zc[i] = tape.constant(z[i]);
  return forward_jet(net, std::span<const Var>(zc), tracked);
}

Jet forward_jet(const BoundNet& net, std::span<const Var> z, std::span<const int> tracked) {
  const ArchSpec& arch = *net.arch;
  Tape& tape = *net.tape;
  if (static_cast<int>(z.size()) != arch.input_dim)
    throw std::invalid_argument("forward_jet: input size mismatch");
  const int nd = static_cast<int>(tracked.size());
  if (nd > Jet::kMaxDirs) throw std::invalid_argument("forward_jet: too many tracked directions");
  for (int c : tracked) {
    if (c < 0 || c >= arch.input_dim)
      throw std::invalid_argument("forward_jet: tracked index out of range");
  }

  std::vector<Jet>& j0 = net.jbuf[0];
  std::vector<Jet>& j1 = net.jbuf[1];
  std::vector<Jet>* h = &j0;
  std::vector<Jet>* out = &j1;
  std::size_t off = 0;
  if (arch.fourier) {
    const int m = arch.fourier->num_features;
    h->assign(static_cast<std::size_t>(2 * m), Jet{});
    for (int j = 0; j < m; ++j) {
      tape.dot_begin();
      for (int k = 0; k < arch.input_dim; ++k) {
        tape.dot_arg(net.params[off + static_cast<std::size_t>(j * arch.input_dim + k)], z[static_cast<std::size_t>(k)]);
      }
      const Var w = tape.scale(tape.dot_end(), kTwoPi);
      const auto [cw, sw] = tape.sincos_pair(w);
      Jet cj, sj;
      cj.v = cw;
      sj.v = sw;
      cj.ndirs = sj.ndirs = nd;
      for (int t = 0; t < nd; ++t) {
        const Var brow = net.params[off + static_cast<std::size_t>(j * arch.input_dim + tracked[t])];
        const Var dw = tape.scale(brow, kTwoPi);
        cj.d[static_cast<std::size_t>(t)] = tape.nmul(sw, dw);
        sj.d[static_cast<std::size_t>(t)] = tape.mul(cw, dw);
      }
      (*h)[static_cast<std::size_t>(j)] = cj;
      (*h)[static_cast<std::size_t>(m + j)] = sj;
    }
    off += static_cast<std::size_t>(m) * arch.input_dim;
  } else {
    h->assign(z.size(), Jet{});
    for (std::size_t i = 0; i < z.size(); ++i) {
      Jet j;
      j.v = z[i];
      j.ndirs = nd;
      for (int t = 0; t < nd; ++t) {
        if (tracked[t] == static_cast<int>(i)) j.d[static_cast<std::size_t>(t)] = tape.one();
      }
      (*h)[i] = j;
    }
  }

  const std::vector<int>& dims = net.dims;
  const Var one = tape.one();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int nin = dims[l], nout = dims[l + 1];
    out->assign(static_cast<std::size_t>(nout), Jet{});
    const std::size_t a_off = off;
    const std::size_t b_off = off + static_cast<std::size_t>(nin) * nout;
    for (int i = 0; i < nout; ++i) {
      tape.dot_begin();
      for (int k = 0; k < nin; ++k) {
        tape.dot_arg(net.params[a_off + static_cast<std::size_t>(i * nin + k)], (*h)[static_cast<std::size_t>(k)].v);
      }
      tape.dot_arg(net.params[b_off + static_cast<std::size_t>(i)], one);
      Jet s;
      s.v = tape.dot_end();
      s.ndirs = nd;
      for (int t = 0; t < nd; ++t) {
        // Structural zeros are pruned; a lone unit seed reduces the
        // directional sum to the matrix entry itself.
        int nnz = 0, last = -1;
        for (int k = 0; k < nin; ++k) {
          if ((*h)[static_cast<std::size_t>(k)].dir(t).valid()) {
            ++nnz;
            last = k;
          }
        }
        if (nnz == 0) continue;
        const std::size_t arow = a_off + static_cast<std::size_t>(i * nin);
        if (nnz == 1 && (*h)[static_cast<std::size_t>(last)].dir(t).idx == one.idx) {
          s.d[static_cast<std::size_t>(t)] = net.params[arow + static_cast<std::size_t>(last)];
          continue;
        }
        tape.dot_begin();
        for (int k = 0; k < nin; ++k) {
          const Var dk = (*h)[static_cast<std::size_t>(k)].dir(t);
          if (dk.valid()) tape.dot_arg(net.params[arow + static_cast<std::size_t>(k)], dk);
        }
        s.d[static_cast<std::size_t>(t)] = tape.dot_end();
      }
      if (l + 2 < dims.size()) s = jet_activation(arch.activation, s);
      (*out)[static_cast<std::size_t>(i)] = s;
    }
    std::swap(h, out);
    off = b_off + static_cast<std::size_t>(nout);
  }
  return (*h)[0];
}

Var forward(Tape& tape, const ArchSpec& arch, std::span<const double> theta,
            std::span<const double> z) {
  return forward(bind_net(tape, arch, theta), z);
}

Jet forward_jet(Tape& tape, const ArchSpec& arch, std::span<const double> theta,
                std::span<const double> z, std::span<const int> tracked) {
  return forward_jet(bind_net(tape, arch, theta), z, tracked);
}

namespace {

// Plain-double jet mirroring the tape version, including the pruning of
// structural zeros, so both paths execute the same floating-point sequence.
struct DJet {
  double v = 0.0;
  double d[Jet::kMaxDirs] = {0.0, 0.0, 0.0};
  bool has[Jet::kMaxDirs] = {false, false, false};
};

DJet eval_jet_impl(const ArchSpec& arch, std::span<const double> theta,
                   std::span<const double> z, std::span<const int> tracked) {
  const int nd = static_cast<int>(tracked.size());
  std::vector<DJet> h;
  std::size_t off = 0;
  if (arch.fourier) {
    const int m = arch.fourier->num_features;
    h.resize(static_cast<std::size_t>(2 * m));
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k = 0; k < arch.input_dim; ++k) {
        s += theta[off + static_cast<std::size_t>(j * arch.input_dim + k)] * z[static_cast<std::size_t>(k)];
      }
      const double w = s * kTwoPi;
      const double cw = std::cos(w);
      const double sw = std::sin(w);
      DJet cj, sj;
      cj.v = cw;
      sj.v = sw;
      for (int t = 0; t < nd; ++t) {
        const double brow = theta[off + static_cast<std::size_t>(j * arch.input_dim + tracked[t])];
        const double dw = brow * kTwoPi;
        cj.d[t] = -(sw * dw);
        cj.has[t] = true;
        sj.d[t] = cw * dw;
        sj.has[t] = true;
      }
      h[static_cast<std::size_t>(j)] = cj;
      h[static_cast<std::size_t>(m + j)] = sj;
    }
    off += static_cast<std::size_t>(m) * arch.input_dim;
  } else {
    h.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      h[i].v = z[i];
      for (int t = 0; t < nd; ++t) {
        if (tracked[t] == static_cast<int>(i)) {
          h[i].d[t] = 1.0;
          h[i].has[t] = true;
        }
      }
    }
  }

  const auto dims = layer_dims(arch);
  std::vector<DJet> out;
  const bool one_is_unit = true;  // mirrors the tape's shared constant one
  (void)one_is_unit;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int nin = dims[l], nout = dims[l + 1];
    out.assign(static_cast<std::size_t>(nout), DJet{});
    const std::size_t a_off = off;
    const std::size_t b_off = off + static_cast<std::size_t>(nin) * nout;
    for (int i = 0; i < nout; ++i) {
      double s = 0.0;
      for (int k = 0; k < nin; ++k) {
        s += theta[a_off + static_cast<std::size_t>(i * nin + k)] * h[static_cast<std::size_t>(k)].v;
      }
      s += theta[b_off + static_cast<std::size_t>(i)] * 1.0;
      DJet o;
      o.v = s;
      for (int t = 0; t < nd; ++t) {
        int nnz = 0, last = -1;
        for (int k = 0; k < nin; ++k) {
          if (h[static_cast<std::size_t>(k)].has[t]) {
            ++nnz;
            last = k;
          }
        }
        if (nnz == 0) continue;
        const std::size_t arow = a_off + static_cast<std::size_t>(i * nin);
        o.has[t] = true;
        const bool lone_seed = nnz == 1 && !arch.fourier && l == 0 &&
                               h[static_cast<std::size_t>(last)].d[t] == 1.0;
        if (lone_seed) {
          o.d[t] = theta[arow + static_cast<std::size_t>(last)];
          continue;
        }
        double ds = 0.0;
        for (int k = 0; k < nin; ++k) {
          if (h[static_cast<std::size_t>(k)].has[t]) {
            ds += theta[arow + static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k)].d[t];
          }
        }
        o.d[t] = ds;
      }
      if (l + 2 < dims.size()) {
        const ActTriple tri = act_triple(arch.activation, o.v);
        o.v = tri.g;
        for (int t = 0; t < nd; ++t) {
          if (o.has[t]) o.d[t] = tri.g1 * o.d[t];
        }
      }
      out[static_cast<std::size_t>(i)] = o;
    }
    h = out;
    off = b_off + static_cast<std::size_t>(nout);
  }
  return h[0];
}

}  // namespace

double eval(const ArchSpec& arch, std::span<const double> theta, std::span<const double> z) {
  validate(arch);
  return eval_jet_impl(arch, theta, z, {}).v;
}

double eval_jet(const ArchSpec& arch, std::span<const double> theta, std::span<const double> z,
                std::span<const int> tracked, std::span<double> dz_out) {
  validate(arch);
  const DJet j = eval_jet_impl(arch, theta, z, tracked);
  for (std::size_t t = 0; t < tracked.size(); ++t) dz_out[t] = j.has[t] ? j.d[t] : 0.0;
  return j.v;
}

LiftEval lift_eval(const LiftSpec& lift, std::span<const double> z, int spatial_offset) {
  LiftEval e;
  switch (lift.kind) {
    case LiftSpec::Kind::None: return e;
    case LiftSpec::Kind::Product1d: {
      const double x = z[static_cast<std::size_t>(spatial_offset)];
      const double len = lift.b - lift.a;
      const double c = 4.0 / (len * len);
      e.eta = c * (lift.b - x) * (x - lift.a);
      e.deta[0] = c * (lift.a + lift.b - 2.0 * x);
      return e;
    }
    case LiftSpec::Kind::IntervalFamily: {
      const double p = z[0];
      const double x = z[static_cast<std::size_t>(spatial_offset)];
      e.eta = (p - x) * (p + x) / (p * p);
      e.deta[0] = -2.0 * x / (p * p);
      return e;
    }
  }
  return e;
}

Var apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, Var u) {
  if (lift.kind == LiftSpec::Kind::None) return u;
  const LiftEval e = lift_eval(lift, z, spatial_offset);
  return u.tape->scale(u, e.eta);
}

Jet apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, const Jet& u) {
  if (lift.kind == LiftSpec::Kind::None) return u;
  Tape& tape = *u.v.tape;
  const LiftEval e = lift_eval(lift, z, spatial_offset);
  Jet r;
  r.ndirs = u.ndirs;
  r.v = tape.scale(u.v, e.eta);
  for (int t = 0; t < u.ndirs; ++t) {
    const Var du = u.dir(t);
    if (du.valid()) {
      r.d[static_cast<std::size_t>(t)] = tape.lin2(du, u.v, e.eta, e.deta[t]);
    } else if (e.deta[t] != 0.0) {
      r.d[static_cast<std::size_t>(t)] = tape.scale(u.v, e.deta[t]);
    }
  }
  return r;
}

double apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, double u) {
  if (lift.kind == LiftSpec::Kind::None) return u;
  return lift_eval(lift, z, spatial_offset).eta * u;
}

}  // namespace deepritz
