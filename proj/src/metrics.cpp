#include "deepritz/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "deepritz/rng.hpp"

namespace deepritz {

namespace {

// Accumulation mirror of the energy module's chunked sums.
struct Acc {
  double total = 0.0;
  double chunk = 0.0;
  std::int64_t in_chunk = 0;
  bool any_total = false, any_chunk = false;
  static constexpr std::int64_t kChunk = 1024;

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

double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

}  // namespace

void f_map(double p, std::span<const double> a, std::span<double> out) {
  if (p == 2.0) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i];
    return;
  }
  const double r = norm2(a);
  if (r == 0.0) {
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = 0.0;
    return;
  }
  const double s = std::pow(r, 0.5 * (p - 2.0));
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
}

double f_map_scalar(double p, double a) {
  if (p == 2.0) return a;
  if (a == 0.0) return 0.0;
  return std::pow(std::abs(a), 0.5 * (p - 2.0)) * a;
}

void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  if (n < 1) throw std::invalid_argument("gauss_legendre_01: order must be >= 1");
  nodes.assign(static_cast<std::size_t>(n), 0.0);
  weights.assign(static_cast<std::size_t>(n), 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(M_PI * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[static_cast<std::size_t>(i)] = 0.5 * (1.0 - x);         // map [-1,1] -> [0,1]
    nodes[static_cast<std::size_t>(n - 1 - i)] = 0.5 * (1.0 + x);
    weights[static_cast<std::size_t>(i)] = 0.5 * w;
    weights[static_cast<std::size_t>(n - 1 - i)] = 0.5 * w;
  }
}

namespace {

double fdiff_sq(double p, std::span<const double> av, std::span<const double> bv) {
  double fa[2], fb[2];
  const std::size_t d = av.size();
  f_map(p, av, std::span<double>(fa, d));
  f_map(p, bv, std::span<double>(fb, d));
  double s = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = fa[k] - fb[k];
    s += diff * diff;
  }
  return s;
}

}  // namespace

double natural_distance_sq(double p, const QuadratureSet& quad, std::span<const double> gradv,
                           std::span<const double> gradw, int spatial_dim) {
  const auto d = static_cast<std::size_t>(spatial_dim);
  Acc acc;
  for (std::int64_t i = 0; i < quad.n; ++i) {
    acc.add(fdiff_sq(p, gradv.subspan(static_cast<std::size_t>(i) * d, d),
                     gradw.subspan(static_cast<std::size_t>(i) * d, d)));
  }
  return quad.weight * acc.result();
}

double natural_distance_sq(const std::function<double(std::span<const double>)>& p_of,
                           int param_dim, const QuadratureSet& quad,
                           std::span<const double> gradv, std::span<const double> gradw,
                           int spatial_dim) {
  const auto d = static_cast<std::size_t>(spatial_dim);
  Acc acc;
  for (std::int64_t i = 0; i < quad.n; ++i) {
    const double p = p_of(quad.point(i).subspan(0, static_cast<std::size_t>(param_dim)));
    acc.add(fdiff_sq(p, gradv.subspan(static_cast<std::size_t>(i) * d, d),
                     gradw.subspan(static_cast<std::size_t>(i) * d, d)));
  }
  return quad.weight * acc.result();
}

double penalized_distance_sq(double p, double lambda, const QuadratureSet& interior,
                             const QuadratureSet& boundary, std::span<const double> gradv,
                             std::span<const double> gradw, int spatial_dim,
                             std::span<const double> v_bnd, std::span<const double> w_bnd) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("penalized_distance_sq: lambda must be >= 0");
  double total = natural_distance_sq(p, interior, gradv, gradw, spatial_dim);
  Acc acc;
  for (std::int64_t i = 0; i < boundary.n; ++i) {
    const double diff = f_map_scalar(p, v_bnd[static_cast<std::size_t>(i)]) -
                        f_map_scalar(p, w_bnd[static_cast<std::size_t>(i)]);
    acc.add(diff * diff);
  }
  return total + lambda * boundary.weight * acc.result();
}

void ErrorReport::finalize() {
  lp_abs = lp_rel = w1p_abs = w1p_rel = natural_sq = 0.0;
  rel_defined = true;
  if (slices.empty()) return;
  for (const SliceError& s : slices) {
    lp_abs += s.lp_abs;
    w1p_abs += s.w1p_abs;
    natural_sq += s.natural_sq;
    if (s.rel_defined) {
      lp_rel += s.lp_rel;
      w1p_rel += s.w1p_rel;
    } else {
      rel_defined = false;
    }
  }
  const double n = static_cast<double>(slices.size());
  lp_abs /= n;
  w1p_abs /= n;
  natural_sq /= n;
  if (rel_defined) {
    lp_rel /= n;
    w1p_rel /= n;
  } else {
    lp_rel = w1p_rel = std::nan("");
  }
}

ErrorReport norm_errors(const ProblemSpec& spec, const ArchSpec& arch,
                        std::span<const double> theta, const FieldRef& ref,
                        std::span<const std::vector<double>> slice_params,
                        std::span<const QuadratureSet> spatial_quads) {
  if (slice_params.size() != spatial_quads.size())
    throw std::invalid_argument("norm_errors: one spatial quadrature per slice required");
  ErrorReport report;
  const auto sd = static_cast<std::size_t>(spec.spatial_dim);
  std::vector<int> tracked(sd);
  for (std::size_t t = 0; t < sd; ++t) tracked[t] = spec.param_dim + static_cast<int>(t);

  for (std::size_t s = 0; s < slice_params.size(); ++s) {
    const std::vector<double>& pc = slice_params[s];
    const QuadratureSet& quad = spatial_quads[s];
    const double p = spec.exponent_at(pc);
    SliceError row;
    row.pcoords = pc;

    std::vector<double> z(static_cast<std::size_t>(spec.param_dim) + sd);
    for (int d = 0; d < spec.param_dim; ++d) z[static_cast<std::size_t>(d)] = pc[static_cast<std::size_t>(d)];
    double du[2], dref[2], fdu[2], fdr[2];

    Acc lp_err, lp_ref, w1p_err, w1p_ref, nat;
    for (std::int64_t i = 0; i < quad.n; ++i) {
      const auto x = quad.point(i);
      for (std::size_t d = 0; d < sd; ++d) z[static_cast<std::size_t>(spec.param_dim) + d] = x[d];
      double u = eval_jet(arch, theta, z, tracked, std::span<double>(du, sd));
      const LiftEval le = lift_eval(spec.lift, z, spec.param_dim);
      if (spec.lift.kind != LiftSpec::Kind::None) {
        for (std::size_t d = 0; d < sd; ++d) du[d] = le.eta * du[d] + le.deta[d] * u;
        u = le.eta * u;
      }
      const double ur = ref.value(pc, x);
      ref.gradient(pc, x, std::span<double>(dref, sd));

      lp_err.add(std::pow(std::abs(u - ur), p));
      lp_ref.add(std::pow(std::abs(ur), p));
      double diff2 = 0.0, ref2 = 0.0;
      for (std::size_t d = 0; d < sd; ++d) {
        diff2 += (du[d] - dref[d]) * (du[d] - dref[d]);
        ref2 += dref[d] * dref[d];
      }
      w1p_err.add(pow_nn_val(diff2, 0.5 * p));
      w1p_ref.add(pow_nn_val(ref2, 0.5 * p));
      f_map(p, std::span<const double>(du, sd), std::span<double>(fdu, sd));
      f_map(p, std::span<const double>(dref, sd), std::span<double>(fdr, sd));
      double fd2 = 0.0;
      for (std::size_t d = 0; d < sd; ++d) fd2 += (fdu[d] - fdr[d]) * (fdu[d] - fdr[d]);
      nat.add(fd2);
    }
    const double inv_p = 1.0 / p;
    row.lp_abs = std::pow(quad.weight * lp_err.result(), inv_p);
    row.w1p_abs = std::pow(quad.weight * w1p_err.result(), inv_p);
    row.natural_sq = quad.weight * nat.result();
    const double lp_ref_norm = std::pow(quad.weight * lp_ref.result(), inv_p);
    const double w1p_ref_norm = std::pow(quad.weight * w1p_ref.result(), inv_p);
    if (lp_ref_norm > 0.0 && w1p_ref_norm > 0.0) {
      row.lp_rel = row.lp_abs / lp_ref_norm;
      row.w1p_rel = row.w1p_abs / w1p_ref_norm;
    } else {
      row.rel_defined = false;
      row.lp_rel = row.w1p_rel = std::nan("");
    }
    report.slices.push_back(std::move(row));
  }
  report.finalize();
  return report;
}

double eta_sq(double p, std::span<const double> a, std::span<const double> b, int n_tau) {
  const std::size_t dim = a.size();
  if (dim != b.size() || dim == 0 || dim > 3)
    throw std::invalid_argument("eta_sq: dimensions must match and be in {1,2,3}");
  if (norm2(a) + norm2(b) == 0.0) throw std::invalid_argument("eta_sq: a = b = 0");

  std::vector<double> nodes, weights;
  gauss_legendre_01(n_tau, nodes, weights);

  double d[3], c[3];
  for (std::size_t k = 0; k < dim; ++k) d[k] = a[k] - b[k];
  double d2 = 0.0;
  for (std::size_t k = 0; k < dim; ++k) d2 += d[k] * d[k];

  double sum = 0.0;
  for (int i = 0; i < n_tau; ++i) {
    const double tau = nodes[static_cast<std::size_t>(i)];
    double c2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      c[k] = tau * a[k] + (1.0 - tau) * b[k];
      c2 += c[k] * c[k];
    }
    double integrand;
    if (p == 2.0) {
      integrand = d2;
    } else if (c2 == 0.0) {
      if (p < 2.0) continue;  // integrable singularity: skip the node
      integrand = 0.0;
    } else {
      const double cn = std::sqrt(c2);
      double cd = 0.0;
      for (std::size_t k = 0; k < dim; ++k) cd += c[k] * d[k];
      const double chat_d = cd / cn;
      integrand = std::pow(cn, p - 2.0) * (d2 + (p - 2.0) * chat_d * chat_d);
    }
    sum += weights[static_cast<std::size_t>(i)] * (1.0 - tau) * integrand;
  }
  return sum;
}

RatioEnvelope equivalence_ratios(double p, int dim, std::int64_t n_samples, std::uint64_t seed,
                                 int n_tau) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("equivalence_ratios: dim must be in {1,2,3}");
  std::mt19937_64 gen(seed);
  RatioEnvelope env;
  bool first = true;
  double a[3], b[3], fa[3], fb[3];
  const auto d = static_cast<std::size_t>(dim);
  for (std::int64_t s = 0; s < n_samples; ++s) {
    double diff2 = 0.0;
    do {
      diff2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        a[k] = uniform_in(gen, -1.0, 1.0);
        b[k] = uniform_in(gen, -1.0, 1.0);
        diff2 += (a[k] - b[k]) * (a[k] - b[k]);
      }
    } while (diff2 < 1e-12);  // the sampler avoids a = b

    f_map(p, std::span<const double>(a, d), std::span<double>(fa, d));
    f_map(p, std::span<const double>(b, d), std::span<double>(fb, d));
    double fd2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) fd2 += (fa[k] - fb[k]) * (fa[k] - fb[k]);
    if (fd2 == 0.0) continue;

    const double na = norm2({a, d});
    const double nb = norm2({b, d});
    double mono = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double va = na == 0.0 ? 0.0 : std::pow(na, p - 2.0) * a[k];
      const double vb = nb == 0.0 ? 0.0 : std::pow(nb, p - 2.0) * b[k];
      mono += (va - vb) * (a[k] - b[k]);
    }
    const double mean = std::pow(na + nb, p - 2.0) * diff2;
    const double eta = eta_sq(p, {a, d}, {b, d}, n_tau);

    const double r1 = mono / fd2, r2 = mean / fd2, r3 = eta / fd2;
    if (first) {
      env.min_monotone = env.max_monotone = r1;
      env.min_mean = env.max_mean = r2;
      env.min_eta = env.max_eta = r3;
      first = false;
    } else {
      env.min_monotone = std::min(env.min_monotone, r1);
      env.max_monotone = std::max(env.max_monotone, r1);
      env.min_mean = std::min(env.min_mean, r2);
      env.max_mean = std::max(env.max_mean, r2);
      env.min_eta = std::min(env.min_eta, r3);
      env.max_eta = std::max(env.max_eta, r3);
    }
  }
  return env;
}

RelationCheck relation_check(double p, const QuadratureSet& quad, std::span<const double> gradv,
                             std::span<const double> gradw, int spatial_dim) {
  const auto d = static_cast<std::size_t>(spatial_dim);
  Acc diff_p, rho, v_p, w_p;
  for (std::int64_t i = 0; i < quad.n; ++i) {
    const auto gv = gradv.subspan(static_cast<std::size_t>(i) * d, d);
    const auto gw = gradw.subspan(static_cast<std::size_t>(i) * d, d);
    double diff2 = 0.0, v2 = 0.0, w2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      diff2 += (gv[k] - gw[k]) * (gv[k] - gw[k]);
      v2 += gv[k] * gv[k];
      w2 += gw[k] * gw[k];
    }
    diff_p.add(pow_nn_val(diff2, 0.5 * p));
    v_p.add(pow_nn_val(v2, 0.5 * p));
    w_p.add(pow_nn_val(w2, 0.5 * p));
    rho.add(fdiff_sq(p, gv, gw));
  }
  const double diff_norm_p = quad.weight * diff_p.result();  // ||grad v - grad w||_p^p
  const double rho_sq = quad.weight * rho.result();
  const double nv = std::pow(quad.weight * v_p.result(), 1.0 / p);
  const double nw = std::pow(quad.weight * w_p.result(), 1.0 / p);

  RelationCheck out;
  if (p >= 2.0) {
    out.lhs = diff_norm_p;
    out.mid = rho_sq;
    out.rhs = std::pow(nv + nw, p - 2.0) * std::pow(diff_norm_p, 2.0 / p);
  } else {
    out.lhs = rho_sq;
    out.mid = diff_norm_p;
    out.rhs = std::pow(nv + nw, 0.5 * p * (2.0 - p)) * std::pow(rho_sq, 0.5 * p);
  }
  if (out.lhs == 0.0 && out.mid == 0.0 && out.rhs == 0.0) {
    out.c_empirical = 1.0;
    out.holds = true;
    return out;
  }
  const double r1 = out.mid > 0.0 ? out.lhs / out.mid : std::numeric_limits<double>::infinity();
  const double r2 = out.rhs > 0.0 ? out.mid / out.rhs : std::numeric_limits<double>::infinity();
  out.c_empirical = std::max({r1, r2, 1.0});
  out.holds = std::isfinite(out.c_empirical);
  return out;
}

}  // namespace deepritz
