#include "deepritz/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deepritz/kernels.hpp"
#include "deepritz/metrics.hpp"

namespace deepritz {

double exact_value(Family fam, double q, double x) {
  switch (fam) {
    case Family::Vrhs:
      return (std::sin(q * M_PI * x) - std::sin(q * M_PI) * x) / (M_PI * M_PI);
    case Family::Vexp: {
      if (q == 1.0) throw std::invalid_argument("exact_value: Vexp needs q != 1");
      const double qp = q / (q - 1.0);
      return (1.0 - std::pow(std::abs(x), qp)) / qp;
    }
    case Family::Vdom: return 0.5 * (q * q - x * x);
  }
  return 0.0;
}

double exact_grad(Family fam, double q, double x) {
  switch (fam) {
    case Family::Vrhs:
      return (q * M_PI * std::cos(q * M_PI * x) - std::sin(q * M_PI)) / (M_PI * M_PI);
    case Family::Vexp: {
      if (q == 1.0) throw std::invalid_argument("exact_grad: Vexp needs q != 1");
      const double qp = q / (q - 1.0);
      if (x == 0.0) return 0.0;
      return -(x > 0.0 ? 1.0 : -1.0) * std::pow(std::abs(x), qp - 1.0);
    }
    case Family::Vdom: return -x;
  }
  return 0.0;
}

double family_rhs(Family fam, double q, double x) {
  switch (fam) {
    case Family::Vrhs: return q * q * std::sin(q * M_PI * x);
    case Family::Vexp: return 1.0;
    case Family::Vdom: return 1.0;
  }
  return 0.0;
}

double family_exponent(Family fam, double q) {
  return fam == Family::Vexp ? q : 2.0;
}

double residual_check(Family fam, double q, int n_points) {
  const double p = family_exponent(fam, q);
  const double hw = fam == Family::Vdom ? q : 1.0;  // domain half-width
  const double h = 1e-4;
  double worst = 0.0;
  for (int i = 0; i < n_points; ++i) {
    // interior sample, clear of the endpoints and of x = 0 where the Vexp
    // gradient has its kink
    double x = -0.95 * hw + 1.9 * hw * (static_cast<double>(i) + 0.5) / n_points;
    if (std::abs(x) < 1e-2) x += 2e-2;
    auto flux = [&](double xx) {
      const double g = exact_grad(fam, q, xx);
      return pow_abs_val(g, p - 2.0) * g;
    };
    const double div_flux = (flux(x + h) - flux(x - h)) / (2.0 * h);
    worst = std::max(worst, std::abs(-div_flux - family_rhs(fam, q, x)));
  }
  return worst;
}

double FDSolution::interp(double xq) const {
  if (xq <= x.front()) return u.front();
  if (xq >= x.back()) return u.back();
  const auto it = std::upper_bound(x.begin(), x.end(), xq);
  const std::size_t j = static_cast<std::size_t>(it - x.begin());
  const double t = (xq - x[j - 1]) / (x[j] - x[j - 1]);
  return (1.0 - t) * u[j - 1] + t * u[j];
}

namespace {

constexpr double kEps = 1e-10;  // gradient regularization, oracle only

struct Discrete {
  double p;
  double h;
  int n;  // cells
  FdBc bc;
  double lambda;
  std::vector<double> load;  // nodal weight * f(x_i), trapezoidal weights

  // Free indices: interior nodes for Dirichlet, all nodes for penalty.
  int first_free() const { return bc == FdBc::Dirichlet0 ? 1 : 0; }
  int last_free() const { return bc == FdBc::Dirichlet0 ? n - 1 : n; }

  double energy(const std::vector<double>& u) const {
    double e = 0.0;
    for (int i = 0; i < n; ++i) {
      const double du = (u[static_cast<std::size_t>(i + 1)] - u[static_cast<std::size_t>(i)]) / h;
      const double m = std::sqrt(du * du + kEps * kEps);
      e += h / p * std::pow(m, p);
    }
    for (int i = 0; i <= n; ++i) e -= load[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
    if (bc == FdBc::Penalty) {
      e += lambda / p * (pow_abs_val(u.front(), p) + pow_abs_val(u.back(), p));
    }
    return e;
  }

  // Gradient w.r.t. all nodes (constrained entries zeroed afterwards).
  void gradient(const std::vector<double>& u, std::vector<double>& g) const {
    g.assign(u.size(), 0.0);
    for (int i = 0; i < n; ++i) {
      const double du = (u[static_cast<std::size_t>(i + 1)] - u[static_cast<std::size_t>(i)]) / h;
      const double m = std::sqrt(du * du + kEps * kEps);
      const double flux = std::pow(m, p - 2.0) * du;  // d/d(du) of (1/p) m^p
      g[static_cast<std::size_t>(i)] -= flux;
      g[static_cast<std::size_t>(i + 1)] += flux;
    }
    for (int i = 0; i <= n; ++i) g[static_cast<std::size_t>(i)] -= load[static_cast<std::size_t>(i)];
    if (bc == FdBc::Penalty) {
      g.front() += lambda / p * pow_abs_d1(u.front(), p);
      g.back() += lambda / p * pow_abs_d1(u.back(), p);
    } else {
      g.front() = 0.0;
      g.back() = 0.0;
    }
  }

  // Tridiagonal Hessian in (diag, off) form over all nodes.
  void hessian(const std::vector<double>& u, std::vector<double>& diag,
               std::vector<double>& off) const {
    diag.assign(u.size(), 0.0);
    off.assign(u.size() - 1, 0.0);
    for (int i = 0; i < n; ++i) {
      const double du = (u[static_cast<std::size_t>(i + 1)] - u[static_cast<std::size_t>(i)]) / h;
      const double m2 = du * du + kEps * kEps;
      const double m = std::sqrt(m2);
      // d(flux)/d(du) = m^{p-2} (1 + (p-2) du^2 / m^2) > 0
      const double k = std::pow(m, p - 2.0) * (1.0 + (p - 2.0) * du * du / m2) / h;
      diag[static_cast<std::size_t>(i)] += k;
      diag[static_cast<std::size_t>(i + 1)] += k;
      off[static_cast<std::size_t>(i)] -= k;
    }
    if (bc == FdBc::Penalty) {
      // second derivative of (lambda/p)|u|^p
      auto d2 = [&](double v) {
        if (v == 0.0) return 0.0;
        return lambda * (p - 1.0) * std::pow(std::abs(v), p - 2.0);
      };
      diag.front() += d2(u.front());
      diag.back() += d2(u.back());
    }
  }
};

// Thomas solve of the tridiagonal system restricted to the free nodes.
void solve_tridiag(std::vector<double> diag, std::vector<double> off, std::vector<double> rhs,
                   int lo, int hi, std::vector<double>& out) {
  for (int i = lo + 1; i <= hi; ++i) {
    const double m = off[static_cast<std::size_t>(i - 1)] / diag[static_cast<std::size_t>(i - 1)];
    diag[static_cast<std::size_t>(i)] -= m * off[static_cast<std::size_t>(i - 1)];
    rhs[static_cast<std::size_t>(i)] -= m * rhs[static_cast<std::size_t>(i - 1)];
  }
  out.assign(diag.size(), 0.0);
  out[static_cast<std::size_t>(hi)] = rhs[static_cast<std::size_t>(hi)] / diag[static_cast<std::size_t>(hi)];
  for (int i = hi - 1; i >= lo; --i) {
    out[static_cast<std::size_t>(i)] =
        (rhs[static_cast<std::size_t>(i)] - off[static_cast<std::size_t>(i)] * out[static_cast<std::size_t>(i + 1)]) /
        diag[static_cast<std::size_t>(i)];
  }
}

}  // namespace

FDSolution fd_solve_1d(double p, const std::function<double(double)>& f, double a, double b,
                       int n, FdBc bc, double lambda, NewtonOptions opts) {
  if (n < 3) throw std::invalid_argument("fd_solve_1d: need n >= 3 cells");
  if (!(p > 1.0)) throw std::invalid_argument("fd_solve_1d: need p > 1");
  if (!(a < b)) throw std::invalid_argument("fd_solve_1d: need a < b");

  Discrete disc;
  disc.p = p;
  disc.n = n;
  disc.h = (b - a) / n;
  disc.bc = bc;
  disc.lambda = lambda;

  FDSolution sol;
  sol.h = disc.h;
  sol.x.resize(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) sol.x[static_cast<std::size_t>(i)] = a + i * disc.h;
  sol.u.assign(static_cast<std::size_t>(n + 1), 0.0);

  disc.load.resize(static_cast<std::size_t>(n + 1));
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 0.5 * disc.h : disc.h;
    disc.load[static_cast<std::size_t>(i)] = w * f(sol.x[static_cast<std::size_t>(i)]);
  }

  std::vector<double> g, diag, off, step;
  double e = disc.energy(sol.u);
  sol.energy_history.push_back(e);
  for (int it = 0; it < opts.max_iter; ++it) {
    disc.gradient(sol.u, g);
    double gmax = 0.0;
    for (int i = disc.first_free(); i <= disc.last_free(); ++i)
      gmax = std::max(gmax, std::abs(g[static_cast<std::size_t>(i)]));
    sol.residual_history.push_back(gmax);
    if (gmax <= opts.tol) {
      sol.converged = true;
      sol.newton_iters = it;
      return sol;
    }

    disc.hessian(sol.u, diag, off);
    std::vector<double> rhs = g;
    solve_tridiag(diag, off, rhs, disc.first_free(), disc.last_free(), step);

    double descent = 0.0;
    for (int i = disc.first_free(); i <= disc.last_free(); ++i)
      descent += g[static_cast<std::size_t>(i)] * step[static_cast<std::size_t>(i)];
    if (!(descent > 0.0)) {            // fall back to steepest descent
      step = g;
      descent = 0.0;
      for (int i = disc.first_free(); i <= disc.last_free(); ++i)
        descent += g[static_cast<std::size_t>(i)] * g[static_cast<std::size_t>(i)];
    }

    // Armijo backtracking with halving on E(u - t*step).
    double t = 1.0;
    std::vector<double> trial = sol.u;
    double e_trial = e;
    for (int ls = 0; ls < 60; ++ls) {
      for (int i = disc.first_free(); i <= disc.last_free(); ++i) {
        trial[static_cast<std::size_t>(i)] =
            sol.u[static_cast<std::size_t>(i)] - t * step[static_cast<std::size_t>(i)];
      }
      e_trial = disc.energy(trial);
      if (e_trial <= e - opts.armijo_c * t * descent) break;
      t *= 0.5;
    }
    sol.u = trial;
    e = e_trial;
    sol.energy_history.push_back(e);
  }
  sol.newton_iters = opts.max_iter;
  throw NumericError("fd_solve_1d: Newton failed to reach tol " + std::to_string(opts.tol) +
                     " in " + std::to_string(opts.max_iter) + " iterations (last residual " +
                     std::to_string(sol.residual_history.back()) + ")");
}

std::vector<PenaltyRateRow> penalty_rate_study(double p, const std::function<double(double)>& f,
                                               std::span<const double> lambdas, int n, double a,
                                               double b) {
  for (double l : lambdas) {
    if (!(l >= 1.0)) throw std::invalid_argument("penalty_rate_study: lambdas must be >= 1");
  }
  const FDSolution dirichlet = fd_solve_1d(p, f, a, b, n, FdBc::Dirichlet0);
  std::vector<PenaltyRateRow> rows;
  for (double lambda : lambdas) {
    const FDSolution ul = fd_solve_1d(p, f, a, b, n, FdBc::Penalty, lambda);
    PenaltyRateRow row;
    row.lambda = lambda;
    row.boundary_norm_p = pow_abs_val(ul.u.front(), p) + pow_abs_val(ul.u.back(), p);
    double rho = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dl = (ul.u[static_cast<std::size_t>(i + 1)] - ul.u[static_cast<std::size_t>(i)]) / ul.h;
      const double dd = (dirichlet.u[static_cast<std::size_t>(i + 1)] - dirichlet.u[static_cast<std::size_t>(i)]) /
                        dirichlet.h;
      const double diff = f_map_scalar(p, dl) - f_map_scalar(p, dd);
      rho += ul.h * diff * diff;
    }
    row.natural_sq = rho;
    rows.push_back(row);
  }
  return rows;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw std::invalid_argument("loglog_slope: need matching n >= 2");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double d = static_cast<double>(n) * sxx - sx * sx;
  return (static_cast<double>(n) * sxy - sx * sy) / d;
}

}  // namespace deepritz
