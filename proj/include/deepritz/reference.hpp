#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace deepritz {

// Closed-form minimizers of the three 1-D training families, indexed by the
// scalar family parameter:
//   Vrhs: u(q,x) = (sin(q pi x) - sin(q pi) x) / pi^2      on (-1,1), p = 2
//   Vexp: u(q,x) = (1 - |x|^{q'}) / q', q' = q/(q-1)       on (-1,1), f = 1
//   Vdom: u(q,x) = (q^2 - x^2) / 2                         on (-q,q), p = 2
enum class Family { Vrhs, Vexp, Vdom };

double exact_value(Family fam, double q, double x);
double exact_grad(Family fam, double q, double x);

// The strong-form right-hand side each family solves against.
double family_rhs(Family fam, double q, double x);
double family_exponent(Family fam, double q);

// Max residual of -d/dx(|u'|^{p-2} u') - f over sampled interior points,
// with the flux differentiated by central differences at step 1e-4. Sample
// points stay away from gradient kinks.
double residual_check(Family fam, double q, int n_points);

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 100;
  double armijo_c = 1e-4;
};

enum class FdBc { Dirichlet0, Penalty };

struct FDSolution {
  std::vector<double> x;  // n+1 nodes including endpoints
  std::vector<double> u;
  double h = 0.0;
  int newton_iters = 0;
  bool converged = false;
  std::vector<double> residual_history;
  std::vector<double> energy_history;

  // Piecewise-linear interpolant of the nodal values.
  double interp(double xq) const;
};

// Damped-Newton minimizer of the discrete energy
//   sum_cells h [ (1/p) |Du|_eps^p ] - sum_nodes w_i f(x_i) u_i
//   (+ (lambda/p)(|u_0|^p + |u_n|^p) under the penalty condition)
// with forward differences Du, |Du|_eps = sqrt(Du^2 + eps^2), eps = 1e-10,
// and trapezoidal nodal load weights. The regularization exists only inside
// this oracle; trained energies never see it.
FDSolution fd_solve_1d(double p, const std::function<double(double)>& f, double a, double b,
                       int n, FdBc bc, double lambda = 0.0, NewtonOptions opts = {});

struct PenaltyRateRow {
  double lambda = 0.0;
  double boundary_norm_p = 0.0;  // |u_l(a)|^p + |u_l(b)|^p
  double natural_sq = 0.0;       // cellwise rho_F^2 against the Dirichlet solve
};

// Solves the penalized problem for each lambda >= 1 and reports the
// boundary norm and the natural distance to the homogeneous-Dirichlet
// solution on the same mesh.
std::vector<PenaltyRateRow> penalty_rate_study(double p, const std::function<double(double)>& f,
                                               std::span<const double> lambdas, int n,
                                               double a = -1.0, double b = 1.0);

// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace deepritz
