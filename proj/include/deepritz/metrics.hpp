#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepritz/energy.hpp"
#include "deepritz/quadrature.hpp"

namespace deepritz {

// F(a) = |a|^{(p-2)/2} a, the nonlinearity whose L^2 distance of gradients
// is the natural error measure of the p-Dirichlet energy; F(0) = 0.
void f_map(double p, std::span<const double> a, std::span<double> out);
double f_map_scalar(double p, double a);

// Gauss-Legendre nodes/weights on [0,1].
void gauss_legendre_01(int n, std::vector<double>& nodes, std::vector<double>& weights);

// squared natural distance: weight * sum_i |F(gradv_i) - F(gradw_i)|^2 over
// the quadrature points. Fields are sampled row-major (n x d with d the
// spatial dimension). The parametric overload evaluates the exponent per
// point from the leading parameter coordinates.
double natural_distance_sq(double p, const QuadratureSet& quad, std::span<const double> gradv,
                           std::span<const double> gradw, int spatial_dim);
double natural_distance_sq(const std::function<double(std::span<const double>)>& p_of,
                           int param_dim, const QuadratureSet& quad,
                           std::span<const double> gradv, std::span<const double> gradw,
                           int spatial_dim);

// Adds lambda * weight_b * sum |F(v)-F(w)|^2 over boundary values (scalar F).
double penalized_distance_sq(double p, double lambda, const QuadratureSet& interior,
                             const QuadratureSet& boundary, std::span<const double> gradv,
                             std::span<const double> gradw, int spatial_dim,
                             std::span<const double> v_bnd, std::span<const double> w_bnd);

// Reference field for error reports: value and spatial gradient at
// (parameters, x).
struct FieldRef {
  std::function<double(std::span<const double>, std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>
      gradient;
};

struct SliceError {
  std::vector<double> pcoords;
  double lp_abs = 0.0;
  double lp_rel = 0.0;  // NaN when the reference norm vanishes
  double w1p_abs = 0.0;
  double w1p_rel = 0.0;
  double natural_sq = 0.0;
  bool rel_defined = true;
};

struct ErrorReport {
  std::vector<SliceError> slices;
  double lp_abs = 0.0, lp_rel = 0.0, w1p_abs = 0.0, w1p_rel = 0.0, natural_sq = 0.0;
  bool rel_defined = true;

  void finalize();  // fills the aggregate means from the slices
};

// Discrete L^p and W^{1,p}-seminorm errors of the lifted network against a
// reference, slice by slice, each slice on its own spatial quadrature.
ErrorReport norm_errors(const ProblemSpec& spec, const ArchSpec& arch,
                        std::span<const double> theta, const FieldRef& ref,
                        std::span<const std::vector<double>> slice_params,
                        std::span<const QuadratureSet> spatial_quads);

// Gauss-Legendre approximation of
//   eta^2(a,b) = int_0^1 D2phi(tau a + (1-tau) b) : (a-b) (x) (a-b) (1-tau) dtau
// with D2phi(c) = |c|^{p-2} (I + (p-2) c^ (x) c^). The integrand is taken as
// 0 where the segment crosses the origin and p > 2; for p < 2 that node is
// skipped. a = b = 0 is a domain error.
double eta_sq(double p, std::span<const double> a, std::span<const double> b, int n_tau = 32);

struct RatioEnvelope {
  double min_monotone = 0.0, max_monotone = 0.0;  // (|a|^{p-2}a - |b|^{p-2}b).(a-b) / |F(a)-F(b)|^2
  double min_mean = 0.0, max_mean = 0.0;          // (|a|+|b|)^{p-2}|a-b|^2 / |F(a)-F(b)|^2
  double min_eta = 0.0, max_eta = 0.0;            // eta^2(a,b) / |F(a)-F(b)|^2
};

// Extrema of the three pointwise equivalence ratios over sampled pairs.
RatioEnvelope equivalence_ratios(double p, int dim, std::int64_t n_samples, std::uint64_t seed,
                                 int n_tau = 32);

struct RelationCheck {
  double lhs = 0.0;  // ||gradv - gradw||_p^p for p >= 2, rho_F^2 for p < 2
  double mid = 0.0;
  double rhs = 0.0;  // the Hoelder-factor bound
  double c_empirical = 1.0;
  bool holds = true;
};

// Chain between the natural distance and the W^{1,p} seminorm; returns the
// three quantities and the smallest constant C with lhs <= C*mid and
// mid <= C*rhs.
RelationCheck relation_check(double p, const QuadratureSet& quad, std::span<const double> gradv,
                             std::span<const double> gradw, int spatial_dim);

}  // namespace deepritz
