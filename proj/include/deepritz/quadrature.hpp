#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace deepritz {

// Point set with a single shared weight: integrals are estimated as
// weight * sum(integrand), i.e. measure-scaled means. weight * n equals
// total_measure by construction.
struct QuadratureSet {
  int dim = 0;
  std::int64_t n = 0;
  std::vector<double> pts;  // n x dim, row-major
  double weight = 0.0;
  double total_measure = 0.0;
  bool boundary = false;

  std::span<const double> point(std::int64_t i) const {
    return {pts.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

struct Axis {
  double lo = 0.0;
  double hi = 1.0;
  std::int64_t n = 1;
};

// Cartesian product of per-axis midpoint grids: lo + (k + 1/2) (hi - lo)/n.
// Endpoints are never included.
QuadratureSet tensor_grid(std::span<const Axis> axes);

// Union over a parameter midpoint grid {p_i} of {p_i} x midpoints(-p_i, p_i)
// with round(n_x_of_p(p_i)) spatial points per slice. total_measure is the
// measure of the non-cylindrical union of slabs.
QuadratureSet variable_domain_grid(const Axis& p_axis,
                                   const std::function<double(double)>& n_x_of_p);

// n_p i.i.d. uniform parameter points crossed with a fixed interior spatial
// set; deterministic in the seed.
QuadratureSet random_parameter_grid(std::span<const Axis> p_box, std::int64_t n_p,
                                    const QuadratureSet& spatial, std::uint64_t seed);

// Midpoint grid on the bounding square masked to |x| < radius. The kept
// count depends on the mask; total_measure is the disk area pi r^2.
QuadratureSet disk_grid(double radius, std::int64_t n_per_axis);

// The two endpoints with counting measure (weight 1 each).
QuadratureSet boundary_grid_1d(double a, double b);

}  // namespace deepritz
