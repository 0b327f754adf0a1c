#include "deepritz/quadrature.hpp"

#include <cmath>
#include <stdexcept>

#include "deepritz/rng.hpp"

namespace deepritz {

namespace {

double midpoint(const Axis& ax, std::int64_t k) {
  return ax.lo + (static_cast<double>(k) + 0.5) * (ax.hi - ax.lo) / static_cast<double>(ax.n);
}

void check_axis(const Axis& ax) {
  if (ax.n < 1) throw std::invalid_argument("quadrature: axis needs n >= 1");
  if (!(ax.lo < ax.hi)) throw std::invalid_argument("quadrature: axis needs lo < hi");
}

}  // namespace

QuadratureSet tensor_grid(std::span<const Axis> axes) {
  if (axes.empty()) throw std::invalid_argument("tensor_grid: no axes");
  std::int64_t total = 1;
  double measure = 1.0;
  for (const Axis& ax : axes) {
    check_axis(ax);
    total *= ax.n;
    measure *= ax.hi - ax.lo;
  }
  QuadratureSet q;
  q.dim = static_cast<int>(axes.size());
  q.n = total;
  q.total_measure = measure;
  q.weight = measure / static_cast<double>(total);
  q.pts.resize(static_cast<std::size_t>(total) * axes.size());
  std::vector<std::int64_t> idx(axes.size(), 0);
  for (std::int64_t i = 0; i < total; ++i) {
    for (std::size_t d = 0; d < axes.size(); ++d) {
      q.pts[static_cast<std::size_t>(i) * axes.size() + d] = midpoint(axes[d], idx[d]);
    }
    for (std::size_t d = axes.size(); d-- > 0;) {
      if (++idx[d] < axes[d].n) break;
      idx[d] = 0;
    }
  }
  return q;
}

QuadratureSet variable_domain_grid(const Axis& p_axis,
                                   const std::function<double(double)>& n_x_of_p) {
  check_axis(p_axis);
  const double dp = (p_axis.hi - p_axis.lo) / static_cast<double>(p_axis.n);
  QuadratureSet q;
  q.dim = 2;
  double measure = 0.0;
  for (std::int64_t i = 0; i < p_axis.n; ++i) {
    const double p = midpoint(p_axis, i);
    const auto nx = static_cast<std::int64_t>(std::llround(n_x_of_p(p)));
    if (nx < 1) throw std::invalid_argument("variable_domain_grid: n_x(p) must round to >= 1");
    const Axis slice{-p, p, nx};
    for (std::int64_t k = 0; k < nx; ++k) {
      q.pts.push_back(p);
      q.pts.push_back(midpoint(slice, k));
    }
    q.n += nx;
    measure += dp * 2.0 * p;
  }
  q.total_measure = measure;
  q.weight = measure / static_cast<double>(q.n);
  return q;
}

QuadratureSet random_parameter_grid(std::span<const Axis> p_box, std::int64_t n_p,
                                    const QuadratureSet& spatial, std::uint64_t seed) {
  if (n_p < 1) throw std::invalid_argument("random_parameter_grid: n_p must be >= 1");
  if (spatial.boundary)
    throw std::invalid_argument("random_parameter_grid: spatial set must be interior");
  double p_measure = 1.0;
  for (const Axis& ax : p_box) {
    if (!(ax.lo < ax.hi)) throw std::invalid_argument("random_parameter_grid: box needs lo < hi");
    p_measure *= ax.hi - ax.lo;
  }
  std::mt19937_64 gen(seed);
  QuadratureSet q;
  q.dim = static_cast<int>(p_box.size()) + spatial.dim;
  q.n = n_p * spatial.n;
  q.total_measure = p_measure * spatial.total_measure;
  q.weight = q.total_measure / static_cast<double>(q.n);
  q.pts.reserve(static_cast<std::size_t>(q.n) * static_cast<std::size_t>(q.dim));
  std::vector<double> pc(p_box.size());
  for (std::int64_t i = 0; i < n_p; ++i) {
    for (std::size_t d = 0; d < p_box.size(); ++d) pc[d] = uniform_in(gen, p_box[d].lo, p_box[d].hi);
    for (std::int64_t s = 0; s < spatial.n; ++s) {
      q.pts.insert(q.pts.end(), pc.begin(), pc.end());
      const auto x = spatial.point(s);
      q.pts.insert(q.pts.end(), x.begin(), x.end());
    }
  }
  return q;
}

QuadratureSet disk_grid(double radius, std::int64_t n_per_axis) {
  if (n_per_axis < 1) throw std::invalid_argument("disk_grid: n_per_axis must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("disk_grid: radius must be positive");
  const Axis ax{-radius, radius, n_per_axis};
  QuadratureSet q;
  q.dim = 2;
  const double r2 = radius * radius;
  for (std::int64_t i = 0; i < n_per_axis; ++i) {
    const double x = midpoint(ax, i);
    for (std::int64_t j = 0; j < n_per_axis; ++j) {
      const double y = midpoint(ax, j);
      if (x * x + y * y < r2) {
        q.pts.push_back(x);
        q.pts.push_back(y);
        ++q.n;
      }
    }
  }
  q.total_measure = M_PI * r2;
  q.weight = q.total_measure / static_cast<double>(q.n);
  return q;
}

QuadratureSet boundary_grid_1d(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("boundary_grid_1d: needs a < b");
  QuadratureSet q;
  q.dim = 1;
  q.n = 2;
  q.pts = {a, b};
  q.weight = 1.0;
  q.total_measure = 2.0;
  q.boundary = true;
  return q;
}

}  // namespace deepritz
