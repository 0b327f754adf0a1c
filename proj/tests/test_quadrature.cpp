#include <cmath>
#include <vector>

#include "doctest.h"

#include "deepritz/quadrature.hpp"

using namespace deepritz;

namespace {

QuadratureSet grid1(double lo, double hi, std::int64_t n) {
  const Axis ax{lo, hi, n};
  return tensor_grid(std::span<const Axis>(&ax, 1));
}

double integrate(const QuadratureSet& q, const std::function<double(std::span<const double>)>& f) {
  double s = 0.0;
  for (std::int64_t i = 0; i < q.n; ++i) s += f(q.point(i));
  return q.weight * s;
}

}  // namespace

TEST_CASE("tensor_grid: counts, weights and midpoints") {
  const std::vector<Axis> axes{{0.0, 6.0, 100}, {-1.0, 1.0, 1000}};
  const QuadratureSet q = tensor_grid(axes);
  CHECK(q.n == 100000);
  CHECK(q.weight * static_cast<double>(q.n) == doctest::Approx(q.total_measure).epsilon(1e-12));
  CHECK(q.total_measure == doctest::Approx(12.0));

  const QuadratureSet single = grid1(0.0, 1.0, 1);
  CHECK(single.n == 1);
  CHECK(single.point(0)[0] == 0.5);
  CHECK(single.weight == 1.0);

  const QuadratureSet four = grid1(-1.0, 1.0, 4);
  const std::vector<double> expect{-0.75, -0.25, 0.25, 0.75};
  for (int i = 0; i < 4; ++i) CHECK(four.point(i)[0] == expect[static_cast<std::size_t>(i)]);
  CHECK(four.weight == 0.5);
  CHECK(integrate(four, [](std::span<const double>) { return 1.0; }) == doctest::Approx(2.0));
}

TEST_CASE("tensor_grid: interior points only") {
  const QuadratureSet q = grid1(-1.0, 1.0, 999);
  for (std::int64_t i = 0; i < q.n; ++i) {
    CHECK(q.point(i)[0] > -1.0);
    CHECK(q.point(i)[0] < 1.0);
  }
}

TEST_CASE("variable_domain_grid: slice structure and measure") {
  {
    const QuadratureSet q = variable_domain_grid({1.0, 2.0, 2}, [](double) { return 4.0; });
    CHECK(q.n == 8);
    // spatial points of each slice are symmetric about the origin
    for (std::int64_t i = 0; i < 4; ++i) {
      CHECK(q.point(i)[1] == doctest::Approx(-q.point(3 - i)[1]).epsilon(1e-15));
      CHECK(q.point(4 + i)[1] == doctest::Approx(-q.point(7 - i)[1]).epsilon(1e-15));
    }
    // total measure: sum over slices of dp * 2p at p in {1.25, 1.75}
    CHECK(q.total_measure == doctest::Approx(0.5 * 2.5 + 0.5 * 3.5));
  }
  {
    const QuadratureSet q = variable_domain_grid({1.0, 2.0, 100}, [](double p) { return 2000.0 * p; });
    std::int64_t expect = 0;
    for (int i = 0; i < 100; ++i) {
      const double p = 1.0 + (i + 0.5) * 0.01;
      expect += static_cast<std::int64_t>(std::llround(2000.0 * p));
    }
    CHECK(q.n == expect);
    CHECK(integrate(q, [](std::span<const double>) { return 1.0; }) ==
          doctest::Approx(q.total_measure).epsilon(1e-12));
  }
  {
    const QuadratureSet q = variable_domain_grid({1.0, 2.0, 3}, [](double) { return 1.0; });
    CHECK(q.n == 3);
    for (std::int64_t i = 0; i < q.n; ++i) CHECK(q.point(i)[1] == 0.0);
  }
}

TEST_CASE("random_parameter_grid: counts and determinism") {
  const std::vector<Axis> spatial_axes{{-1.0, 1.0, 75}, {-1.0, 1.0, 75}};
  const QuadratureSet spatial = tensor_grid(spatial_axes);
  CHECK(spatial.n == 5625);
  const std::vector<Axis> box{{0.0, 1.0, 1}, {2.0, 3.0, 1}};
  const QuadratureSet a = random_parameter_grid(box, 25, spatial, 99);
  CHECK(a.n == 140625);
  CHECK(a.dim == 4);
  const QuadratureSet b = random_parameter_grid(box, 25, spatial, 99);
  CHECK(a.pts == b.pts);

  const QuadratureSet one_pt = random_parameter_grid(box, 1, grid1(0.0, 1.0, 1), 7);
  CHECK(one_pt.n == 1);
  CHECK(one_pt.point(0)[0] >= 0.0);
  CHECK(one_pt.point(0)[0] < 1.0);
  CHECK(one_pt.point(0)[1] >= 2.0);
  CHECK(one_pt.point(0)[1] < 3.0);
}

TEST_CASE("disk_grid: mask, kept count and area") {
  const QuadratureSet q = disk_grid(1.0, 75);
  for (std::int64_t i = 0; i < q.n; ++i) {
    const auto pt = q.point(i);
    CHECK(pt[0] * pt[0] + pt[1] * pt[1] < 1.0);
  }
  // kept count close to the area fraction pi/4 of the 75x75 square grid
  CHECK(std::abs(static_cast<double>(q.n) - M_PI / 4.0 * 5625.0) <= 0.02 * 5625.0);
  CHECK(q.weight * static_cast<double>(q.n) == doctest::Approx(M_PI).epsilon(1e-12));

  const QuadratureSet tiny = disk_grid(1.0, 1);
  CHECK(tiny.n == 1);
  CHECK(tiny.point(0)[0] == 0.0);
  CHECK(tiny.point(0)[1] == 0.0);
}

TEST_CASE("boundary_grid_1d: counting measure on the endpoints") {
  const QuadratureSet q = boundary_grid_1d(-1.0, 1.0);
  CHECK(q.boundary);
  CHECK(q.n == 2);
  CHECK(q.point(0)[0] == -1.0);
  CHECK(q.point(1)[0] == 1.0);
  CHECK(q.weight == 1.0);
  CHECK(q.total_measure == 2.0);
  const double c = 3.0;
  CHECK(integrate(q, [&](std::span<const double>) { return c * c; }) == 2.0 * c * c);

  const QuadratureSet r = boundary_grid_1d(-5.0, 5.0);
  CHECK(r.point(0)[0] == -r.point(1)[0]);
  CHECK(r.weight == q.weight);
}

TEST_CASE("constant-function exactness across generators") {
  auto one = [](std::span<const double>) { return 1.0; };
  CHECK(integrate(grid1(-2.0, 3.0, 137), one) == doctest::Approx(5.0).epsilon(1e-14));
  const QuadratureSet vd = variable_domain_grid({1.0, 2.0, 13}, [](double p) { return 17.0 * p; });
  CHECK(integrate(vd, one) == doctest::Approx(vd.total_measure).epsilon(1e-14));
  const QuadratureSet disk = disk_grid(2.0, 21);
  CHECK(integrate(disk, one) == doctest::Approx(disk.total_measure).epsilon(1e-14));
}

TEST_CASE("midpoint grids annihilate odd integrands on symmetric intervals") {
  const QuadratureSet q = grid1(-1.0, 1.0, 100);
  CHECK(std::abs(integrate(q, [](std::span<const double> x) { return x[0]; })) <= 1e-14);
}

TEST_CASE("midpoint rule converges at second order") {
  // exact integral of sin(pi x) over (0,1) is 2/pi; the symmetric interval
  // (-1,1) annihilates the integrand, so the order is measured on (0,1)
  const double exact = 2.0 / M_PI;
  std::vector<double> errs;
  for (std::int64_t n : {10, 100, 1000}) {
    const QuadratureSet q = grid1(0.0, 1.0, n);
    const double approx = integrate(q, [](std::span<const double> x) { return std::sin(M_PI * x[0]); });
    errs.push_back(std::abs(approx - exact));
  }
  const double order10 = std::log10(errs[0] / errs[1]);
  const double order100 = std::log10(errs[1] / errs[2]);
  CHECK(order10 >= 1.9);
  CHECK(order10 <= 2.1);
  CHECK(order100 >= 1.9);
  CHECK(order100 <= 2.1);

  // and the symmetric case stays at rounding level
  const QuadratureSet sym = grid1(-1.0, 1.0, 1000);
  CHECK(std::abs(integrate(sym, [](std::span<const double> x) { return std::sin(M_PI * x[0]); })) <=
        1e-13);
}
