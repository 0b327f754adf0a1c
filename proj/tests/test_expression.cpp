#include <cmath>
#include <stdexcept>

#include "doctest.h"

#include "deepritz/expression.hpp"

using namespace deepritz;

TEST_CASE("expression: arithmetic, precedence and functions") {
  const Expr e = Expr::parse("1 + 2*3^2", 0, 0);
  CHECK(e.eval({}, {}) == 19.0);
  CHECK(Expr::parse("-2^2", 0, 0).eval({}, {}) == -4.0);
  CHECK(Expr::parse("(1+2)*(3-5)", 0, 0).eval({}, {}) == -6.0);
  CHECK(Expr::parse("pi", 0, 0).eval({}, {}) == M_PI);
  CHECK(Expr::parse("sqrt(abs(-9))", 0, 0).eval({}, {}) == 3.0);
  CHECK(Expr::parse("exp(0) + cos(0)", 0, 0).eval({}, {}) == 2.0);
}

TEST_CASE("expression: parameter and spatial slots") {
  const Expr f = Expr::parse("p0^2*sin(p0*pi*x0)", 1, 1);
  const double p[1] = {2.0};
  const double x[1] = {0.25};
  CHECK(f.eval(p, x) == doctest::Approx(4.0 * std::sin(0.5 * M_PI)));

  // the gaussian bump with five parameters and two spatial coordinates
  const Expr g = Expr::parse("p0/(2*pi*p1)*exp(-((x0-p2)^2+(x1-p3)^2)/(2*p1^2))", 5, 2);
  const double pp[5] = {2.0 * M_PI, 0.3, 0.0, 0.0, 2.0};
  const double xx[2] = {0.0, 0.0};
  CHECK(g.eval(pp, xx) == doctest::Approx(2.0 * M_PI / (2.0 * M_PI * 0.3)));
}

TEST_CASE("expression: errors") {
  CHECK_THROWS_AS(Expr::parse("p1", 1, 0), std::invalid_argument);  // only p0 exists
  CHECK_THROWS_AS(Expr::parse("x0", 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Expr::parse("sin(", 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Expr::parse("1 + ", 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Expr::parse("foo(1)", 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(Expr::parse("1 2", 0, 0), std::invalid_argument);
}

TEST_CASE("expression: right-associative powers") {
  CHECK(Expr::parse("2^3^2", 0, 0).eval({}, {}) == 512.0);
  CHECK(Expr::parse("2^-1", 0, 0).eval({}, {}) == 0.5);
}
