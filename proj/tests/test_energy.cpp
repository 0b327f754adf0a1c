#include <cmath>
#include <vector>

#include "doctest.h"

#include "deepritz/energy.hpp"
#include "deepritz/rng.hpp"

using namespace deepritz;

namespace {

QuadratureSet grid1(double lo, double hi, std::int64_t n) {
  const Axis ax{lo, hi, n};
  return tensor_grid(std::span<const Axis>(&ax, 1));
}

QuadratureSet grid2(const Axis& a, const Axis& b) {
  const Axis axes[2] = {a, b};
  return tensor_grid(axes);
}

ProblemSpec fixed_p_spec(double p, std::int64_t n = 200) {
  ProblemSpec spec;
  spec.variant = ProblemSpec::Variant::FixedP;
  spec.param_dim = 0;
  spec.spatial_dim = 1;
  spec.p = p;
  spec.rhs = Expr::parse("1", 0, 1);
  spec.lift.kind = LiftSpec::Kind::Product1d;
  spec.lift.a = -1.0;
  spec.lift.b = 1.0;
  spec.interior = grid1(-1.0, 1.0, n);
  return spec;
}

ArchSpec small_arch(int input_dim, Activation act, std::optional<FourierSpec> fourier = {}) {
  ArchSpec arch;
  arch.input_dim = input_dim;
  arch.hidden = {5, 4};
  arch.activation = act;
  arch.fourier = fourier;
  return arch;
}

TapeProgram energy_program(const ProblemSpec& spec, const ArchSpec& arch) {
  return [&spec, &arch](Tape& tape, std::span<const Var> t) {
    BoundNet net;
    net.arch = &arch;
    net.tape = &tape;
    net.params.assign(t.begin(), t.end());
    net.dims.push_back(arch.fourier ? 2 * arch.fourier->num_features : arch.input_dim);
    for (int w : arch.hidden) net.dims.push_back(w);
    net.dims.push_back(1);
    tape.one();
    return energy_of_net(tape, spec, net);
  };
}

std::vector<double> random_theta(const ArchSpec& arch, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> theta(static_cast<std::size_t>(param_count(arch)));
  for (double& t : theta) t = uniform_in(gen, -0.6, 0.6);
  return theta;
}

}  // namespace

TEST_CASE("integrand: hand values and the zero-gradient guard") {
  Tape tape;
  ProblemSpec spec = fixed_p_spec(2.0);
  {
    const Var u = tape.constant(1.0);
    const Var du[1] = {tape.constant(0.0)};
    const double x[1] = {0.0};
    const Var d = integrand(tape, spec, {}, x, u, du);
    CHECK(tape.value(d) == -1.0);
  }
  {
    ProblemSpec p4 = fixed_p_spec(4.0);
    p4.spatial_dim = 2;
    p4.rhs = Expr::parse("0", 0, 2);
    p4.interior = grid2({-1.0, 1.0, 4}, {-1.0, 1.0, 4});
    const Var u = tape.constant(3.0);
    const Var du[2] = {tape.constant(2.0), tape.constant(0.0)};
    const double x[2] = {0.0, 0.0};
    const Var d = integrand(tape, p4, {}, x, u, du);
    CHECK(tape.value(d) == 4.0);  // 16/4
  }
  {
    ProblemSpec p15 = fixed_p_spec(1.5);
    p15.rhs = Expr::parse("0", 0, 1);
    const Var u = tape.constant(5.0);
    const Var du[1] = {tape.constant(0.0)};
    const double x[1] = {0.0};
    const Var d = integrand(tape, p15, {}, x, u, du);
    CHECK(tape.value(d) == 0.0);
    CHECK(std::isfinite(tape.value(d)));
  }
}

TEST_CASE("energy: zero network gives zero") {
  const ProblemSpec spec = fixed_p_spec(2.0);
  const ArchSpec arch = small_arch(1, Activation::Relu2);
  const std::vector<double> theta(static_cast<std::size_t>(param_count(arch)), 0.0);
  Tape tape;
  CHECK(tape.value(energy(tape, spec, arch, theta)) == 0.0);
}

TEST_CASE("energy: the exact p=2 minimizer reaches -1/3") {
  const QuadratureSet quad = grid1(-1.0, 1.0, 1000);
  const double e = field_energy_1d(
      2.0, quad, [](double) { return 1.0; },
      [](double x) { return std::pair<double, double>{0.5 * (1.0 - x * x), -x}; });
  CHECK(std::abs(e - (-1.0 / 3.0)) <= 1e-4);
}

TEST_CASE("energy: penalty of a constant has the closed form") {
  const QuadratureSet quad = grid1(-1.0, 1.0, 500);
  const QuadratureSet bnd = boundary_grid_1d(-1.0, 1.0);
  const double c = 1.0, lambda = 3.0;
  const double e = field_energy_1d(
      2.0, quad, [](double) { return 1.0; },
      [c](double) { return std::pair<double, double>{c, 0.0}; }, &bnd, lambda);
  CHECK(e == doctest::Approx(lambda * c * c - 2.0 * c).epsilon(1e-12));
}

TEST_CASE("energy: penalty term is strictly increasing in lambda") {
  const QuadratureSet quad = grid1(-1.0, 1.0, 100);
  const QuadratureSet bnd = boundary_grid_1d(-1.0, 1.0);
  auto field = [](double x) { return std::pair<double, double>{1.0 + 0.2 * x, 0.2}; };
  auto one = [](double) { return 1.0; };
  double prev = field_energy_1d(3.0, quad, one, field, &bnd, 0.0);
  for (double lambda : {0.5, 1.0, 5.0, 50.0}) {
    const double e = field_energy_1d(3.0, quad, one, field, &bnd, lambda);
    CHECK(e > prev);
    prev = e;
  }
}

TEST_CASE("energy_slice: zero network, and slices integrate back to the total") {
  ProblemSpec spec;
  spec.variant = ProblemSpec::Variant::VariableRHS;
  spec.param_dim = 1;
  spec.spatial_dim = 1;
  spec.p = 2.0;
  spec.rhs = Expr::parse("p0^2*sin(p0*pi*x0)", 1, 1);
  spec.lift.kind = LiftSpec::Kind::Product1d;
  spec.lift.a = -1.0;
  spec.lift.b = 1.0;
  const Axis p_axis{1.0, 3.0, 10};
  const Axis x_axis{-1.0, 1.0, 50};
  spec.interior = grid2(p_axis, x_axis);

  const ArchSpec arch = small_arch(2, Activation::GeluApprox);
  const std::vector<double> zeros(static_cast<std::size_t>(param_count(arch)), 0.0);
  const QuadratureSet spatial = grid1(-1.0, 1.0, 50);
  for (double q : {1.2, 2.0, 2.8}) {
    const double pc[1] = {q};
    CHECK(energy_slice(spec, arch, zeros, pc, spatial) == 0.0);
  }

  // Fubini: parameter-weighted slice sum equals the tensor-grid energy
  const auto theta = init_params(arch, 5);
  Tape tape;
  const double total = tape.value(energy(tape, spec, arch, theta));
  double slice_sum = 0.0;
  const double dp = (p_axis.hi - p_axis.lo) / static_cast<double>(p_axis.n);
  for (std::int64_t i = 0; i < p_axis.n; ++i) {
    const double pc[1] = {p_axis.lo + (static_cast<double>(i) + 0.5) * dp};
    slice_sum += dp * energy_slice(spec, arch, theta, pc, spatial);
  }
  CHECK(std::abs(slice_sum - total) <= 1e-10 * std::max(1.0, std::abs(total)));
}

TEST_CASE("energy gradients match finite differences for every variant") {
  SUBCASE("fixed_p") {
    ProblemSpec spec = fixed_p_spec(3.0, 24);
    const ArchSpec arch = small_arch(1, Activation::GeluApprox);
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 1), 1e-6) <= 1e-5);
  }
  SUBCASE("penalty") {
    ProblemSpec spec = fixed_p_spec(2.0, 24);
    spec.variant = ProblemSpec::Variant::Penalty;
    spec.lambda = 10.0;
    spec.lift.kind = LiftSpec::Kind::None;
    spec.boundary = boundary_grid_1d(-1.0, 1.0);
    const ArchSpec arch = small_arch(1, Activation::S2Relu);
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 2), 1e-6) <= 1e-5);
  }
  SUBCASE("variable_rhs") {
    ProblemSpec spec;
    spec.variant = ProblemSpec::Variant::VariableRHS;
    spec.param_dim = 1;
    spec.spatial_dim = 1;
    spec.p = 2.0;
    spec.rhs = Expr::parse("p0^2*sin(p0*pi*x0)", 1, 1);
    spec.lift.kind = LiftSpec::Kind::Product1d;
    spec.lift.a = -1.0;
    spec.lift.b = 1.0;
    spec.interior = grid2({1.0, 3.0, 5}, {-1.0, 1.0, 6});
    const ArchSpec arch = small_arch(2, Activation::GeluApprox, FourierSpec{3, 1.0});
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 3), 1e-6) <= 1e-5);
  }
  SUBCASE("variable_exponent") {
    ProblemSpec spec;
    spec.variant = ProblemSpec::Variant::VariableExponent;
    spec.param_dim = 1;
    spec.spatial_dim = 1;
    spec.p_of = Expr::parse("p0", 1, 0);
    spec.p_min = 1.5;
    spec.p_max = 6.0;
    spec.rhs = Expr::parse("1", 1, 1);
    spec.lift.kind = LiftSpec::Kind::Product1d;
    spec.lift.a = -1.0;
    spec.lift.b = 1.0;
    spec.interior = grid2({1.5, 6.0, 5}, {-1.0, 1.0, 6});
    const ArchSpec arch = small_arch(2, Activation::S2Relu);
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 4), 1e-6) <= 1e-5);
  }
  SUBCASE("variable_domain") {
    ProblemSpec spec;
    spec.variant = ProblemSpec::Variant::VariableDomain;
    spec.param_dim = 1;
    spec.spatial_dim = 1;
    spec.p = 2.0;
    spec.rhs = Expr::parse("1", 1, 1);
    spec.lift.kind = LiftSpec::Kind::IntervalFamily;
    spec.interior = variable_domain_grid({1.0, 2.0, 5}, [](double p) { return 8.0 * p; });
    const ArchSpec arch = small_arch(2, Activation::GeluApprox);
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 5), 1e-6) <= 1e-5);
  }
  SUBCASE("mixed_mass") {
    ProblemSpec spec;
    spec.variant = ProblemSpec::Variant::MixedMass;
    spec.param_dim = 5;
    spec.spatial_dim = 2;
    spec.p_of = Expr::parse("p4", 5, 0);
    spec.p_min = 1.8;
    spec.p_max = 2.2;
    spec.rhs = Expr::parse("p0/(2*pi*p1)*exp(-((x0-p2)^2+(x1-p3)^2)/(2*p1^2))", 5, 2);
    const std::vector<Axis> box{{4.7, 7.9, 1}, {0.2, 0.5, 1}, {-0.3, 0.3, 1},
                                {-0.3, 0.3, 1}, {1.8, 2.2, 1}};
    spec.interior = random_parameter_grid(box, 3, disk_grid(1.0, 5), 11);
    const ArchSpec arch = small_arch(7, Activation::S2Relu);
    CHECK(check_gradient(energy_program(spec, arch), random_theta(arch, 6), 1e-6) <= 1e-5);
  }
}

TEST_CASE("fused evaluation matches the tape energy bit for bit") {
  ProblemSpec spec;
  spec.variant = ProblemSpec::Variant::VariableRHS;
  spec.param_dim = 1;
  spec.spatial_dim = 1;
  spec.p = 2.0;
  spec.rhs = Expr::parse("p0^2*sin(p0*pi*x0)", 1, 1);
  spec.lift.kind = LiftSpec::Kind::Product1d;
  spec.lift.a = -1.0;
  spec.lift.b = 1.0;
  spec.interior = grid2({1.0, 3.0, 40}, {-1.0, 1.0, 60});  // spans several chunks
  const ArchSpec arch = small_arch(2, Activation::GeluApprox);
  const auto theta = init_params(arch, 21);

  Tape tape;
  const double tape_value = tape.value(energy(tape, spec, arch, theta));

  const EnergyResult serial = energy_value_grad(spec, arch, theta, 1);
  const EnergyResult threaded = energy_value_grad(spec, arch, theta, 2);
  CHECK(serial.value == tape_value);
  CHECK(threaded.value == serial.value);
  CHECK(threaded.grad == serial.grad);

  // fused gradient agrees with a fresh tape-path gradient
  const auto full = grad(energy_program(spec, arch), theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double denom = std::max({std::abs(full.gradient[i]), std::abs(serial.grad[i]), 1e-12});
    CHECK(std::abs(full.gradient[i] - serial.grad[i]) / denom <= 1e-12);
  }
}

TEST_CASE("energy error contract: the offending point is identified") {
  ProblemSpec spec = fixed_p_spec(2.0, 8);
  spec.rhs = Expr::parse("log(0-1)", 0, 1);  // NaN density at every point
  const ArchSpec arch = small_arch(1, Activation::Relu2);
  const auto theta = init_params(arch, 2);
  Tape tape;
  CHECK_THROWS_WITH_AS(energy(tape, spec, arch, theta), doctest::Contains("point 0"),
                       NumericError);
  CHECK_THROWS_AS(energy_value_grad(spec, arch, theta, 2), NumericError);
}

TEST_CASE("problem validation enforces the variant invariants") {
  ProblemSpec spec = fixed_p_spec(2.0, 8);
  spec.boundary = boundary_grid_1d(-1.0, 1.0);
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);  // boundary without penalty

  ProblemSpec pen = fixed_p_spec(2.0, 8);
  pen.variant = ProblemSpec::Variant::Penalty;
  pen.lambda = 1.0;
  pen.lift.kind = LiftSpec::Kind::None;
  CHECK_THROWS_AS(pen.validate(), std::invalid_argument);  // penalty without boundary

  ProblemSpec vexp = fixed_p_spec(2.0, 8);
  vexp.variant = ProblemSpec::Variant::VariableExponent;
  vexp.param_dim = 1;
  vexp.p_of = Expr::parse("p0", 1, 0);
  vexp.p_min = 1.5;
  vexp.p_max = 2.0;
  vexp.interior = grid2({1.5, 6.0, 4}, {-1.0, 1.0, 4});  // p(q) exceeds p_max
  CHECK_THROWS_AS(vexp.validate(), std::invalid_argument);
}

TEST_CASE("convexity: energies of perturbed fields never undercut the minimizer") {
  const QuadratureSet quad = grid1(-1.0, 1.0, 2000);
  auto one = [](double) { return 1.0; };
  auto ustar = [](double x) { return std::pair<double, double>{0.5 * (1.0 - x * x), -x}; };
  const double e_star = field_energy_1d(2.0, quad, one, ustar);
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 25; ++rep) {
    const double delta = uniform_in(gen, 0.05, 1.0);
    const double k = 1.0 + static_cast<double>(gen() % 3);
    auto field = [&](double x) {
      const double s = std::sin(k * M_PI * 0.5 * (x + 1.0));
      const double ds = k * M_PI * 0.5 * std::cos(k * M_PI * 0.5 * (x + 1.0));
      return std::pair<double, double>{0.5 * (1.0 - x * x) + delta * s, -x + delta * ds};
    };
    CHECK(field_energy_1d(2.0, quad, one, field) >= e_star);
  }
}
