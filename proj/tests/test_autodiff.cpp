#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "deepritz/jet.hpp"
#include "deepritz/network.hpp"
#include "deepritz/rng.hpp"
#include "deepritz/tape.hpp"

using namespace deepritz;

TEST_CASE("grad: product rule") {
  const std::vector<double> theta{3.0, 4.0};
  const auto res = grad([](Tape&, std::span<const Var> t) { return t[0] * t[1]; }, theta);
  CHECK(res.value == 12.0);
  CHECK(res.gradient[0] == 4.0);
  CHECK(res.gradient[1] == 3.0);
}

TEST_CASE("grad: sum of squares") {
  const std::vector<double> theta(5, 1.0);
  const auto res = grad(
      [](Tape& tape, std::span<const Var> t) {
        Var s = t[0] * t[0];
        for (std::size_t i = 1; i < t.size(); ++i) s = s + t[i] * t[i];
        return s;
      },
      theta);
  CHECK(res.value == 5.0);
  for (double g : res.gradient) CHECK(g == 2.0);
}

namespace {

// Random MLP loss used by the finite-difference checks below.
TapeProgram net_loss_program(const ArchSpec& arch, const std::vector<double>& xs) {
  return [&arch, xs](Tape& tape, std::span<const Var> t) {
    BoundNet net;
    net.arch = &arch;
    net.tape = &tape;
    net.params.assign(t.begin(), t.end());
    net.dims.push_back(arch.fourier ? 2 * arch.fourier->num_features : arch.input_dim);
    for (int w : arch.hidden) net.dims.push_back(w);
    net.dims.push_back(1);
    Var loss = tape.constant(0.0);
    for (double x : xs) {
      const double z[1] = {x};
      const Var u = forward(net, std::span<const double>(z, 1));
      loss = loss + u * u;
    }
    return loss;
  };
}

std::vector<double> random_theta(const ArchSpec& arch, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<double> theta(static_cast<std::size_t>(param_count(arch)));
  for (double& t : theta) t = uniform_in(gen, -0.8, 0.8);
  return theta;
}

}  // namespace

TEST_CASE("grad: random relu2 net matches central differences") {
  ArchSpec arch;
  arch.input_dim = 1;
  arch.hidden = {16, 16};
  arch.activation = Activation::Relu2;
  const auto theta = random_theta(arch, 7);
  const std::vector<double> xs = {-0.9, -0.3, 0.2, 0.7};
  const double err = check_gradient(net_loss_program(arch, xs), theta, 1e-5);
  CHECK(err <= 1e-5);
}

TEST_CASE("grad: non-finite intermediate names the node kind") {
  const std::vector<double> theta{0.0};
  CHECK_THROWS_WITH_AS(
      grad([](Tape& tape, std::span<const Var> t) { return tape.constant(1.0) / t[0]; }, theta),
      doctest::Contains("div"), NumericError);
}

TEST_CASE("jet_eval: squares and products") {
  Tape tape;
  {
    const double x[1] = {3.0};
    const int tracked[1] = {0};
    const Jet j = jet_eval(
        tape, [](Tape&, std::span<const Jet> in) { return jet_mul(in[0], in[0]); }, x, tracked);
    CHECK(tape.value(j.v) == 9.0);
    CHECK(tape.value(j.dir(0)) == 6.0);
  }
  {
    const double x[2] = {2.0, 5.0};
    const int tracked[2] = {0, 1};
    const Jet j = jet_eval(
        tape, [](Tape&, std::span<const Jet> in) { return jet_mul(in[0], in[1]); }, x, tracked);
    CHECK(tape.value(j.v) == 10.0);
    CHECK(tape.value(j.dir(0)) == 5.0);
    CHECK(tape.value(j.dir(1)) == 2.0);
  }
}

TEST_CASE("jet_eval: random MLP spatial gradient matches finite differences") {
  ArchSpec arch;
  arch.input_dim = 2;
  arch.hidden = {8, 8};
  arch.activation = Activation::GeluApprox;
  const auto theta = random_theta(arch, 11);
  const int tracked[2] = {0, 1};
  const double h = 1e-6;
  for (double x0 : {-0.4, 0.3}) {
    for (double x1 : {-0.7, 0.6}) {
      double du[2];
      const double z[2] = {x0, x1};
      eval_jet(arch, theta, z, tracked, du);
      for (int d = 0; d < 2; ++d) {
        double zp[2] = {x0, x1}, zm[2] = {x0, x1};
        zp[d] += h;
        zm[d] -= h;
        const double fd = (eval(arch, theta, zp) - eval(arch, theta, zm)) / (2.0 * h);
        const double denom = std::max({std::abs(du[d]), std::abs(fd), 1e-12});
        CHECK(std::abs(du[d] - fd) / denom <= 1e-6);
      }
    }
  }
}

TEST_CASE("check_gradient: affine is exact, quadratic near exact") {
  const std::vector<double> theta{0.3, -1.2, 0.8};
  const auto affine = [](Tape& tape, std::span<const Var> t) {
    return tape.lin2(t[0], t[1], 2.0, -3.0) + t[2] * 0.5;
  };
  CHECK(check_gradient(affine, theta, 1e-4) <= 1e-10);

  const auto quadratic = [](Tape&, std::span<const Var> t) {
    return t[0] * t[0] + t[1] * t[2];
  };
  CHECK(check_gradient(quadratic, theta, 1e-5) <= 1e-9);
}

TEST_CASE("check_gradient: gelu net") {
  ArchSpec arch;
  arch.input_dim = 1;
  arch.hidden = {6, 5};
  arch.activation = Activation::GeluApprox;
  const auto theta = random_theta(arch, 23);
  const double err = check_gradient(net_loss_program(arch, {-0.5, 0.1, 0.8}), theta, 1e-6);
  CHECK(err <= 1e-5);
}

TEST_CASE("reverse-over-forward agrees with double finite differences") {
  ArchSpec arch;
  arch.input_dim = 1;
  arch.hidden = {5, 5};
  arch.activation = Activation::GeluApprox;
  const auto theta = random_theta(arch, 31);
  const double x0 = 0.37;

  // d/dtheta of du/dx via the tape
  const auto program = [&arch, x0](Tape& tape, std::span<const Var> t) {
    BoundNet net;
    net.arch = &arch;
    net.tape = &tape;
    net.params.assign(t.begin(), t.end());
    net.dims = {1, 5, 5, 1};
    const double z[1] = {x0};
    const int tracked[1] = {0};
    return forward_jet(net, std::span<const double>(z, 1), tracked).dir(0);
  };
  const auto ad = grad(program, theta);

  const double hx = 1e-4, ht = 1e-4;
  auto du_dx = [&](std::span<const double> th) {
    const double zp[1] = {x0 + hx}, zm[1] = {x0 - hx};
    return (eval(arch, th, zp) - eval(arch, th, zm)) / (2.0 * hx);
  };
  std::vector<double> bumped(theta.begin(), theta.end());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    bumped[i] = theta[i] + ht;
    const double fp = du_dx(bumped);
    bumped[i] = theta[i] - ht;
    const double fm = du_dx(bumped);
    bumped[i] = theta[i];
    const double fd = (fp - fm) / (2.0 * ht);
    const double denom = std::max({std::abs(ad.gradient[i]), std::abs(fd), 1e-12});
    CHECK(std::abs(ad.gradient[i] - fd) / denom <= 1e-4);
  }
}

TEST_CASE("linearity of gradients for power-of-two coefficients") {
  const std::vector<double> theta{0.7, -0.4, 1.3};
  const auto f = [](Tape& tape, std::span<const Var> t) {
    return sin(t[0]) * t[1] + exp(t[2] * 0.25);
  };
  const auto g = [](Tape&, std::span<const Var> t) { return t[0] * t[1] * t[2]; };
  const double a = 2.0, b = 0.5;
  const auto combined = [&](Tape& tape, std::span<const Var> t) {
    return tape.lin2(f(tape, t), g(tape, t), a, b);
  };
  const auto rf = grad(f, theta);
  const auto rg = grad(g, theta);
  const auto rc = grad(combined, theta);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    CHECK(rc.gradient[i] == a * rf.gradient[i] + b * rg.gradient[i]);
  }
}

TEST_CASE("activation triples are finite-difference consistent") {
  struct Triple {
    Activation act;
    const char* name;
  };
  for (const auto& [act, name] : {Triple{Activation::Relu2, "relu2"},
                                  Triple{Activation::GeluApprox, "gelu"},
                                  Triple{Activation::S2Relu, "s2relu"}}) {
    CAPTURE(name);
    const double h1 = 1e-4, h2 = 5e-5;
    for (int i = 0; i <= 600; ++i) {
      const double x = -3.0 + 6.0 * i / 600.0;
      if (act == Activation::Relu2 && std::abs(x) <= 1e-3) continue;
      if (act == Activation::S2Relu && (std::abs(x) <= 1e-3 || std::abs(x - 1.0) <= 1e-3)) continue;
      const double fd1 = (act_val(act, x + h1) - act_val(act, x - h1)) / (2.0 * h1);
      CHECK(std::abs(act_d1(act, x) - fd1) <= 1e-6);
      if (act == Activation::S2Relu && (std::abs(x) <= 2e-4 + h2 || std::abs(x - 1.0) <= h2)) continue;
      if (act == Activation::Relu2 && std::abs(x) <= h2 + 1e-9) continue;
      const double fd2 = (act_d1(act, x + h2) - act_d1(act, x - h2)) / (2.0 * h2);
      CHECK(std::abs(act_d2(act, x) - fd2) <= 1e-6);
    }
  }
}

TEST_CASE("tape replay reproduces stored values exactly") {
  Tape tape;
  ArchSpec arch;
  arch.input_dim = 2;
  arch.hidden = {6, 6};
  arch.activation = Activation::S2Relu;
  arch.fourier = FourierSpec{3, 1.0};
  const auto theta = init_params(arch, 5);
  const BoundNet net = bind_net(tape, arch, theta);
  const double z[2] = {0.3, -0.4};
  const int tracked[1] = {1};
  const Jet j = forward_jet(net, std::span<const double>(z, 2), tracked);
  const Var density = tape.pow_nn(tape.mul(j.dir(0), j.dir(0)), 1.5) + abs(j.v);
  (void)density;
  CHECK(tape.replay_mismatch() == -1);
}

TEST_CASE("tape value equals plain evaluation bit for bit") {
  ArchSpec arch;
  arch.input_dim = 2;
  arch.hidden = {7, 5};
  arch.activation = Activation::GeluApprox;
  arch.fourier = FourierSpec{4, 0.7};
  const auto theta = init_params(arch, 42);
  const int tracked[1] = {1};
  for (double x0 : {1.1, 2.4}) {
    for (double x1 : {-0.6, 0.2, 0.9}) {
      Tape tape;
      const BoundNet net = bind_net(tape, arch, theta);
      const double z[2] = {x0, x1};
      const Jet j = forward_jet(net, std::span<const double>(z, 2), tracked);
      double du[1];
      const double u = eval_jet(arch, theta, z, tracked, du);
      CHECK(tape.value(j.v) == u);
      CHECK(tape.value(j.dir(0)) == du[0]);
    }
  }
}

TEST_CASE("rewind keeps parameter leaves intact") {
  Tape tape;
  const Var a = tape.leaf(2.0);
  const Var b = tape.leaf(5.0);
  const Tape::Mark mark = tape.mark();
  for (int rep = 0; rep < 3; ++rep) {
    const Var c = a * b + tape.constant(static_cast<double>(rep));
    tape.reverse(c, mark.nodes);
    tape.rewind(mark);
  }
  // three accumulated reverse passes of d(ab)/da = b etc.
  CHECK(tape.adjoint(a) == 15.0);
  CHECK(tape.adjoint(b) == 6.0);
}
