#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "deepritz/network.hpp"
#include "deepritz/rng.hpp"

using namespace deepritz;

namespace {

ArchSpec make_arch(int input_dim, std::vector<int> hidden, Activation act,
                   std::optional<FourierSpec> fourier = {}) {
  ArchSpec arch;
  arch.input_dim = input_dim;
  arch.hidden = std::move(hidden);
  arch.activation = act;
  arch.fourier = fourier;
  return arch;
}

}  // namespace

TEST_CASE("param_count reproduces the reference layouts") {
  CHECK(param_count(make_arch(2, {16, 16, 16, 16}, Activation::S2Relu)) == 881);
  CHECK(param_count(make_arch(7, {32, 32, 32, 32}, Activation::S2Relu)) == 3457);
  CHECK(param_count(make_arch(2, {16, 16, 16, 16}, Activation::GeluApprox,
                              FourierSpec{16, 1.0})) == 1393);
}

TEST_CASE("init_params: deterministic in the seed") {
  const ArchSpec arch = make_arch(2, {8, 8}, Activation::Relu2, FourierSpec{4, 2.0});
  const auto a = init_params(arch, 123);
  const auto b = init_params(arch, 123);
  const auto c = init_params(arch, 124);
  CHECK(a == b);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i] != c[i];
  CHECK(differs);
}

TEST_CASE("init_params: biases zero, embedding scale matches sigma") {
  const double sigma = 0.35;
  const ArchSpec arch = make_arch(1, {4}, Activation::Relu2, FourierSpec{4096, sigma});
  const auto theta = init_params(arch, 9);
  const std::size_t nb = 4096;
  double mean = 0.0;
  for (std::size_t i = 0; i < nb; ++i) mean += theta[i];
  mean /= static_cast<double>(nb);
  double var = 0.0;
  for (std::size_t i = 0; i < nb; ++i) var += (theta[i] - mean) * (theta[i] - mean);
  var /= static_cast<double>(nb - 1);
  CHECK(std::abs(std::sqrt(var) - sigma) <= 0.05 * sigma);
  // biases of the first affine layer sit at the end of [B, A1, b1]
  const std::size_t b1 = nb + 2 * nb * 4;
  for (std::size_t i = 0; i < 4; ++i) CHECK(theta[b1 + i] == 0.0);
}

TEST_CASE("param_count equals init_params length for random architectures") {
  std::mt19937_64 gen(77);
  for (int rep = 0; rep < 20; ++rep) {
    ArchSpec arch;
    arch.input_dim = 1 + static_cast<int>(gen() % 5);
    const int layers = 1 + static_cast<int>(gen() % 3);
    for (int l = 0; l < layers; ++l) arch.hidden.push_back(1 + static_cast<int>(gen() % 9));
    arch.activation = static_cast<Activation>(gen() % 3);
    if (gen() % 2) arch.fourier = FourierSpec{1 + static_cast<int>(gen() % 6), 1.0};
    CHECK(static_cast<std::int64_t>(init_params(arch, rep).size()) == param_count(arch));
  }
}

TEST_CASE("forward: tiny relu2 chain") {
  const ArchSpec arch = make_arch(1, {1}, Activation::Relu2);
  const std::vector<double> theta{1.0, 0.0, 1.0, 0.0};  // A1, b1, A2, b2
  const double zp[1] = {2.0};
  CHECK(eval(arch, theta, zp) == 4.0);
  const double zm[1] = {-1.0};
  CHECK(eval(arch, theta, zm) == 0.0);

  Tape tape;
  const Var u = forward(tape, arch, theta, zp);
  CHECK(tape.value(u) == 4.0);
}

TEST_CASE("forward: gelu at zero input and zero biases vanishes") {
  const ArchSpec arch = make_arch(1, {3, 3}, Activation::GeluApprox);
  auto theta = init_params(arch, 3);
  const double z[1] = {0.0};
  CHECK(eval(arch, theta, z) == 0.0);
}

TEST_CASE("forward_jet: chain rule through relu2 and constant nets") {
  const ArchSpec arch = make_arch(1, {1}, Activation::Relu2);
  const std::vector<double> theta{1.0, 0.0, 1.0, 0.0};
  const double z[1] = {2.0};
  const int tracked[1] = {0};
  double du[1];
  CHECK(eval_jet(arch, theta, z, tracked, du) == 4.0);
  CHECK(du[0] == 4.0);  // 2*max(0,2)*1

  const std::vector<double> zeros(theta.size(), 0.0);
  CHECK(eval_jet(arch, zeros, z, tracked, du) == 0.0);
  CHECK(du[0] == 0.0);
}

TEST_CASE("apply_lift: interval endpoints and identity") {
  LiftSpec prod;
  prod.kind = LiftSpec::Kind::Product1d;
  prod.a = -1.0;
  prod.b = 1.0;
  const double at_center[1] = {0.0};
  CHECK(lift_eval(prod, at_center, 0).eta == 1.0);
  const double at_left[1] = {-1.0};
  CHECK(lift_eval(prod, at_left, 0).eta == 0.0);
  const double at_right[1] = {1.0};
  CHECK(lift_eval(prod, at_right, 0).eta == 0.0);
  CHECK(apply_lift(prod, at_center, 0, 2.5) == 2.5);

  LiftSpec fam;
  fam.kind = LiftSpec::Kind::IntervalFamily;
  for (double p : {1.1, 1.7}) {
    const double zl[2] = {p, -p};
    const double zr[2] = {p, p};
    CHECK(apply_lift(fam, zl, 1, 3.0) == 0.0);
    CHECK(apply_lift(fam, zr, 1, 3.0) == 0.0);
  }

  LiftSpec none;
  const double z[1] = {0.3};
  CHECK(apply_lift(none, z, 0, 7.0) == 7.0);
}

TEST_CASE("lifted nets vanish on sampled boundary points") {
  ArchSpec arch = make_arch(2, {6, 6}, Activation::GeluApprox);
  arch.lift.kind = LiftSpec::Kind::IntervalFamily;
  const auto theta = init_params(arch, 17);
  for (double p : {1.0, 1.25, 1.5, 1.75, 2.0}) {
    for (double sgn : {-1.0, 1.0}) {
      const double z[2] = {p, sgn * p};
      const double u = eval(arch, theta, z);
      CHECK(std::abs(apply_lift(arch.lift, z, 1, u)) <= 1e-15);
    }
  }
}

TEST_CASE("s2relu vanishes outside the unit interval, gelu is asymptotically linear") {
  CHECK(s2relu_val(-0.5) == 0.0);
  CHECK(s2relu_val(1.5) == 0.0);
  CHECK(gelu_val(10.0) / 10.0 >= 0.999);
  CHECK(gelu_val(10.0) / 10.0 <= 1.0001);
}

TEST_CASE("fourier layout: first affine layer consumes 2m features") {
  const ArchSpec arch = make_arch(3, {5}, Activation::Relu2, FourierSpec{4, 1.0});
  // B: 4x3, layer1: 5x8 + 5, layer2: 1x5 + 1
  CHECK(param_count(arch) == 12 + 45 + 6);
}
