#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "deepritz/jet.hpp"
#include "deepritz/tape.hpp"

namespace deepritz {

struct FourierSpec {
  int num_features = 0;  // m
  double sigma = 1.0;
};

// Multiplicative boundary weight. Product1d vanishes at both ends of a fixed
// interval and is scaled to 1 at the midpoint; IntervalFamily vanishes at
// x = +-p for the parameter-dependent interval (-p, p), with p read from the
// first input coordinate.
struct LiftSpec {
  enum class Kind { None, Product1d, IntervalFamily };
  Kind kind = Kind::None;
  double a = -1.0;
  double b = 1.0;
};

struct ArchSpec {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  Activation activation = Activation::Relu2;
  std::optional<FourierSpec> fourier;
  LiftSpec lift;
};

// Flat parameter layout: [Fourier B, row-major, if present] then per layer
// [A row-major, b]. With an embedding the first affine layer consumes the
// 2m features [cos(2*pi*B z), sin(2*pi*B z)].
std::int64_t param_count(const ArchSpec& arch);

// Glorot-uniform affine weights, zero biases, N(0, sigma^2) embedding rows;
// deterministic in the seed.
std::vector<double> init_params(const ArchSpec& arch, std::uint64_t seed);

// Network bound to one tape: parameter leaves are recorded once and shared
// by every subsequent forward pass on that tape. Scratch buffers keep the
// per-point recording loop allocation-free.
struct BoundNet {
  const ArchSpec* arch = nullptr;
  Tape* tape = nullptr;
  std::vector<Var> params;
  std::vector<int> dims;  // layer widths including embedding output and output
  mutable std::vector<Var> vbuf[2];
  mutable std::vector<Jet> jbuf[2];
  mutable std::vector<Var> zbuf;
};

BoundNet bind_net(Tape& tape, const ArchSpec& arch, std::span<const double> theta);

Var forward(const BoundNet& net, std::span<const double> z);
Jet forward_jet(const BoundNet& net, std::span<const double> z, std::span<const int> tracked);

// Overloads taking the input coordinates as existing tape nodes, so a point
// program can be recorded once and re-evaluated with patched inputs.
Var forward(const BoundNet& net, std::span<const Var> z);
Jet forward_jet(const BoundNet& net, std::span<const Var> z, std::span<const int> tracked);

// One-shot conveniences recording fresh leaves on the caller's tape.
Var forward(Tape& tape, const ArchSpec& arch, std::span<const double> theta,
            std::span<const double> z);
Jet forward_jet(Tape& tape, const ArchSpec& arch, std::span<const double> theta,
                std::span<const double> z, std::span<const int> tracked);

// Tape-free twins. They follow the exact arithmetic sequence of the tape
// versions, so values agree bit-for-bit.
double eval(const ArchSpec& arch, std::span<const double> theta, std::span<const double> z);
double eval_jet(const ArchSpec& arch, std::span<const double> theta, std::span<const double> z,
                std::span<const int> tracked, std::span<double> dz_out);

// Lift weight and its spatial derivatives at z; spatial coordinates start at
// z[spatial_offset]. deta holds d(eta)/dx_i for the spatial coordinates.
struct LiftEval {
  double eta = 1.0;
  double deta[2] = {0.0, 0.0};
};

LiftEval lift_eval(const LiftSpec& lift, std::span<const double> z, int spatial_offset);

// u |-> eta(z) * u.
Var apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, Var u);
Jet apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, const Jet& u);
double apply_lift(const LiftSpec& lift, std::span<const double> z, int spatial_offset, double u);

}  // namespace deepritz
