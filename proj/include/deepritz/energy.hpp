#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "deepritz/expression.hpp"
#include "deepritz/network.hpp"
#include "deepritz/quadrature.hpp"
#include "deepritz/tape.hpp"

namespace deepritz {

// One member of the energy family: for each parameter slice,
//   E(v) = (1/p) int |grad v|^p - int f v            (all variants)
//        + (lambda/p) int_bnd |v|^p                  (Penalty)
//        + (1/2) int |v|^2                           (MixedMass)
// integrated against the interior quadrature over parameter x space.
struct ProblemSpec {
  enum class Variant { FixedP, Penalty, VariableRHS, VariableExponent, VariableDomain, MixedMass };

  Variant variant = Variant::FixedP;
  int param_dim = 0;
  int spatial_dim = 1;
  double p = 2.0;        // fixed-exponent variants
  double lambda = 0.0;   // Penalty
  Expr p_of;             // VariableExponent / MixedMass: exponent map over parameters
  double p_min = 1.0;    // VariableExponent bounds (exclusive lower bound 1)
  double p_max = 0.0;
  Expr rhs;              // f(params, x)
  LiftSpec lift;
  QuadratureSet interior;
  std::optional<QuadratureSet> boundary;

  bool exponent_varies() const {
    return variant == Variant::VariableExponent || variant == Variant::MixedMass;
  }
  bool has_mass_term() const { return variant == Variant::MixedMass; }

  double exponent_at(std::span<const double> pcoords) const {
    return exponent_varies() ? p_of.eval(pcoords, {}) : p;
  }

  // Checks the variant invariants: Penalty requires a boundary set, the
  // others forbid it; a variable exponent stays within (1, inf) bounds on
  // the sampled parameter points.
  void validate() const;
};

// Density at one point: (1/p)(|gradu|^2)^(p/2) - f u (+ u^2/2 for MixedMass),
// with the p/2 power hard-zeroed at the origin.
Var integrand(Tape& tape, const ProblemSpec& spec, std::span<const double> pcoords,
              std::span<const double> x, Var u, std::span<const Var> gradu);

// Quadrature energy as a tape value: weight * sum of lifted-network
// integrands, plus the boundary penalty term when configured. Throws
// NumericError naming the offending point if a point's density is
// non-finite.
Var energy(Tape& tape, const ProblemSpec& spec, const ArchSpec& arch,
           std::span<const double> theta);

// Same, over a network whose parameter leaves already live on the tape.
Var energy_of_net(Tape& tape, const ProblemSpec& spec, const BoundNet& net);

// Per-parameter energy of the network slice on a spatial-only quadrature.
double energy_slice(const ProblemSpec& spec, const ArchSpec& arch, std::span<const double> theta,
                    std::span<const double> pcoords, const QuadratureSet& spatial_quad);

struct EnergyResult {
  double value = 0.0;
  std::vector<double> grad;
};

// Fused value+gradient evaluation: points are processed on short per-point
// sub-tapes and accumulated in fixed 1024-point chunks, so the result is
// identical for any thread count. The value matches energy() bit-for-bit.
EnergyResult energy_value_grad(const ProblemSpec& spec, const ArchSpec& arch,
                               std::span<const double> theta, int threads = 1);

// Energy of an explicitly given 1-D field (value, derivative) at fixed
// exponent; used to evaluate closed-form candidates on the same quadrature
// as the trained models.
double field_energy_1d(double p, const QuadratureSet& interior,
                       const std::function<double(double)>& f,
                       const std::function<std::pair<double, double>(double)>& field,
                       const QuadratureSet* bnd = nullptr, double lambda = 0.0);

}  // namespace deepritz
