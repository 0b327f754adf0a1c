#pragma once

#include <cmath>

namespace deepritz {

// Scalar activation triples (value, first and second derivative). The
// triple kernels evaluate the shared transcendental once; the one-argument
// wrappers below go through the same kernels, so every path produces
// bit-identical values.

struct ActTriple {
  double g = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
};

inline ActTriple relu2_triple(double x) {
  if (x > 0.0) return {x * x, 2.0 * x, 2.0};
  return {0.0, 0.0, 0.0};
}

namespace detail {
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;
}  // namespace detail

inline ActTriple gelu_triple(double x) {
  const double s = detail::kGeluC * (x + detail::kGeluA * x * x * x);
  const double t = std::tanh(s);
  const double one_m_t2 = 1.0 - t * t;
  const double sp = detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * x * x);
  const double spp = 6.0 * detail::kGeluC * detail::kGeluA * x;
  ActTriple out;
  out.g = 0.5 * x * (1.0 + t);
  out.g1 = 0.5 * (1.0 + t) + 0.5 * x * one_m_t2 * sp;
  out.g2 = one_m_t2 * sp + 0.5 * x * one_m_t2 * (spp - 2.0 * t * sp * sp);
  return out;
}

// sin(2*pi*x) * max(x,0) * max(1-x,0); identically zero outside (0,1).
// The second derivative jumps at 0 and 1; both kinks use the outside value 0.
inline ActTriple s2relu_triple(double x) {
  if (x <= 0.0 || x >= 1.0) return {0.0, 0.0, 0.0};
  const double w = 2.0 * M_PI * x;
  const double sn = std::sin(w);
  const double cs = std::cos(w);
  const double q = x * (1.0 - x);
  const double q1 = 1.0 - 2.0 * x;
  ActTriple out;
  out.g = sn * q;
  out.g1 = 2.0 * M_PI * cs * q + sn * q1;
  out.g2 = -4.0 * M_PI * M_PI * sn * q + 4.0 * M_PI * cs * q1 - 2.0 * sn;
  return out;
}

inline double relu2_val(double x) { return relu2_triple(x).g; }
inline double relu2_d1(double x) { return relu2_triple(x).g1; }
inline double relu2_d2(double x) { return relu2_triple(x).g2; }
inline double gelu_val(double x) { return gelu_triple(x).g; }
inline double gelu_d1(double x) { return gelu_triple(x).g1; }
inline double gelu_d2(double x) { return gelu_triple(x).g2; }
inline double s2relu_val(double x) { return s2relu_triple(x).g; }
inline double s2relu_d1(double x) { return s2relu_triple(x).g1; }
inline double s2relu_d2(double x) { return s2relu_triple(x).g2; }

enum class Activation { Relu2, GeluApprox, S2Relu };

inline ActTriple act_triple(Activation a, double x) {
  switch (a) {
    case Activation::Relu2: return relu2_triple(x);
    case Activation::GeluApprox: return gelu_triple(x);
    default: return s2relu_triple(x);
  }
}

inline double act_val(Activation a, double x) { return act_triple(a, x).g; }
inline double act_d1(Activation a, double x) { return act_triple(a, x).g1; }
inline double act_d2(Activation a, double x) { return act_triple(a, x).g2; }

}  // namespace deepritz
