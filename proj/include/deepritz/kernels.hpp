#pragma once

#include <cmath>

namespace deepritz {

// Power kernels shared by the tape nodes and the plain-double paths.
// Both define the value (and the derivative where used) to be 0 at the
// origin, which removes the singularity of the p-Dirichlet density's
// second derivative there.

// x^q for x >= 0 with a hard zero branch at x = 0.
inline double pow_nn_val(double x, double q) {
  if (x == 0.0) return 0.0;
  return q == 1.0 ? x : std::pow(x, q);
}

inline double pow_nn_d1(double x, double q) {
  if (x == 0.0) return 0.0;
  return q == 1.0 ? 1.0 : q * std::pow(x, q - 1.0);
}

// |x|^q with 0 at x = 0; derivative uses sign(0) := 0.
inline double pow_abs_val(double x, double q) {
  if (x == 0.0) return 0.0;
  return std::pow(std::abs(x), q);
}

inline double pow_abs_d1(double x, double q) {
  if (x == 0.0) return 0.0;
  return q * std::pow(std::abs(x), q - 1.0) * (x > 0.0 ? 1.0 : -1.0);
}

}  // namespace deepritz
