#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace deepritz {

// mt19937_64 is fully specified by the standard; the distributions below are
// spelled out here because std:: distributions are implementation-defined
// and would break cross-platform reproducibility of seeded runs.

inline double u01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double uniform_in(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * u01(g);
}

inline double normal(std::mt19937_64& g, double sigma) {
  const double u1 = 1.0 - u01(g);  // (0, 1]
  const double u2 = u01(g);
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Derives an independent stream seed, used when re-sampling quadrature
// points across epochs.
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace deepritz
