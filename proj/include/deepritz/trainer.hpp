#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "deepritz/energy.hpp"
#include "deepritz/network.hpp"

namespace deepritz {

struct AdamHyper {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t t = 0;
  std::vector<double> m;
  std::vector<double> v;
  AdamHyper hyper;
};

// Bias-corrected update: theta -= alpha * m_hat / (sqrt(v_hat) + eps).
void adam_step(AdamState& state, std::vector<double>& theta, std::span<const double> g);

struct LbfgsPair {
  std::vector<double> s;
  std::vector<double> y;
};

// Two-loop recursion over the stored pairs; pairs with s.y <= 0 are skipped
// and an empty history yields plain steepest descent.
std::vector<double> lbfgs_direction(const std::deque<LbfgsPair>& history,
                                    std::span<const double> g);

enum class Optimizer { Adam, AdamLbfgs };

struct Schedule {
  std::int64_t steps = 0;
  std::int64_t resample_every = 0;    // 0: fixed quadrature for the whole run
  std::int64_t checkpoint_every = 500;
  Optimizer optimizer = Optimizer::Adam;
  int threads = 1;
  AdamHyper adam;
  std::int64_t lbfgs_history = 10;    // AdamLbfgs: refinement window
  std::int64_t lbfgs_steps = 0;       // quasi-Newton steps appended after Adam
};

struct Checkpoint {
  std::int64_t step = 0;
  std::vector<double> theta;
};

struct TrainReport {
  std::vector<double> loss_history;  // loss evaluated at each executed step
  std::vector<Checkpoint> checkpoints;
  std::vector<double> theta;  // final parameters
  double wall_seconds = 0.0;
  std::uint64_t seed_init = 0;
  std::uint64_t seed_quad = 0;
  std::int64_t quadrature_points = 0;
  bool aborted = false;
  std::string abort_reason;
};

// Regenerates the interior quadrature when a schedule re-samples parameter
// points; the epoch index makes successive draws independent.
using QuadratureSource = std::function<QuadratureSet(std::uint64_t epoch)>;

// Gradient-descent training of the energy. Deterministic in the seeds; the
// accumulation scheme makes every evaluation independent of the thread
// count. A non-finite loss aborts with the last good checkpoint retained.
TrainReport train(const ProblemSpec& spec, const ArchSpec& arch, const Schedule& schedule,
                  std::uint64_t seed_init, std::uint64_t seed_quad,
                  const QuadratureSource& resampler = nullptr);

// Flat little-endian binary parameter blob plus a JSON sidecar describing
// the architecture and layout version.
void save_checkpoint(const std::string& path_prefix, const ArchSpec& arch,
                     std::span<const double> theta, std::int64_t step);
std::vector<double> load_checkpoint(const std::string& path_prefix);

}  // namespace deepritz
