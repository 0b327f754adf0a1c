#include "deepritz/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace deepritz {

void adam_step(AdamState& state, std::vector<double>& theta, std::span<const double> g) {
  const std::size_t n = theta.size();
  if (g.size() != n) throw std::invalid_argument("adam_step: gradient shape mismatch");
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n) throw std::invalid_argument("adam_step: state shape mismatch");
  state.t += 1;
  const AdamHyper& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g[i];
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    theta[i] -= h.alpha * mhat / (std::sqrt(vhat) + h.eps);
  }
}

std::vector<double> lbfgs_direction(const std::deque<LbfgsPair>& history,
                                    std::span<const double> g) {
  const std::size_t n = g.size();
  std::vector<double> q(g.begin(), g.end());
  std::vector<double> alpha(history.size(), 0.0);
  std::vector<double> rho(history.size(), 0.0);
  std::vector<bool> usable(history.size(), false);

  double gamma = 1.0;
  for (std::size_t k = history.size(); k-- > 0;) {
    const auto& pair = history[k];
    double sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) sy += pair.s[i] * pair.y[i];
    if (!(sy > 0.0)) continue;  // curvature guard
    usable[k] = true;
    rho[k] = 1.0 / sy;
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) sq += pair.s[i] * q[i];
    alpha[k] = rho[k] * sq;
    for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * pair.y[i];
    double yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) yy += pair.y[i] * pair.y[i];
    gamma = sy / yy;
  }
  for (double& qi : q) qi *= gamma;
  for (std::size_t k = 0; k < history.size(); ++k) {
    if (!usable[k]) continue;
    const auto& pair = history[k];
    double yq = 0.0;
    for (std::size_t i = 0; i < n; ++i) yq += pair.y[i] * q[i];
    const double beta = rho[k] * yq;
    for (std::size_t i = 0; i < n; ++i) q[i] += (alpha[k] - beta) * pair.s[i];
  }
  for (double& qi : q) qi = -qi;

  double descent = 0.0;
  for (std::size_t i = 0; i < n; ++i) descent += q[i] * g[i];
  if (!(descent < 0.0)) {
    for (std::size_t i = 0; i < n; ++i) q[i] = -g[i];
  }
  return q;
}

namespace {

QuadratureSet spec_quadrature(const ProblemSpec& spec, const QuadratureSource& resampler,
                              std::uint64_t epoch) {
  if (resampler) return resampler(epoch);
  return spec.interior;
}

}  // namespace

TrainReport train(const ProblemSpec& spec, const ArchSpec& arch, const Schedule& schedule,
                  std::uint64_t seed_init, std::uint64_t seed_quad,
                  const QuadratureSource& resampler) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  report.seed_init = seed_init;
  report.seed_quad = seed_quad;

  ProblemSpec work = spec;
  work.interior = spec_quadrature(spec, resampler, 0);
  work.validate();
  report.quadrature_points = work.interior.n;

  std::vector<double> theta = init_params(arch, seed_init);
  report.checkpoints.push_back({0, theta});

  AdamState adam;
  adam.hyper = schedule.adam;
  std::uint64_t epoch = 0;

  auto record_checkpoint = [&](std::int64_t step) {
    if (report.checkpoints.empty() || report.checkpoints.back().step != step) {
      report.checkpoints.push_back({step, theta});
    }
  };

  for (std::int64_t step = 0; step < schedule.steps; ++step) {
    if (schedule.resample_every > 0 && step > 0 && step % schedule.resample_every == 0) {
      ++epoch;
      work.interior = spec_quadrature(spec, resampler, epoch);
      work.validate();
    }
    EnergyResult eg;
    try {
      eg = energy_value_grad(work, arch, theta, schedule.threads);
    } catch (const NumericError& err) {
      report.aborted = true;
      report.abort_reason = err.what();
      break;
    }
    if (!std::isfinite(eg.value)) {
      report.aborted = true;
      report.abort_reason = "non-finite loss at step " + std::to_string(step);
      break;
    }
    report.loss_history.push_back(eg.value);
    adam_step(adam, theta, eg.grad);
    const std::int64_t done = step + 1;
    if (schedule.checkpoint_every > 0 && done % schedule.checkpoint_every == 0) {
      record_checkpoint(done);
    }
  }

  if (!report.aborted && schedule.optimizer == Optimizer::AdamLbfgs && schedule.lbfgs_steps > 0) {
    std::deque<LbfgsPair> history;
    EnergyResult cur = energy_value_grad(work, arch, theta, schedule.threads);
    for (std::int64_t it = 0; it < schedule.lbfgs_steps; ++it) {
      const std::vector<double> dir = lbfgs_direction(history, cur.grad);
      double t = 1.0;
      std::vector<double> trial(theta.size());
      EnergyResult next;
      bool ok = false;
      double slope = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) slope += dir[i] * cur.grad[i];
      for (int ls = 0; ls < 40; ++ls) {
        for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] + t * dir[i];
        next = energy_value_grad(work, arch, trial, schedule.threads);
        if (std::isfinite(next.value) && next.value <= cur.value + 1e-4 * t * slope) {
          ok = true;
          break;
        }
        t *= 0.5;
      }
      if (!ok) break;
      LbfgsPair pair;
      pair.s.resize(theta.size());
      pair.y.resize(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) {
        pair.s[i] = trial[i] - theta[i];
        pair.y[i] = next.grad[i] - cur.grad[i];
      }
      history.push_back(std::move(pair));
      while (static_cast<std::int64_t>(history.size()) > schedule.lbfgs_history)
        history.pop_front();
      theta = trial;
      cur = next;
      report.loss_history.push_back(cur.value);
    }
  }

  if (!report.aborted) record_checkpoint(static_cast<std::int64_t>(report.loss_history.size()));
  report.theta = theta;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

std::string act_name(Activation a) {
  switch (a) {
    case Activation::Relu2: return "relu2";
    case Activation::GeluApprox: return "gelu";
    default: return "s2relu";
  }
}

}  // namespace

void save_checkpoint(const std::string& path_prefix, const ArchSpec& arch,
                     std::span<const double> theta, std::int64_t step) {
  {
    std::ofstream bin(path_prefix + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + path_prefix + ".bin");
    bin.write(reinterpret_cast<const char*>(theta.data()),
              static_cast<std::streamsize>(theta.size() * sizeof(double)));
  }
  nlohmann::json side;
  side["layout_version"] = 1;
  side["step"] = step;
  side["count"] = theta.size();
  side["arch"]["input_dim"] = arch.input_dim;
  side["arch"]["hidden"] = arch.hidden;
  side["arch"]["activation"] = act_name(arch.activation);
  if (arch.fourier) {
    side["arch"]["fourier"]["m"] = arch.fourier->num_features;
    side["arch"]["fourier"]["sigma"] = arch.fourier->sigma;
  }
  std::ofstream js(path_prefix + ".json");
  js << side.dump(2) << "\n";
}

std::vector<double> load_checkpoint(const std::string& path_prefix) {
  std::ifstream side(path_prefix + ".json");
  if (!side) throw std::runtime_error("load_checkpoint: missing sidecar " + path_prefix + ".json");
  nlohmann::json meta = nlohmann::json::parse(side);
  if (meta.at("layout_version").get<int>() != 1)
    throw std::runtime_error("load_checkpoint: unsupported layout version");
  const auto count = meta.at("count").get<std::size_t>();
  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: missing blob " + path_prefix + ".bin");
  std::vector<double> theta(count);
  bin.read(reinterpret_cast<char*>(theta.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(double)))
    throw std::runtime_error("load_checkpoint: truncated blob " + path_prefix + ".bin");
  return theta;
}

}  // namespace deepritz
