#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepritz/energy.hpp"
#include "deepritz/quadrature.hpp"
#include "deepritz/trainer.hpp"

namespace deepritz {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// How to (re)build the interior quadrature; kept alongside the built set so
// re-sampling schedules can draw fresh parameter points per epoch.
struct QuadRecipe {
  enum class Type { Tensor, VariableDomain, RandomParameter };
  Type type = Type::Tensor;
  std::vector<Axis> axes;      // Tensor
  Axis p_axis;                 // VariableDomain
  double n_x_scale = 0.0;      // VariableDomain: n_x(p) = round(n_x_scale * p)
  std::vector<Axis> p_box;     // RandomParameter
  std::int64_t n_p = 0;        // RandomParameter
  bool spatial_is_disk = false;
  double disk_radius = 1.0;
  std::int64_t disk_n = 1;
  std::vector<Axis> spatial_axes;

  QuadratureSet build(std::uint64_t seed_quad, std::uint64_t epoch) const;
  bool resamples() const { return type == Type::RandomParameter; }
};

struct ReportSpec {
  std::vector<double> slices;      // slice parameters for 1-parameter families
  std::int64_t n_slices = 8;       // random slices for the 5-parameter family
  std::int64_t slice_quad_n = 2000;
  std::int64_t eval_n = 401;       // slices.csv evaluation grid
};

struct SandwichCfg {
  double p = 2.0;
  std::int64_t n_grid = 4000;
  std::int64_t n_perturbations = 200;
  int modes = 4;
  double delta_min = 0.25;
  double delta_max = 1.0;
};

struct LemmasCfg {
  double p = 2.0;
  std::vector<int> dims = {1, 2, 3};
  std::int64_t n_samples = 100000;
  int n_tau = 32;
};

struct PenaltyRateCfg {
  double p = 2.0;
  std::vector<double> lambdas = {1.0, 10.0, 100.0, 1000.0};
  int n = 400;
};

struct FdOracleCfg {
  double p = 2.0;
  std::vector<int> ns = {50, 100, 200, 400};
  std::string bc = "dirichlet0";
  double lambda = 10.0;
};

struct RunConfig {
  std::string experiment;  // vrhs vexp vdom mixed7d sandwich lemmas penalty_rate fd_oracle
  std::string output = "run_out";
  std::uint64_t seed_init = 1;
  std::uint64_t seed_quad = 2;
  bool reproducible = false;

  bool is_training() const {
    return experiment == "vrhs" || experiment == "vexp" || experiment == "vdom" ||
           experiment == "mixed7d";
  }

  ProblemSpec problem;  // interior quadrature built for epoch 0
  QuadRecipe interior_recipe;
  ArchSpec arch;
  Schedule schedule;
  ReportSpec report;

  SandwichCfg sandwich;
  LemmasCfg lemmas;
  PenaltyRateCfg penalty_rate;
  FdOracleCfg fd_oracle;

  nlohmann::json raw;  // canonical echo for the manifest
};

// Strict parse: unknown keys anywhere are an error naming the key path.
RunConfig parse_config(const nlohmann::json& j);

// Loads a config file; a manifest.json (with its embedded "config" object)
// re-parses to the identical run.
RunConfig load_config_file(const std::string& path);

std::string config_digest(const nlohmann::json& j);

}  // namespace deepritz
