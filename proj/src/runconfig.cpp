#include "deepritz/runconfig.hpp"

#include <fstream>
#include <set>

#include "deepritz/rng.hpp"

namespace deepritz {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("config: unknown key '" + path + "." + item.key() + "'");
    }
  }
}

template <typename T>
T get_req(const json& j, const std::string& path, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("config: missing key '" + path + "." + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + path + "." + key + "'");
  }
}

template <typename T>
T get_opt(const json& j, const std::string& path, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + path + "." + key + "'");
  }
}

Axis parse_axis(const json& j, const std::string& path) {
  check_keys(j, path, {"lo", "hi", "n"});
  Axis ax;
  ax.lo = get_req<double>(j, path, "lo");
  ax.hi = get_req<double>(j, path, "hi");
  ax.n = get_req<std::int64_t>(j, path, "n");
  return ax;
}

std::vector<Axis> parse_axes(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: '" + path + "' must be a nonempty array");
  std::vector<Axis> axes;
  for (std::size_t i = 0; i < j.size(); ++i) {
    axes.push_back(parse_axis(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return axes;
}

LiftSpec parse_lift(const json& j, const std::string& path) {
  check_keys(j, path, {"kind", "a", "b"});
  LiftSpec lift;
  const std::string kind = get_req<std::string>(j, path, "kind");
  if (kind == "none") {
    lift.kind = LiftSpec::Kind::None;
  } else if (kind == "product1d") {
    lift.kind = LiftSpec::Kind::Product1d;
    lift.a = get_req<double>(j, path, "a");
    lift.b = get_req<double>(j, path, "b");
    if (!(lift.a < lift.b)) throw ConfigError("config: '" + path + "' needs a < b");
  } else if (kind == "interval_family") {
    lift.kind = LiftSpec::Kind::IntervalFamily;
  } else {
    throw ConfigError("config: '" + path + ".kind' must be none|product1d|interval_family");
  }
  return lift;
}

QuadRecipe parse_interior(const json& j, const std::string& path) {
  QuadRecipe recipe;
  const std::string type = get_req<std::string>(j, path, "type");
  if (type == "tensor") {
    check_keys(j, path, {"type", "axes"});
    recipe.type = QuadRecipe::Type::Tensor;
    recipe.axes = parse_axes(j.at("axes"), path + ".axes");
  } else if (type == "variable_domain") {
    check_keys(j, path, {"type", "p_axis", "n_x_scale"});
    recipe.type = QuadRecipe::Type::VariableDomain;
    recipe.p_axis = parse_axis(j.at("p_axis"), path + ".p_axis");
    recipe.n_x_scale = get_req<double>(j, path, "n_x_scale");
    if (!(recipe.n_x_scale > 0.0))
      throw ConfigError("config: '" + path + ".n_x_scale' must be positive");
  } else if (type == "random_parameter") {
    check_keys(j, path, {"type", "p_box", "n_p", "spatial"});
    recipe.type = QuadRecipe::Type::RandomParameter;
    recipe.p_box = parse_axes(j.at("p_box"), path + ".p_box");
    recipe.n_p = get_req<std::int64_t>(j, path, "n_p");
    const json& sp = j.at("spatial");
    const std::string sp_type = get_req<std::string>(sp, path + ".spatial", "type");
    if (sp_type == "disk") {
      check_keys(sp, path + ".spatial", {"type", "radius", "n"});
      recipe.spatial_is_disk = true;
      recipe.disk_radius = get_req<double>(sp, path + ".spatial", "radius");
      recipe.disk_n = get_req<std::int64_t>(sp, path + ".spatial", "n");
    } else if (sp_type == "tensor") {
      check_keys(sp, path + ".spatial", {"type", "axes"});
      recipe.spatial_axes = parse_axes(sp.at("axes"), path + ".spatial.axes");
    } else {
      throw ConfigError("config: '" + path + ".spatial.type' must be disk|tensor");
    }
  } else {
    throw ConfigError("config: '" + path + ".type' must be tensor|variable_domain|random_parameter");
  }
  return recipe;
}

Activation parse_activation(const std::string& name, const std::string& path) {
  if (name == "relu2") return Activation::Relu2;
  if (name == "gelu") return Activation::GeluApprox;
  if (name == "s2relu") return Activation::S2Relu;
  throw ConfigError("config: '" + path + "' must be relu2|gelu|s2relu");
}

ArchSpec parse_arch(const json& j, const std::string& path) {
  check_keys(j, path, {"input_dim", "hidden", "activation", "fourier"});
  ArchSpec arch;
  arch.input_dim = get_req<int>(j, path, "input_dim");
  arch.hidden = get_req<std::vector<int>>(j, path, "hidden");
  arch.activation = parse_activation(get_req<std::string>(j, path, "activation"), path + ".activation");
  if (j.contains("fourier")) {
    check_keys(j.at("fourier"), path + ".fourier", {"m", "sigma"});
    FourierSpec fs;
    fs.num_features = get_req<int>(j.at("fourier"), path + ".fourier", "m");
    fs.sigma = get_req<double>(j.at("fourier"), path + ".fourier", "sigma");
    arch.fourier = fs;
  }
  return arch;
}

Schedule parse_schedule(const json& j, const std::string& path) {
  check_keys(j, path,
             {"steps", "resample_every", "checkpoint_every", "optimizer", "threads", "adam",
              "lbfgs_steps", "lbfgs_history"});
  Schedule s;
  s.steps = get_req<std::int64_t>(j, path, "steps");
  s.resample_every = get_opt<std::int64_t>(j, path, "resample_every", 0);
  s.checkpoint_every = get_opt<std::int64_t>(j, path, "checkpoint_every", 500);
  s.threads = get_opt<int>(j, path, "threads", 1);
  const std::string opt = get_opt<std::string>(j, path, "optimizer", "adam");
  if (opt == "adam") {
    s.optimizer = Optimizer::Adam;
  } else if (opt == "adam_lbfgs") {
    s.optimizer = Optimizer::AdamLbfgs;
  } else {
    throw ConfigError("config: '" + path + ".optimizer' must be adam|adam_lbfgs");
  }
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    check_keys(a, path + ".adam", {"alpha", "beta1", "beta2", "eps"});
    s.adam.alpha = get_opt<double>(a, path + ".adam", "alpha", s.adam.alpha);
    s.adam.beta1 = get_opt<double>(a, path + ".adam", "beta1", s.adam.beta1);
    s.adam.beta2 = get_opt<double>(a, path + ".adam", "beta2", s.adam.beta2);
    s.adam.eps = get_opt<double>(a, path + ".adam", "eps", s.adam.eps);
  }
  s.lbfgs_steps = get_opt<std::int64_t>(j, path, "lbfgs_steps", 0);
  s.lbfgs_history = get_opt<std::int64_t>(j, path, "lbfgs_history", 10);
  if (s.steps < 0 || s.threads < 1) throw ConfigError("config: bad schedule numbers");
  return s;
}

ProblemSpec parse_problem(const json& j, const std::string& path, QuadRecipe& recipe,
                          std::optional<QuadratureSet>& boundary) {
  check_keys(j, path,
             {"variant", "p", "lambda", "p_expr", "p_min", "p_max", "rhs", "lift", "param_dim",
              "spatial_dim", "quadrature"});
  ProblemSpec spec;
  const std::string variant = get_req<std::string>(j, path, "variant");
  spec.param_dim = get_req<int>(j, path, "param_dim");
  spec.spatial_dim = get_req<int>(j, path, "spatial_dim");

  auto need_p = [&] { spec.p = get_req<double>(j, path, "p"); };
  auto need_p_expr = [&] {
    const std::string expr = get_req<std::string>(j, path, "p_expr");
    try {
      spec.p_of = Expr::parse(expr, spec.param_dim, 0);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: bad p_expr: ") + e.what());
    }
    spec.p_min = get_req<double>(j, path, "p_min");
    spec.p_max = get_req<double>(j, path, "p_max");
  };

  if (variant == "fixed_p") {
    spec.variant = ProblemSpec::Variant::FixedP;
    need_p();
  } else if (variant == "penalty") {
    spec.variant = ProblemSpec::Variant::Penalty;
    need_p();
    spec.lambda = get_req<double>(j, path, "lambda");
  } else if (variant == "variable_rhs") {
    spec.variant = ProblemSpec::Variant::VariableRHS;
    need_p();
  } else if (variant == "variable_exponent") {
    spec.variant = ProblemSpec::Variant::VariableExponent;
    need_p_expr();
  } else if (variant == "variable_domain") {
    spec.variant = ProblemSpec::Variant::VariableDomain;
    need_p();
  } else if (variant == "mixed_mass") {
    spec.variant = ProblemSpec::Variant::MixedMass;
    need_p_expr();
  } else {
    throw ConfigError("config: '" + path + ".variant' unknown: " + variant);
  }

  const std::string rhs = get_req<std::string>(j, path, "rhs");
  try {
    spec.rhs = Expr::parse(rhs, spec.param_dim, spec.spatial_dim);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: bad rhs: ") + e.what());
  }
  spec.lift = j.contains("lift") ? parse_lift(j.at("lift"), path + ".lift") : LiftSpec{};

  const json& q = j.at("quadrature");
  check_keys(q, path + ".quadrature", {"interior", "boundary"});
  recipe = parse_interior(q.at("interior"), path + ".quadrature.interior");
  if (q.contains("boundary")) {
    const json& b = q.at("boundary");
    check_keys(b, path + ".quadrature.boundary", {"type", "a", "b"});
    if (get_req<std::string>(b, path + ".quadrature.boundary", "type") != "boundary1d")
      throw ConfigError("config: boundary quadrature type must be boundary1d");
    boundary = boundary_grid_1d(get_req<double>(b, path + ".quadrature.boundary", "a"),
                                get_req<double>(b, path + ".quadrature.boundary", "b"));
  }
  return spec;
}

}  // namespace

QuadratureSet QuadRecipe::build(std::uint64_t seed_quad, std::uint64_t epoch) const {
  switch (type) {
    case Type::Tensor: return tensor_grid(axes);
    case Type::VariableDomain: {
      const double scale = n_x_scale;
      return variable_domain_grid(p_axis, [scale](double p) { return scale * p; });
    }
    case Type::RandomParameter: {
      const QuadratureSet spatial =
          spatial_is_disk ? disk_grid(disk_radius, disk_n) : tensor_grid(spatial_axes);
      return random_parameter_grid(p_box, n_p, spatial, substream(seed_quad, epoch));
    }
  }
  throw ConfigError("config: unreachable quadrature type");
}

RunConfig parse_config(const nlohmann::json& j) {
  check_keys(j, "$",
             {"experiment", "output", "seeds", "reproducible", "problem", "arch", "schedule",
              "report", "sandwich", "lemmas", "penalty_rate", "fd_oracle"});
  RunConfig cfg;
  cfg.raw = j;
  cfg.experiment = get_req<std::string>(j, "$", "experiment");
  cfg.output = get_opt<std::string>(j, "$", "output", "run_out");
  cfg.reproducible = get_opt<bool>(j, "$", "reproducible", false);
  if (j.contains("seeds")) {
    check_keys(j.at("seeds"), "$.seeds", {"init", "quadrature"});
    cfg.seed_init = get_opt<std::uint64_t>(j.at("seeds"), "$.seeds", "init", 1);
    cfg.seed_quad = get_opt<std::uint64_t>(j.at("seeds"), "$.seeds", "quadrature", 2);
  }

  const std::set<std::string> kinds = {"vrhs", "vexp", "vdom",        "mixed7d",
                                       "sandwich", "lemmas", "penalty_rate", "fd_oracle"};
  if (!kinds.count(cfg.experiment))
    throw ConfigError("config: '$.experiment' unknown: " + cfg.experiment);

  if (cfg.is_training()) {
    if (!j.contains("problem") || !j.contains("arch") || !j.contains("schedule"))
      throw ConfigError("config: training runs need problem, arch and schedule");
    std::optional<QuadratureSet> boundary;
    cfg.problem = parse_problem(j.at("problem"), "$.problem", cfg.interior_recipe, boundary);
    cfg.problem.boundary = std::move(boundary);
    cfg.arch = parse_arch(j.at("arch"), "$.arch");
    cfg.arch.lift = cfg.problem.lift;
    cfg.schedule = parse_schedule(j.at("schedule"), "$.schedule");
    if (cfg.arch.input_dim != cfg.problem.param_dim + cfg.problem.spatial_dim)
      throw ConfigError("config: arch.input_dim must equal param_dim + spatial_dim");
    if (j.contains("report")) {
      const json& r = j.at("report");
      check_keys(r, "$.report", {"slices", "n_slices", "slice_quad_n", "eval_n"});
      cfg.report.slices = get_opt<std::vector<double>>(r, "$.report", "slices", {});
      cfg.report.n_slices = get_opt<std::int64_t>(r, "$.report", "n_slices", 8);
      cfg.report.slice_quad_n = get_opt<std::int64_t>(r, "$.report", "slice_quad_n", 2000);
      cfg.report.eval_n = get_opt<std::int64_t>(r, "$.report", "eval_n", 401);
    }
    cfg.problem.interior = cfg.interior_recipe.build(cfg.seed_quad, 0);
    try {
      cfg.problem.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  } else if (cfg.experiment == "sandwich") {
    if (!j.contains("sandwich")) throw ConfigError("config: sandwich block required");
    const json& s = j.at("sandwich");
    check_keys(s, "$.sandwich",
               {"p", "n_grid", "n_perturbations", "modes", "delta_min", "delta_max"});
    cfg.sandwich.p = get_req<double>(s, "$.sandwich", "p");
    cfg.sandwich.n_grid = get_opt<std::int64_t>(s, "$.sandwich", "n_grid", 4000);
    cfg.sandwich.n_perturbations = get_opt<std::int64_t>(s, "$.sandwich", "n_perturbations", 200);
    cfg.sandwich.modes = get_opt<int>(s, "$.sandwich", "modes", 4);
    cfg.sandwich.delta_min = get_opt<double>(s, "$.sandwich", "delta_min", 0.25);
    cfg.sandwich.delta_max = get_opt<double>(s, "$.sandwich", "delta_max", 1.0);
  } else if (cfg.experiment == "lemmas") {
    if (!j.contains("lemmas")) throw ConfigError("config: lemmas block required");
    const json& s = j.at("lemmas");
    check_keys(s, "$.lemmas", {"p", "dims", "n_samples", "n_tau"});
    cfg.lemmas.p = get_req<double>(s, "$.lemmas", "p");
    cfg.lemmas.dims = get_opt<std::vector<int>>(s, "$.lemmas", "dims", {1, 2, 3});
    cfg.lemmas.n_samples = get_opt<std::int64_t>(s, "$.lemmas", "n_samples", 100000);
    cfg.lemmas.n_tau = get_opt<int>(s, "$.lemmas", "n_tau", 32);
  } else if (cfg.experiment == "penalty_rate") {
    if (!j.contains("penalty_rate")) throw ConfigError("config: penalty_rate block required");
    const json& s = j.at("penalty_rate");
    check_keys(s, "$.penalty_rate", {"p", "lambdas", "n"});
    cfg.penalty_rate.p = get_req<double>(s, "$.penalty_rate", "p");
    cfg.penalty_rate.lambdas =
        get_opt<std::vector<double>>(s, "$.penalty_rate", "lambdas", {1.0, 10.0, 100.0, 1000.0});
    cfg.penalty_rate.n = get_opt<int>(s, "$.penalty_rate", "n", 400);
  } else if (cfg.experiment == "fd_oracle") {
    if (!j.contains("fd_oracle")) throw ConfigError("config: fd_oracle block required");
    const json& s = j.at("fd_oracle");
    check_keys(s, "$.fd_oracle", {"p", "ns", "bc", "lambda"});
    cfg.fd_oracle.p = get_req<double>(s, "$.fd_oracle", "p");
    cfg.fd_oracle.ns = get_opt<std::vector<int>>(s, "$.fd_oracle", "ns", {50, 100, 200, 400});
    cfg.fd_oracle.bc = get_opt<std::string>(s, "$.fd_oracle", "bc", "dirichlet0");
    cfg.fd_oracle.lambda = get_opt<double>(s, "$.fd_oracle", "lambda", 10.0);
    if (cfg.fd_oracle.bc != "dirichlet0" && cfg.fd_oracle.bc != "penalty")
      throw ConfigError("config: fd_oracle.bc must be dirichlet0|penalty");
  }
  return cfg;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse failure in " + path + ": " + e.what());
  }
  // A manifest embeds the effective config under "config".
  if (j.is_object() && j.contains("config") && j.contains("run")) {
    j = j.at("config");
  }
  return parse_config(j);
}

std::string config_digest(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace deepritz
