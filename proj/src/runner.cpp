#include "deepritz/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "deepritz/metrics.hpp"
#include "deepritz/reference.hpp"
#include "deepritz/rng.hpp"

namespace deepritz {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
  return out;
}

Family family_of(const std::string& experiment) {
  if (experiment == "vrhs") return Family::Vrhs;
  if (experiment == "vexp") return Family::Vexp;
  return Family::Vdom;
}

double family_q(Family fam, const ProblemSpec& spec, std::span<const double> pc) {
  if (fam == Family::Vexp) return spec.exponent_at(pc);
  return pc.empty() ? spec.p : pc[0];
}

std::pair<double, double> slice_domain(const ProblemSpec& spec, double q) {
  if (spec.variant == ProblemSpec::Variant::VariableDomain ||
      spec.lift.kind == LiftSpec::Kind::IntervalFamily)
    return {-q, q};
  if (spec.lift.kind == LiftSpec::Kind::Product1d) return {spec.lift.a, spec.lift.b};
  return {-1.0, 1.0};
}

std::vector<double> default_slices(const RunConfig& cfg) {
  if (!cfg.report.slices.empty()) return cfg.report.slices;
  if (cfg.problem.param_dim == 0) return {};  // single anonymous slice
  if (cfg.experiment == "vdom") return {1.2, 1.4, 1.6, 1.8};
  return {2.0, 3.0, 4.0, 5.0};
}

void write_error_report(const fs::path& path, int param_dim, const ErrorReport& report) {
  std::ofstream out = open_out(path);
  for (int d = 0; d < param_dim; ++d) out << "p" << d << ",";
  out << "lp_abs,lp_rel,w1p_abs,w1p_rel,natural_sq\n";
  for (const SliceError& s : report.slices) {
    for (int d = 0; d < param_dim; ++d) out << format_g17(s.pcoords[static_cast<std::size_t>(d)]) << ",";
    out << format_g17(s.lp_abs) << "," << format_g17(s.lp_rel) << "," << format_g17(s.w1p_abs)
        << "," << format_g17(s.w1p_rel) << "," << format_g17(s.natural_sq) << "\n";
  }
}

json aggregates_json(const ErrorReport& report) {
  json a;
  a["lp_abs"] = report.lp_abs;
  a["lp_rel"] = report.lp_rel;
  a["w1p_abs"] = report.w1p_abs;
  a["w1p_rel"] = report.w1p_rel;
  a["natural_sq"] = report.natural_sq;
  a["rel_defined"] = report.rel_defined;
  return a;
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, json run_block) {
  run_block["library"] = kLibraryVersion;
  run_block["config_digest"] = config_digest(cfg.raw);
  run_block["seed_init"] = cfg.seed_init;
  run_block["seed_quad"] = cfg.seed_quad;
  run_block["reproducible"] = cfg.reproducible;
  json manifest;
  manifest["config"] = cfg.raw;
  manifest["run"] = std::move(run_block);
  std::ofstream out = open_out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------- training

void run_training(const RunConfig& cfg, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  QuadratureSource resampler;
  if (cfg.interior_recipe.resamples()) {
    const QuadRecipe recipe = cfg.interior_recipe;
    const std::uint64_t seed = cfg.seed_quad;
    resampler = [recipe, seed](std::uint64_t epoch) { return recipe.build(seed, epoch); };
  }
  const TrainReport train_report =
      train(cfg.problem, cfg.arch, cfg.schedule, cfg.seed_init, cfg.seed_quad, resampler);

  {
    std::ofstream loss = open_out(dir / "loss.csv");
    loss << "step,loss\n";
    for (std::size_t i = 0; i < train_report.loss_history.size(); ++i) {
      loss << i << "," << format_g17(train_report.loss_history[i]) << "\n";
    }
  }
  for (const Checkpoint& ck : train_report.checkpoints) {
    char name[32];
    std::snprintf(name, sizeof name, "ckpt_%06lld", static_cast<long long>(ck.step));
    save_checkpoint((dir / name).string(), cfg.arch, ck.theta, ck.step);
  }

  // Error report against the family reference (or, for the 5-parameter
  // family without a closed form, against the previous checkpoint's slices).
  ErrorReport errors;
  const std::vector<double>& theta = train_report.theta;
  if (cfg.experiment != "mixed7d") {
    const Family fam = family_of(cfg.experiment);
    const ProblemSpec& spec = cfg.problem;
    std::vector<std::vector<double>> slice_params;
    for (double q : default_slices(cfg)) slice_params.push_back({q});
    if (spec.param_dim == 0) slice_params.push_back({});
    std::vector<QuadratureSet> quads;
    for (const auto& pc : slice_params) {
      const double q = family_q(fam, spec, pc);
      const auto [lo, hi] = slice_domain(spec, q);
      const Axis ax{lo, hi, cfg.report.slice_quad_n};
      quads.push_back(tensor_grid(std::span<const Axis>(&ax, 1)));
    }
    FieldRef ref;
    ref.value = [fam, &spec](std::span<const double> pc, std::span<const double> x) {
      return exact_value(fam, family_q(fam, spec, pc), x[0]);
    };
    ref.gradient = [fam, &spec](std::span<const double> pc, std::span<const double> x,
                                std::span<double> g) {
      g[0] = exact_grad(fam, family_q(fam, spec, pc), x[0]);
    };
    errors = norm_errors(spec, cfg.arch, theta, ref, slice_params, quads);
  } else {
    const std::size_t n_ck = train_report.checkpoints.size();
    const std::vector<double>& theta_prev =
        n_ck >= 2 ? train_report.checkpoints[n_ck - 2].theta : train_report.checkpoints[0].theta;
    std::vector<std::vector<double>> slice_params;
    std::mt19937_64 gen(substream(cfg.seed_quad, 0x51ce));
    for (std::int64_t s = 0; s < cfg.report.n_slices; ++s) {
      std::vector<double> pc;
      for (const Axis& ax : cfg.interior_recipe.p_box) pc.push_back(uniform_in(gen, ax.lo, ax.hi));
      slice_params.push_back(std::move(pc));
    }
    std::vector<QuadratureSet> quads(slice_params.size(),
                                     disk_grid(cfg.interior_recipe.disk_radius,
                                               cfg.interior_recipe.disk_n));
    const ArchSpec arch = cfg.arch;
    FieldRef ref;
    ref.value = [arch, theta_prev](std::span<const double> pc, std::span<const double> x) {
      std::vector<double> z(pc.begin(), pc.end());
      z.insert(z.end(), x.begin(), x.end());
      return eval(arch, theta_prev, z);
    };
    ref.gradient = [arch, theta_prev](std::span<const double> pc, std::span<const double> x,
                                      std::span<double> g) {
      std::vector<double> z(pc.begin(), pc.end());
      z.insert(z.end(), x.begin(), x.end());
      const int base = static_cast<int>(pc.size());
      const int tracked[2] = {base, base + 1};
      eval_jet(arch, theta_prev, z, std::span<const int>(tracked, x.size()), g);
    };
    errors = norm_errors(cfg.problem, cfg.arch, theta, ref, slice_params, quads);
  }
  write_error_report(dir / "errors.csv", cfg.problem.param_dim, errors);

  // Pointwise slice traces on the configured evaluation grid.
  {
    std::ofstream out = open_out(dir / "slices.csv");
    const ProblemSpec& spec = cfg.problem;
    const auto sd = static_cast<std::size_t>(spec.spatial_dim);
    for (int d = 0; d < spec.param_dim; ++d) out << "p" << d << ",";
    for (std::size_t d = 0; d < sd; ++d) out << "x" << d << ",";
    out << "u_theta,u_star";
    for (std::size_t d = 0; d < sd; ++d) out << ",du" << d << "_theta";
    for (std::size_t d = 0; d < sd; ++d) out << ",du" << d << "_star";
    out << ",err_u,err_du\n";

    const bool has_ref = cfg.experiment != "mixed7d";
    const Family fam = has_ref ? family_of(cfg.experiment) : Family::Vrhs;
    std::vector<std::vector<double>> slice_params;
    if (cfg.experiment != "mixed7d") {
      for (double q : default_slices(cfg)) slice_params.push_back({q});
      if (spec.param_dim == 0) slice_params.push_back({});
    } else {
      std::mt19937_64 gen(substream(cfg.seed_quad, 0x51ce));
      for (std::int64_t s = 0; s < cfg.report.n_slices; ++s) {
        std::vector<double> pc;
        for (const Axis& ax : cfg.interior_recipe.p_box) pc.push_back(uniform_in(gen, ax.lo, ax.hi));
        slice_params.push_back(std::move(pc));
      }
    }
    std::vector<int> tracked(sd);
    for (std::size_t t = 0; t < sd; ++t) tracked[t] = spec.param_dim + static_cast<int>(t);
    std::vector<double> z(static_cast<std::size_t>(spec.param_dim) + sd);
    double du[2];
    for (const auto& pc : slice_params) {
      const double q = has_ref ? family_q(fam, spec, pc) : 0.0;
      const auto [lo, hi] = cfg.experiment == "mixed7d"
                                ? std::pair<double, double>{-cfg.interior_recipe.disk_radius,
                                                            cfg.interior_recipe.disk_radius}
                                : slice_domain(spec, q);
      const Axis ax{lo, hi, cfg.report.eval_n};
      for (std::int64_t i = 0; i < ax.n; ++i) {
        const double x0 = ax.lo + (static_cast<double>(i) + 0.5) * (ax.hi - ax.lo) /
                                      static_cast<double>(ax.n);
        for (int d = 0; d < spec.param_dim; ++d) z[static_cast<std::size_t>(d)] = pc[static_cast<std::size_t>(d)];
        z[static_cast<std::size_t>(spec.param_dim)] = x0;
        if (sd == 2) z[static_cast<std::size_t>(spec.param_dim) + 1] = 0.0;  // diameter trace
        double u = eval_jet(cfg.arch, theta, z, tracked, std::span<double>(du, sd));
        const LiftEval le = lift_eval(spec.lift, z, spec.param_dim);
        if (spec.lift.kind != LiftSpec::Kind::None) {
          for (std::size_t d = 0; d < sd; ++d) du[d] = le.eta * du[d] + le.deta[d] * u;
          u = le.eta * u;
        }
        double us = std::nan(""), dus[2] = {std::nan(""), std::nan("")};
        if (has_ref) {
          us = exact_value(fam, q, x0);
          dus[0] = exact_grad(fam, q, x0);
        }
        for (int d = 0; d < spec.param_dim; ++d) out << format_g17(pc[static_cast<std::size_t>(d)]) << ",";
        for (std::size_t d = 0; d < sd; ++d) out << format_g17(z[static_cast<std::size_t>(spec.param_dim) + d]) << ",";
        out << format_g17(u) << "," << format_g17(us);
        for (std::size_t d = 0; d < sd; ++d) out << "," << format_g17(du[d]);
        for (std::size_t d = 0; d < sd; ++d) out << "," << format_g17(dus[d]);
        double err_du = 0.0;
        for (std::size_t d = 0; d < sd; ++d) err_du += (du[d] - dus[d]) * (du[d] - dus[d]);
        out << "," << format_g17(u - us) << "," << format_g17(std::sqrt(err_du)) << "\n";
      }
    }
  }

  json run_block;
  run_block["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run_block["train_seconds"] = train_report.wall_seconds;
  run_block["quadrature_points"] = train_report.quadrature_points;
  run_block["steps_executed"] = train_report.loss_history.size();
  run_block["aborted"] = train_report.aborted;
  if (train_report.aborted) run_block["abort_reason"] = train_report.abort_reason;
  if (!train_report.loss_history.empty()) {
    run_block["final_loss"] = train_report.loss_history.back();
  }
  run_block["aggregates"] = aggregates_json(errors);
  write_manifest(dir, cfg, std::move(run_block));

  if (train_report.aborted) throw NumericError("training aborted: " + train_report.abort_reason);
}

// ----------------------------------------------------------- verification

void run_sandwich(const RunConfig& cfg, const fs::path& dir) {
  const SandwichCfg& sc = cfg.sandwich;
  const double p = sc.p;
  const Axis ax{-1.0, 1.0, sc.n_grid};
  const QuadratureSet quad = tensor_grid(std::span<const Axis>(&ax, 1));

  auto ustar = [p](double x) {
    return std::pair<double, double>{exact_value(Family::Vexp, p, x),
                                     exact_grad(Family::Vexp, p, x)};
  };
  auto one = [](double) { return 1.0; };
  const double e_star = field_energy_1d(p, quad, one, ustar);

  std::vector<double> gs(static_cast<std::size_t>(quad.n));
  std::vector<double> gv(static_cast<std::size_t>(quad.n));
  for (std::int64_t i = 0; i < quad.n; ++i) gs[static_cast<std::size_t>(i)] = ustar(quad.point(i)[0]).second;

  std::ofstream out = open_out(dir / "ratios.csv");
  out << "p,sample,delta,gap,rho_sq,ratio\n";
  std::mt19937_64 gen(cfg.seed_init);
  double rmin = 0.0, rmax = 0.0;
  bool first = true;
  for (std::int64_t s = 0; s < sc.n_perturbations; ++s) {
    std::vector<double> c(static_cast<std::size_t>(sc.modes));
    for (double& ck : c) ck = uniform_in(gen, -1.0, 1.0);
    const double delta = uniform_in(gen, sc.delta_min, sc.delta_max);
    auto w = [&](double x) {
      double v = 0.0, dv = 0.0;
      for (int k = 1; k <= sc.modes; ++k) {
        const double fk = 0.5 * k * M_PI;
        v += c[static_cast<std::size_t>(k - 1)] * std::sin(fk * (x + 1.0));
        dv += c[static_cast<std::size_t>(k - 1)] * fk * std::cos(fk * (x + 1.0));
      }
      return std::pair<double, double>{v, dv};
    };
    auto field = [&](double x) {
      const auto [u0, du0] = ustar(x);
      const auto [wv, dwv] = w(x);
      return std::pair<double, double>{u0 + delta * wv, du0 + delta * dwv};
    };
    const double e_v = field_energy_1d(p, quad, one, field);
    for (std::int64_t i = 0; i < quad.n; ++i) gv[static_cast<std::size_t>(i)] = field(quad.point(i)[0]).second;
    const double rho = natural_distance_sq(p, quad, gv, gs, 1);
    const double gap = e_v - e_star;
    const double ratio = gap / rho;
    if (first) {
      rmin = rmax = ratio;
      first = false;
    } else {
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
    }
    out << format_g17(p) << "," << s << "," << format_g17(delta) << "," << format_g17(gap) << ","
        << format_g17(rho) << "," << format_g17(ratio) << "\n";
  }
  json run_block;
  run_block["ratio_min"] = rmin;
  run_block["ratio_max"] = rmax;
  write_manifest(dir, cfg, std::move(run_block));
}

void run_lemmas(const RunConfig& cfg, const fs::path& dir) {
  const LemmasCfg& lc = cfg.lemmas;
  std::ofstream out = open_out(dir / "lemmas.csv");
  out << "p,dim,min_monotone,max_monotone,min_mean,max_mean,min_eta,max_eta\n";
  json detail;
  for (int dim : lc.dims) {
    const RatioEnvelope env =
        equivalence_ratios(lc.p, dim, lc.n_samples, substream(cfg.seed_init, static_cast<std::uint64_t>(dim)),
                           lc.n_tau);
    out << format_g17(lc.p) << "," << dim << "," << format_g17(env.min_monotone) << ","
        << format_g17(env.max_monotone) << "," << format_g17(env.min_mean) << ","
        << format_g17(env.max_mean) << "," << format_g17(env.min_eta) << ","
        << format_g17(env.max_eta) << "\n";
    json e;
    e["dim"] = dim;
    e["min_monotone"] = env.min_monotone;
    e["max_monotone"] = env.max_monotone;
    e["min_mean"] = env.min_mean;
    e["max_mean"] = env.max_mean;
    e["min_eta"] = env.min_eta;
    e["max_eta"] = env.max_eta;
    detail.push_back(e);
  }

  // Relation chain on random discrete gradient fields.
  const Axis ax{-1.0, 1.0, 1000};
  const QuadratureSet quad = tensor_grid(std::span<const Axis>(&ax, 1));
  std::mt19937_64 gen(cfg.seed_init);
  std::vector<double> gradv(static_cast<std::size_t>(quad.n));
  std::vector<double> gradw(static_cast<std::size_t>(quad.n));
  for (auto& g : gradv) g = uniform_in(gen, -1.0, 1.0);
  for (auto& g : gradw) g = uniform_in(gen, -1.0, 1.0);
  const RelationCheck rel = relation_check(lc.p, quad, gradv, gradw, 1);

  json run_block;
  run_block["envelopes"] = detail;
  run_block["relation"] = {{"lhs", rel.lhs},
                           {"mid", rel.mid},
                           {"rhs", rel.rhs},
                           {"c_empirical", rel.c_empirical},
                           {"holds", rel.holds}};
  write_manifest(dir, cfg, std::move(run_block));
}

void run_penalty_rate(const RunConfig& cfg, const fs::path& dir) {
  const PenaltyRateCfg& pc = cfg.penalty_rate;
  auto one = [](double) { return 1.0; };
  const auto rows = penalty_rate_study(pc.p, one, pc.lambdas, pc.n);
  std::ofstream out = open_out(dir / "rate.csv");
  out << "lambda,boundary_norm_p,natural_sq\n";
  std::vector<double> ls, bs;
  for (const auto& row : rows) {
    out << format_g17(row.lambda) << "," << format_g17(row.boundary_norm_p) << ","
        << format_g17(row.natural_sq) << "\n";
    ls.push_back(row.lambda);
    bs.push_back(row.boundary_norm_p);
  }
  json run_block;
  run_block["boundary_norm_slope"] = loglog_slope(ls, bs);
  write_manifest(dir, cfg, std::move(run_block));
}

void run_fd_oracle(const RunConfig& cfg, const fs::path& dir) {
  const FdOracleCfg& fc = cfg.fd_oracle;
  auto one = [](double) { return 1.0; };
  const FdBc bc = fc.bc == "penalty" ? FdBc::Penalty : FdBc::Dirichlet0;
  std::ofstream conv = open_out(dir / "convergence.csv");
  conv << "n,h,max_err,newton_iters\n";
  std::vector<double> hs, errs;
  for (int n : fc.ns) {
    const FDSolution sol = fd_solve_1d(fc.p, one, -1.0, 1.0, n, bc, fc.lambda);
    char name[32];
    std::snprintf(name, sizeof name, "solution_%05d.csv", n);
    std::ofstream sout = open_out(dir / name);
    sout << "x,u\n";
    for (std::size_t i = 0; i < sol.x.size(); ++i) {
      sout << format_g17(sol.x[i]) << "," << format_g17(sol.u[i]) << "\n";
    }
    double max_err = 0.0;
    const double shift = bc == FdBc::Penalty && fc.p == 2.0 ? 1.0 / fc.lambda : 0.0;
    for (int j = 0; j <= 4000; ++j) {
      const double x = -1.0 + 2.0 * j / 4000.0;
      const double ref = exact_value(Family::Vexp, fc.p, x) + shift;
      max_err = std::max(max_err, std::abs(sol.interp(x) - ref));
    }
    conv << n << "," << format_g17(sol.h) << "," << format_g17(max_err) << ","
         << sol.newton_iters << "\n";
    hs.push_back(sol.h);
    errs.push_back(max_err);
  }
  json run_block;
  if (hs.size() >= 2) run_block["observed_order"] = loglog_slope(hs, errs);
  write_manifest(dir, cfg, std::move(run_block));
}

}  // namespace

void run_experiment(const RunConfig& cfg, const std::string& out_dir) {
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  if (cfg.is_training()) {
    run_training(cfg, dir);
  } else if (cfg.experiment == "sandwich") {
    run_sandwich(cfg, dir);
  } else if (cfg.experiment == "lemmas") {
    run_lemmas(cfg, dir);
  } else if (cfg.experiment == "penalty_rate") {
    run_penalty_rate(cfg, dir);
  } else if (cfg.experiment == "fd_oracle") {
    run_fd_oracle(cfg, dir);
  } else {
    throw ConfigError("unknown experiment kind: " + cfg.experiment);
  }
}

void report_runs(const std::vector<std::string>& dirs, std::ostream& out, std::ostream& warn) {
  out << "experiment,config_digest,seed_init,seed_quad,steps,points,final_loss,"
         "lp_abs,lp_rel,w1p_abs,w1p_rel,natural_sq\n";
  for (const std::string& d : dirs) {
    const fs::path manifest_path = fs::path(d) / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) {
      warn << "report: skipping " << d << " (no manifest.json)\n";
      continue;
    }
    json manifest;
    try {
      manifest = json::parse(in);
    } catch (const json::exception& e) {
      warn << "report: skipping " << d << " (bad manifest: " << e.what() << ")\n";
      continue;
    }
    const json& run = manifest.value("run", json::object());
    const json& agg = run.value("aggregates", json::object());
    auto num = [](const json& j, const char* key) {
      return j.contains(key) && j.at(key).is_number() ? format_g17(j.at(key).get<double>())
                                                      : std::string("nan");
    };
    out << manifest.value("config", json::object()).value("experiment", "?") << ","
        << run.value("config_digest", "?") << "," << run.value("seed_init", 0ull) << ","
        << run.value("seed_quad", 0ull) << "," << run.value("steps_executed", 0ull) << ","
        << run.value("quadrature_points", 0ll) << "," << num(run, "final_loss") << ","
        << num(agg, "lp_abs") << "," << num(agg, "lp_rel") << "," << num(agg, "w1p_abs") << ","
        << num(agg, "w1p_rel") << "," << num(agg, "natural_sq") << "\n";
  }
}

}  // namespace deepritz
