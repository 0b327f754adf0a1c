#include <cstring>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "deepritz/runner.hpp"

namespace {

int usage() {
  std::cerr << "usage:\n"
            << "  deepritz run <config.json> [--out DIR] [--seed N] [--reproducible]\n"
            << "  deepritz report <run-dir> [<run-dir> ...]\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace deepritz;
  if (argc < 2) return usage();
  const std::string cmd = argv[1];

  try {
    if (cmd == "run") {
      if (argc < 3) return usage();
      const std::string config_path = argv[2];
      std::string out_override;
      std::optional<std::uint64_t> seed_override;
      bool reproducible = false;
      for (int i = 3; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--out" && i + 1 < argc) {
          out_override = argv[++i];
        } else if (arg == "--seed" && i + 1 < argc) {
          seed_override = std::stoull(argv[++i]);
        } else if (arg == "--reproducible") {
          reproducible = true;
        } else {
          std::cerr << "unknown argument: " << arg << "\n";
          return usage();
        }
      }

      RunConfig cfg = load_config_file(config_path);
      if (seed_override) {
        cfg.seed_init = *seed_override;
        cfg.raw["seeds"]["init"] = *seed_override;
      }
      if (reproducible) {
        cfg.reproducible = true;
        cfg.raw["reproducible"] = true;
      }
      if (!out_override.empty()) {
        cfg.output = out_override;
        cfg.raw["output"] = out_override;
      }
      run_experiment(cfg, cfg.output);
      return 0;
    }
    if (cmd == "report") {
      if (argc < 3) return usage();
      std::vector<std::string> dirs;
      for (int i = 2; i < argc; ++i) dirs.emplace_back(argv[i]);
      report_runs(dirs, std::cout, std::cerr);
      return 0;
    }
    std::cerr << "unknown command: " << cmd << "\n";
    return usage();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
