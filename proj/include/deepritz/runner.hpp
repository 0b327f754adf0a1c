#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "deepritz/runconfig.hpp"

namespace deepritz {

// Executes a configured run and writes manifest.json, loss.csv, errors.csv,
// slices.csv and checkpoints (or the verification-suite artifacts) into the
// output directory. Throws ConfigError / NumericError on failure.
void run_experiment(const RunConfig& cfg, const std::string& out_dir);

// Merges the manifests of finished runs into one aggregate CSV table.
// Directories without a manifest are skipped with a warning on `warn`.
void report_runs(const std::vector<std::string>& dirs, std::ostream& out, std::ostream& warn);

std::string format_g17(double v);

inline constexpr const char* kLibraryVersion = "deepritz 0.1.0";

}  // namespace deepritz
