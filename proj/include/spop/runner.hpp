// Experiment dispatch: runs a validated config, writes CSV/JSON artifacts
// and a manifest (config hash, seed, version, wall time, per-module
// diagnostics, content hash per output file).
#pragma once

#include <string>
#include <vector>

#include "spop/config.hpp"

namespace spop {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 2 runtime error, 3 budget exceeded (partial)
  bool partial = false;
  std::string error;
  std::vector<std::string> files;  // written artifacts, manifest last
};

// seed_override/replica_override < 0 keep the config values; jobs > 0 pins
// the OpenMP thread count (results do not depend on it).
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                          std::int64_t seed_override = -1, std::int64_t replica_override = -1,
                          int jobs = 0);

}  // namespace spop
