// Experiment configuration: JSON parsing with exhaustive validation (all
// errors reported, unknown keys rejected), canonical re-serialization with a
// stable hash, and the run manifest.
//
// Every randomized run is fully determined by (config, master seed): replica
// streams are derived by counter, so results do not depend on the number of
// worker threads.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spop/cannings.hpp"
#include "spop/dynamics.hpp"
#include "spop/fss.hpp"
#include "spop/geometry.hpp"
#include "spop/renorm.hpp"

namespace spop {

struct ConfigError : std::runtime_error {
  explicit ConfigError(std::vector<std::string> errs)
      : std::runtime_error(errs.empty() ? "invalid config" : join(errs)), errors(std::move(errs)) {}
  std::vector<std::string> errors;

 private:
  static std::string join(const std::vector<std::string>& errs) {
    std::string s = "invalid config:";
    for (const auto& e : errs) s += "\n  - " + e;
    return s;
  }
};

struct DiffusionRunConfig {
  FvParams fv;
  std::vector<double> theta;          // initial simplex point
  std::optional<SeedbankParams> seedbank;  // two-type seedbank run when set
  double T = 1.0;
  std::vector<double> record_times;
  bool per_site_output = false;       // sites mode vs aggregated moments
};

struct CanningsRunConfig {
  int M = 10;
  CanningsRates rates;
  double T = 1.0;
  double init_theta = 0.5;
  int sample_n = 0;  // 0 = no genealogy sample output
};

struct MckeanVlasovConfig {
  McKeanVlasovParams params;
  std::vector<double> theta;
  std::vector<double> sample_times;
};

struct InteractionChainConfig {
  ChainParams params;
  double theta = 0.5;
  int j = 0;
  ChainEngine engine = ChainEngine::BetaEquilibrium;
  ChainEngineSettings settings;
};

struct DichotomyCase {
  std::optional<GeometricFamily> family;
  std::optional<RenormSequences> sequences;
};

struct SeedbankTailConfig {
  SeedbankTailParams tail;
  std::vector<double> t_grid;
  std::uint64_t samples = 0;
};

struct SeedbankRegimeConfig {
  SeedbankTailParams tail;
  WalkFamily walk;
};

struct GenealogyStatsConfig {
  std::string input_path;
  bool transform = false;
  bool compute_tmrca = true;
  bool mean_distance = true;
  std::vector<double> h_values;
};

struct ExperimentConfig {
  std::string kind;
  std::uint64_t seed = 1;
  std::uint64_t replicas = 1;
  std::uint64_t max_site_steps = 1'000'000'000'000ULL;
  std::uint64_t max_events = 2'000'000'000ULL;

  std::optional<GeographySpec> geometry;
  std::optional<DiffusionRunConfig> diffusion;
  std::optional<CanningsRunConfig> cannings;
  std::optional<MckeanVlasovConfig> mckean_vlasov;
  std::optional<InteractionChainConfig> chain;
  std::vector<DichotomyCase> dichotomy_cases;
  std::optional<SeedbankTailConfig> seedbank_tail;
  std::optional<SeedbankRegimeConfig> seedbank_regime;
  std::optional<FssExperiment> fss;
  std::optional<GenealogyStatsConfig> genealogy_stats;

  nlohmann::json canonical;  // defaults filled, keys sorted on dump
  std::string canonical_text() const { return canonical.dump(2); }
  std::uint64_t config_hash() const;
};

ExperimentConfig parse_config(const std::string& text);

// Human-readable schema summary for `describe <kind>`.
std::string describe_kind(const std::string& kind);
std::vector<std::string> known_kinds();

}  // namespace spop
