// Finite system scheme harness: simulate a ladder of system sizes to times
// t * beta(n) (beta(n) = number of sites), track the conserved statistic
// theta_hat, and compare its moment trajectory E[theta_hat(1-theta_hat)]
// against the macroscopic diffusion reference
//   E[Theta_t (1-Theta_t)] = theta_0 (1-theta_0) exp(-d* t),
// with d* = d (1 + d A_hat(0,0))^{-1} for lattice models, d* = 2cd/(2c+d)
// for the mean-field model, and the kappa = (1 + sum K_m)^{-2} volatility
// reduction for seedbank models.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spop/dynamics.hpp"
#include "spop/errors.hpp"
#include "spop/genealogy.hpp"
#include "spop/geometry.hpp"

namespace spop {

struct ValueWithError {
  double value = 0.0;
  double se = 0.0;
};

// d* = d / (1 + d * ahat); uncertainty propagated linearly from the Green
// estimate.
ValueWithError compute_dstar(double d, double ahat, double ahat_se = 0.0);
ValueWithError compute_dstar(double d, const GreenEstimate& green);

struct KappaResult {
  double value = 1.0;
  bool truncation_flagged = false;  // tail mass beyond tolerance
};
// kappa = (1 + sum K_m)^{-2}; flags a divergent-looking truncated sum.
KappaResult compute_kappa(std::span<const double> K_seq, double tail_tolerance = 1e-6);

struct FssModel {
  enum class Kind { MeanFieldFW, TorusFW, MeanFieldSeedbank } kind = Kind::MeanFieldFW;
  double c = 1.0;      // migration rate (mean-field attraction / torus total rate)
  double d = 1.0;      // resampling volatility rate (seedbank: b)
  double theta0 = 0.5;
  // TorusFW:
  int torus_dim = 2;
  std::vector<TorusStep> torus_steps;
  // MeanFieldSeedbank:
  std::vector<double> seed_e;
  std::vector<double> seed_K;
};

struct FssExperiment {
  FssModel model;
  std::vector<std::uint64_t> sizes;   // site-count ladder (torus: per-axis n)
  std::vector<double> t_grid;         // macroscopic times, starting at 0
  std::uint64_t replicas = 100;
  double dt = 2e-3;
  std::uint64_t max_site_steps = 1'000'000'000'000ULL;  // compute budget guard
  // Green-function horizon for the torus d*; defaults to beta(n_max).
  std::optional<double> green_horizon;
  std::uint64_t green_replicas = 4000;
};

struct FssLadderEntry {
  std::uint64_t n = 0;           // ladder parameter
  std::uint64_t sites = 0;       // beta(n)
  std::vector<double> moment;    // E[theta_hat (1 - theta_hat)] per grid time
  std::vector<double> moment_se;
  std::vector<double> mean;      // E[theta_hat]
  std::vector<double> mean_se;
  std::vector<double> zscore;    // against the reference curve
  double fitted_rate = 0.0;      // WLS decay rate of the moment
  double fitted_rate_se = 0.0;
};

struct FssReport {
  std::vector<double> t_grid;
  std::vector<FssLadderEntry> ladder;
  std::vector<double> reference;  // reference moment curve on the grid
  double dstar = 0.0;             // reference decay rate (kappa-scaled for seedbank)
  double dstar_se = 0.0;
  double kappa = 1.0;
  std::string model_name;
};

FssReport run_fss(const FssExperiment& exp, std::uint64_t seed);

// Distances divided by the number of sites (e635 macroscopic rescaling);
// marks retained.
GenealogySample genealogical_rescale(const GenealogySample& sample, std::uint64_t n_sites);

}  // namespace spop
