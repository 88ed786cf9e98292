// Hierarchical mean-field renormalization: block averages, the d_k
// recursion d_{k+1} = c_k (lambda_k/2 + d_k) / (c_k + lambda_k/2 + d_k),
// the clustering / local-coexistence dichotomy (sum of m_k = (mu_k + d_k)/c_k
// diverges or converges, mu_k = lambda_k/2), interaction-chain sampling and
// the seedbank tail / regime criteria.
//
// Interaction chains are stored with the negative-index convention: the
// entry path[0] is level -(j+1) (equal to theta), path[j+1] is level 0.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spop/cannings.hpp"
#include "spop/dynamics.hpp"
#include "spop/geometry.hpp"
#include "spop/rng.hpp"

namespace spop {

// Arithmetic mean of the field over the k-ball around eta; stays on the
// simplex.
std::vector<double> block_average(const SimplexField& state, const HierGroup& geo,
                                  std::uint64_t eta, int k);
double block_average_scalar(std::span<const double> x, const HierGroup& geo, std::uint64_t eta,
                            int k);

// ---------------------------------------------------------------------------
// d_k recursion and dichotomy.

struct RenormSequences {
  std::vector<double> c;       // c_k > 0
  std::vector<double> lambda;  // lambda_k >= 0 (mu_k = lambda_k / 2)
  double d0 = 0.0;
};

double dk_step(double c_k, double lambda_k, double d_k);
// d_0 .. d_k for k = levels (returns levels+1 values).
std::vector<double> dk_recursion(const RenormSequences& seq, int levels);

enum class Dichotomy { Clustering, LocalCoexistence, Inconclusive };

struct DichotomyVerdict {
  Dichotomy verdict = Dichotomy::Inconclusive;
  std::string rule;                  // "analytic" or "numeric-threshold"
  std::string detail;
  std::vector<double> partial_sums;  // partial sums of m_k
};

// Geometric families c_k = c^k, lambda_k = lambda q^k: analytic test of
// sum m_k via the e720 criterion.
struct GeometricFamily {
  double c = 1.0;
  double lambda = 0.0;
  double q = 1.0;
  double d0 = 0.0;
};
DichotomyVerdict classify_dichotomy(const GeometricFamily& fam);

// Finite arrays: partial sums up to the horizon plus a trend heuristic;
// Inconclusive when the trend is ambiguous.
DichotomyVerdict classify_dichotomy(const RenormSequences& seq);

// ---------------------------------------------------------------------------
// Interaction chain.

struct ChainParams {
  std::vector<double> c;         // c_k for k = 0..j
  std::vector<double> lambda;    // lambda_k (only via d_k unless measures given)
  double d0 = 0.0;
  // Optional genuine Lambda_k measures for engine B jumps; empty = none.
  std::vector<LambdaMeasure> measures;
  double eps = 1e-3;
};

enum class ChainEngine { BetaEquilibrium, Simulated };

struct ChainEngineSettings {
  double burn_in = 15.0;   // engine B: relaxation time before the draw
  double dt = 1e-3;
};

// Path M_{-(j+1)}, ..., M_0 of the two-type interaction chain started at
// theta.  Engine A draws each transition from the exact Beta equilibrium
// Beta(2 c_k x / d_k, 2 c_k (1-x) / d_k); engine B runs the McKean-Vlasov
// (jump-)diffusion to stationarity and returns the end state.
std::vector<double> interaction_chain_sample(double theta, const ChainParams& params, int j,
                                             ChainEngine engine, const ChainEngineSettings& settings,
                                             Rng& rng);

// ---------------------------------------------------------------------------
// Renormalized observation profile (empirical side of the chain).

// Neutral two-type Fisher-Wright field on Omega_{N,L}; snapshots of the full
// field at the requested times (sorted).
std::vector<std::vector<double>> run_two_type_hier_snapshots(const HierSpec& spec, double d,
                                                             double theta, double dt,
                                                             std::span<const double> times,
                                                             std::uint64_t noise_seed);

struct ProfilePoint {
  int k = 0;
  double time = 0.0;
  double value = 0.0;
};

// Block averages Y_{eta,k} evaluated at the theorem time points
// N^j t_N + N^k u_k for k = j..0.
std::vector<ProfilePoint> renormalized_profile(const HierSpec& spec, double d, double theta,
                                               double dt, std::uint64_t eta, int j, double t_N,
                                               std::span<const double> u, std::uint64_t noise_seed);

// ---------------------------------------------------------------------------
// Seedbank tail and regime.

// Colour tail with K_m = A (m+1)^{-alpha}, e_m = B (m+1)^{-beta} for
// m = 0..m_max; requires alpha < 1 < alpha + beta (fat-tail family) unless
// finite_rho_ok is set (regime analysis with alpha > 1).
struct SeedbankTailParams {
  double A = 1.0;
  double B = 1.0;
  double alpha = 0.5;
  double beta = 1.0;
  std::uint64_t m_max = 1000;

  double gamma() const { return (alpha + beta - 1.0) / beta; }
  double tail_constant() const;  // C = (A/beta) B^{1-gamma} gamma Gamma(gamma)
  double K(std::uint64_t m) const;
  double e(std::uint64_t m) const;
  double chi() const;   // truncated sum K_m e_m
  double rho() const;   // truncated sum K_m
  bool rho_divergent() const { return alpha <= 1.0; }
  // Bound on the K_m e_m mass dropped by the truncation.
  double truncation_tail_mass() const;
};

void validate(const SeedbankTailParams& p, bool finite_rho_ok = false);

// P(tau > t) for the truncated colour mixture.
std::vector<double> seedbank_tail_curve(const SeedbankTailParams& p, std::span<const double> t);

// Sampler of the typical wake-up time tau: colour m with probability
// K_m e_m / chi, then Exp(e_m).
class WakeupSampler {
 public:
  explicit WakeupSampler(const SeedbankTailParams& p);
  double sample(Rng& rng) const;

 private:
  std::vector<double> rate_;
  DiscreteSampler pick_;
};

// Walk families with known degree for the analytic regime criterion.
struct WalkFamily {
  enum class Kind { MeanField, Rate0, HierGeometric, Lattice } kind = Kind::MeanField;
  double c = 1.0;  // HierGeometric: c_k = c^k
  int N = 2;       // HierGeometric
  int dim = 2;     // Lattice
};

enum class SeedbankRegime { Coexistence, Clustering, Inconclusive };

struct RegimeVerdict {
  SeedbankRegime verdict = SeedbankRegime::Inconclusive;
  bool rho_finite = false;
  double gamma = 1.0;          // weight exponent used (1 in the rho < infinity case)
  std::string criterion;       // which integral decided, and how
  std::optional<double> numeric_estimate;  // optional MC value of the integral
};

// Longtime-behaviour dichotomy: coexistence iff I_{a_hat} < infinity
// (rho < infinity), with the weight t^{-(1-gamma)/gamma} replacing weight 1
// when rho = infinity.  gamma in (0,1/2) gives coexistence for every walk.
RegimeVerdict seedbank_regime(const WalkFamily& walk, const SeedbankTailParams& tail);

}  // namespace spop
