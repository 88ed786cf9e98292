// Euler-Maruyama time stepping for the interacting diffusion limits:
// multi-type Fleming-Viot / Fisher-Wright systems with migration, mutation
// and selection drifts, the coloured-seedbank SSDE system, and the
// single-site McKean-Vlasov process.
//
// SDE convention used throughout the project: the neutral single-site
// two-type equation is dx = c(theta - x) dt + sqrt(d x(1-x)) dw, so the
// stationary law with immigration c toward theta is
// Beta(2 c theta / d, 2 c (1-theta) / d) and E[x(1-x)] = 2c theta(1-theta)/(2c+d).
//
// The field kernels come in OpenMP and serial-reference flavours; both draw
// per-(site, step) derived random streams and produce bit-identical states.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "spop/geometry.hpp"
#include "spop/rng.hpp"

namespace spop {

struct NumericalFailure : std::runtime_error {
  NumericalFailure(std::uint64_t site, std::uint64_t step)
      : std::runtime_error("numerical failure (NaN/overflow) at site " + std::to_string(site) +
                           ", step " + std::to_string(step)),
        site(site),
        step(step) {}
  std::uint64_t site;
  std::uint64_t step;
};

// Migration drift operator: out[site] += sum_{s'} a(site,s') (x_{s'} - x_site),
// vectorized over K components per site.  Variants:
//   - hierarchical: rates c_k/N^k toward (k+1)-ball averages,
//   - torus: rate * sum_s p(s) (x_{site+s} - x_site),
//   - mean-field: c (mean - x_site),
//   - none.
class MigrationOp {
 public:
  static MigrationOp none();
  static MigrationOp mean_field(double c);
  static MigrationOp hier(const HierSpec& spec);
  static MigrationOp torus(const TorusSpec& spec);

  std::uint64_t sites() const { return sites_; }

  // drift must hold sites*K doubles; x likewise.  Adds the migration drift.
  void add_drift(std::span<const double> x, int K, std::span<double> drift) const;

 private:
  enum class Kind { None, MeanField, Hier, Torus } kind_ = Kind::None;
  double c_ = 0.0;  // mean-field rate
  std::optional<HierGroup> group_;
  std::vector<double> level_rate_;  // c_k / N^k
  TorusSpec torus_;
  std::vector<TorusStep> torus_steps_;
  std::uint64_t sites_ = 1;
};

struct FvParams {
  int K = 2;
  double d = 0.0;                // resampling (volatility) rate
  double m = 0.0;                // mutation rate
  std::vector<double> mutation;  // K x K row-stochastic kernel (row = from)
  double s = 0.0;                // selection rate
  std::vector<double> fitness;   // psi, inf 0 / sup 1 when s > 0
  double dt = 1e-3;
};

void validate(const FvParams& p);

// Per-site type frequencies on the K-simplex, row-major [site*K + type].
struct SimplexField {
  std::uint64_t sites = 0;
  int K = 2;
  std::vector<double> x;

  static SimplexField constant(std::uint64_t sites, std::span<const double> point);
  std::span<double> site(std::uint64_t s) { return {x.data() + s * K, static_cast<std::size_t>(K)}; }
  std::span<const double> site(std::uint64_t s) const {
    return {x.data() + s * K, static_cast<std::size_t>(K)};
  }
};

struct StepDiagnostics {
  std::uint64_t clip_events = 0;
};

// One Euler-Maruyama step of the interacting Fleming-Viot system.  The
// noise stream is derived per (site, step) from noise_seed, so results do
// not depend on the number of threads.
void step_interacting_fv(SimplexField& state, const FvParams& params, const MigrationOp& mig,
                         std::uint64_t step_index, std::uint64_t noise_seed,
                         StepDiagnostics& diag);
// Serial reference implementation (kept for testing; bit-identical).
void step_interacting_fv_serial(SimplexField& state, const FvParams& params,
                                const MigrationOp& mig, std::uint64_t step_index,
                                std::uint64_t noise_seed, StepDiagnostics& diag);

// Exact square root of the Fleming-Viot covariance diag(x) - x x^T on the
// simplex: out = diag(sqrt x)(I - sqrt x sqrt x^T) z.  Exposed for tests.
void fv_noise_transform(std::span<const double> x, std::span<const double> z,
                        std::span<double> out);

// ---------------------------------------------------------------------------
// Coloured seedbank SSDE (two types, scalar frequency per site).

struct SeedbankParams {
  double b = 0.0;                         // active-population volatility rate
  std::function<double(double)> g;        // diffusion function; default x(1-x)
  std::vector<double> exchange_rate;      // e_m
  std::vector<double> relative_size;      // K_m
  double dt = 1e-3;

  double chi() const;   // sum e_m K_m
  double rho() const;   // sum K_m
};

void validate(const SeedbankParams& p);

// Active frequency x and dormant frequencies y^m per site.
struct SeedbankField {
  std::uint64_t sites = 0;
  int colours = 0;
  std::vector<double> x;  // sites
  std::vector<double> y;  // sites * colours, [site*colours + m]

  static SeedbankField constant(std::uint64_t sites, int colours, double x0, double y0);
};

// One step: Euler for x (migration drift + sqrt(b g(x)) noise), exact
// exponential relaxation toward the within-step-frozen x for each y^m.  The
// exchange increment on x uses the same relaxation weights, so with b = 0
// the weighted sum x + sum K_m y^m changes only through migration, exactly.
void step_seedbank(SeedbankField& state, const SeedbankParams& params, const MigrationOp& mig,
                   std::uint64_t step_index, std::uint64_t noise_seed, StepDiagnostics& diag);
void step_seedbank_serial(SeedbankField& state, const SeedbankParams& params,
                          const MigrationOp& mig, std::uint64_t step_index,
                          std::uint64_t noise_seed, StepDiagnostics& diag);

// ---------------------------------------------------------------------------
// Single-site McKean-Vlasov process (K types, immigration c toward theta).

struct McKeanVlasovParams {
  int K = 2;
  double c = 0.0;                // immigration rate toward the mean measure
  double d = 0.0;                // volatility rate
  double m = 0.0;
  std::vector<double> mutation;  // K x K
  double s = 0.0;
  std::vector<double> fitness;
  double dt = 1e-3;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::vector<double>> states;  // one simplex point per time
};

Trajectory run_mckean_vlasov(const McKeanVlasovParams& params, std::span<const double> theta,
                             std::span<const double> sample_times, Rng& rng);

// Scalar two-type McKean-Vlasov step used by the equilibrium engines; when
// pre-drawn normals are supplied (tests), they are consumed in step order.
struct ScalarMvRun {
  std::vector<double> values;  // x at every step (post-step), size n_steps+1
  std::uint64_t clip_events = 0;
};
ScalarMvRun run_mckean_vlasov_scalar(double c, double d, double theta, double x0, double T,
                                     double dt, Rng& rng,
                                     std::span<const double> predrawn_normals = {});

// Time-average estimate of (F g)(theta) = E_{nu_theta}[g(x)] from a long
// McKean-Vlasov run.  Reports burn-in and a batch-mean standard error plus a
// non-convergence diagnostic (first/second half disagreement beyond 5 sigma).
struct GmapEstimate {
  double value = 0.0;
  double se = 0.0;
  double burn_in = 0.0;
  std::size_t batches = 0;
  bool converged = true;
};
GmapEstimate equilibrium_gmap(double c, double d, double theta,
                              const std::function<double(double)>& g, double T, double dt,
                              Rng& rng);

}  // namespace spop
