// Event-driven particle systems (Moran type) with Lambda-resampling and
// hierarchical block resampling.  This is the particle-level source of
// genealogies: every replacement appends an ancestry record.
//
// Conventions:
//  - Per-site population size M is constant through every event.  Migration
//    therefore swaps the migrant with a uniformly chosen individual at the
//    destination site.
//  - Kingman part: each unordered pair per site resamples at rate d; one of
//    the two is replaced by the other's offspring with probability 1/2 each.
//  - Lambda events with r below the cutoff eps are dropped.  Their
//    contribution to the pair-coalescence rate, Lambda((0, eps)), is
//    reported so the bias can be bounded.
//  - A level-k block event pools the individuals of one k-ball, applies a
//    Lambda_k resampling to the pool, then reassigns every pooled individual
//    to a uniformly random site of the ball; per-site counts are restored to
//    M by moving uniformly chosen surplus individuals to deficit sites (the
//    number of moves is logged).  Per distinct k-ball these events fire at
//    rate Lambda_k^*([eps,1]) / N^{2k}.
#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "spop/geometry.hpp"
#include "spop/rng.hpp"

namespace spop {

// Finite measure Lambda on (0,1] plus an optional Kingman atom at 0.
// Lambda-events are driven by the intensity Lambda*(dr) = r^{-2} Lambda(dr).
struct LambdaMeasure {
  double kingman_mass = 0.0;  // Lambda({0}); acts as pair resampling
  struct Atom {
    double r = 1.0;
    double mass = 0.0;
  };
  std::vector<Atom> atoms;          // locations in (0,1]
  double uniform_mass = 0.0;        // uniform density on (0,1] with this mass
  double beta_mass = 0.0;           // Beta(a,b) density scaled to this mass
  double beta_a = 2.0;              // a >= 1 required (r^{a-3} envelope)
  double beta_b = 2.0;

  static LambdaMeasure zero() { return {}; }
  static LambdaMeasure dirac(double r, double mass = 1.0);
  static LambdaMeasure uniform(double mass = 1.0);
  static LambdaMeasure beta(double a, double b, double mass = 1.0);

  double total_mass() const;               // Lambda((0,1])
  double mass_below(double eps) const;     // Lambda((0,eps)): dropped pair rate
  double star_rate(double eps) const;      // integral_eps^1 r^{-2} Lambda(dr)
  // r drawn from the normalized restriction of Lambda* to [eps,1].
  double sample_r(double eps, Rng& rng) const;
};

void validate(const LambdaMeasure& lm);

struct AncestryRecord {
  double time = 0.0;
  std::uint64_t child = 0;   // newly created lineage
  std::uint64_t parent = 0;  // lineage it descends from
  std::uint32_t site = 0;    // site of the event (ball base site for blocks)
  std::int32_t level = 0;    // 0 = local, k >= 1 = block level
};

struct Individual {
  std::int32_t type = 0;
  std::uint64_t lineage = 0;
};

class ParticleSystem;
struct CanningsRates;
struct CanningsRunStats;
CanningsRunStats run_cannings(ParticleSystem& sys, const HierSpec& spec,
                              const CanningsRates& rates, double T, Rng& rng,
                              std::uint64_t max_events);

// Fixed-size spatial population on Omega_{N,L}: M individuals per site,
// site-major storage, append-only ancestry log.  Lineages 0..S*M-1 are the
// time-0 founders.
class ParticleSystem {
 public:
  ParticleSystem(const HierGroup& geo, int per_site);

  // Founders get i.i.d. Bernoulli(theta1) types (two-type setting).
  void init_two_types(double theta1, Rng& rng);
  // Explicit founder types, site-major.
  void init_types(std::span<const std::int32_t> types);

  const HierGroup& geography() const { return geo_; }
  int per_site() const { return M_; }
  std::uint64_t total_individuals() const { return pop_.size(); }
  double time() const { return time_; }

  std::span<const Individual> population() const { return pop_; }
  std::span<const AncestryRecord> ancestry() const { return log_; }

  std::span<Individual> site_block(std::uint64_t site) {
    return {pop_.data() + site * M_, static_cast<std::size_t>(M_)};
  }

  // Frequency of type 1 at a site / over all sites.
  double site_frequency(std::uint64_t site, std::int32_t type = 1) const;
  double global_frequency(std::int32_t type = 1) const;

  friend CanningsRunStats run_cannings(ParticleSystem& sys, const HierSpec& spec,
                                       const CanningsRates& rates, double T, Rng& rng,
                                       std::uint64_t max_events);

 private:
  HierGroup geo_;
  int M_;
  std::vector<Individual> pop_;
  std::vector<AncestryRecord> log_;
  std::uint64_t next_lineage_ = 0;
  double time_ = 0.0;
};

// Lambda resampling applied to a block of individuals: each is marked with
// probability r; if >= 2 are marked, one marked parent is chosen uniformly
// and replaces the other marked individuals (new lineages, type copied).
// Records are appended with the given site/level tag.  Returns the number of
// replaced individuals.
std::uint64_t apply_lambda_resampling(std::span<Individual> block, double r, double time,
                                      std::uint32_t site, std::int32_t level,
                                      std::vector<AncestryRecord>& log,
                                      std::uint64_t& next_lineage, Rng& rng);

struct CanningsRates {
  double d = 0.0;                       // Kingman pair rate per site
  LambdaMeasure lambda0;                // local Lambda events
  std::vector<LambdaMeasure> blocks;    // Lambda_k for levels k = 1..blocks.size()
  double eps = 1e-3;                    // Lambda* cutoff
};

struct CanningsRunStats {
  std::uint64_t events_migration = 0;
  std::uint64_t events_kingman = 0;
  std::uint64_t events_lambda_local = 0;
  std::uint64_t events_block = 0;
  std::uint64_t replacements = 0;
  std::uint64_t redistribution_moves = 0;
  double dropped_pair_rate_local = 0.0;            // Lambda_0((0,eps))
  std::vector<double> dropped_pair_rate_block;     // per level
  double final_time = 0.0;
};

// Waiting time and r for the next Lambda event:
// rate = integral_eps^1 r^{-2} Lambda(dr), r ~ normalized restriction.
// Returns {infinity, 0} when the restricted measure vanishes.
std::pair<double, double> sample_lambda_event(const LambdaMeasure& lm, double eps, Rng& rng);

// Gillespie event loop to time T: migration jumps, per-site Kingman pair
// resampling, per-site Lambda_0 events, per-ball block events.  Mutation and
// selection are not part of the particle engine.  Exceeding max_events
// raises the budget error with the system left at the last event time.
inline CanningsRunStats run_cannings(ParticleSystem& sys, const HierSpec& spec,
                                     const CanningsRates& rates, double T, Rng& rng) {
  return run_cannings(sys, spec, rates, T, rng, UINT64_MAX);
}

// Particle-vs-diffusion convergence diagnostic (neutral two-type, single
// site): runs the Moran engine at each population size and the diffusion
// module at matched parameters, and reports the trajectory of a moment
// statistic(x) with Monte Carlo bands.  Discrepancy should shrink as M grows.
struct MoranFvSeries {
  int M = 0;  // 0 = diffusion limit
  std::vector<double> mean;
  std::vector<double> se;
};
struct MoranFvReport {
  std::vector<double> times;
  std::vector<MoranFvSeries> particle;
  MoranFvSeries diffusion;
};
MoranFvReport moran_fv_consistency(std::span<const int> M_list, double d, double theta,
                                   std::span<const double> times, std::uint64_t replicas,
                                   double dt, std::uint64_t seed,
                                   const std::function<double(double)>& statistic);

}  // namespace spop
