// Sampled marked ultrametric measure spaces extracted from ancestry logs,
// and the genealogy statistics computed on them: polynomial (U-statistic)
// averages, the distance transform r -> 1 - exp(-r), time to the MRCA and
// 2h-ball decompositions.
//
// The genealogical distance between two sampled individuals is twice the
// time back to their most recent common ancestor.  Pairs without a common
// ancestor since time 0 carry the value 2t together with a censored flag.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "spop/cannings.hpp"
#include "spop/rng.hpp"

namespace spop {

struct IntegrityError : std::runtime_error {
  explicit IntegrityError(const std::string& what, std::int64_t record = -1)
      : std::runtime_error(what), record(record) {}
  std::int64_t record;  // first offending ancestry record, -1 if not record-bound
};

struct GenealogySample {
  int n = 0;
  double t = 0.0;                        // sample time
  std::vector<double> dist;              // n*n, symmetric, zero diagonal
  std::vector<std::uint8_t> censored;    // n*n flags: no common ancestor
  struct Mark {
    std::uint32_t site = 0;
    std::int32_t type = 0;
  };
  std::vector<Mark> marks;

  double d(int i, int j) const { return dist[static_cast<std::size_t>(i) * n + j]; }
  bool is_censored(int i, int j) const {
    return censored[static_cast<std::size_t>(i) * n + j] != 0;
  }
  void set(int i, int j, double v, bool cens);
};

// Largest ultrametric violation max(0, d(i,j) - max(d(i,k), d(k,j))) over
// all triples.
double ultrametric_violation(const GenealogySample& s);

// Draws n individuals uniformly with replacement (optionally restricted to
// a set of sites), traces lineages backward through the log and fills the
// distance matrix and marks.  Throws IntegrityError on a malformed log.
GenealogySample extract_sample(const ParticleSystem& sys, int n,
                               std::span<const std::uint64_t> site_filter, Rng& rng);

// Parent lookup built from an ancestry log; lineages 0..founders-1 are
// roots.  Child ids must be founders, founders+1, ... in record order.
struct LineageTable {
  std::uint64_t founders = 0;
  std::vector<std::uint64_t> parent;  // indexed by lineage - founders
  std::vector<double> birth;

  static LineageTable build(std::span<const AncestryRecord> log, std::uint64_t founders);
  // Merge time of two lineages; nullopt when they reach distinct founders.
  std::optional<double> merge_time(std::uint64_t a, std::uint64_t b, double sample_time) const;
};

// Polynomial statistic: average of phi(pairwise distances) * g(marks) over
// ordered sub-tuples of distinct sample indices.  Individuals are sampled
// with replacement at extraction time, so distinct indices are independent
// draws from the sampling measure and the average is an unbiased estimate
// of the population polynomial (including its diagonal atoms).  Exhaustive
// enumeration when the falling-factorial count <= max_exhaustive, otherwise
// a Monte Carlo average over `tuples` draws with a reported standard error.
struct PolyResult {
  double value = 0.0;
  double se = 0.0;        // 0 when exhaustive
  bool exhaustive = true;
  std::uint64_t tuples = 0;
};

using PhiFn = std::function<double(std::span<const double>)>;              // (deg choose 2) dists
using MarkFn = std::function<double(std::span<const GenealogySample::Mark>)>;

PolyResult polynomial_statistic(const GenealogySample& s, int degree, const PhiFn& phi,
                                const MarkFn& g, std::uint64_t max_exhaustive = 200000,
                                std::uint64_t tuples = 100000, Rng* rng = nullptr);

// Entrywise distance transform r -> 1 - exp(-r); censored entries map to
// exactly 1 and lose their flag (the transform exists to absorb them).
GenealogySample transform_distances(const GenealogySample& s);

// Time to the most recent common ancestor: max off-diagonal distance / 2.
// nullopt when any pair is censored (no MRCA).
std::optional<double> tmrca(const GenealogySample& s);

// Partition of {0..n-1} into classes of the relation dist < 2h, together
// with mass fractions.  Throws IntegrityError if the relation fails to be an
// equivalence (ultrametricity violated beyond tol).
struct BallDecomposition {
  std::vector<std::vector<int>> classes;
  std::vector<double> mass;
};
BallDecomposition ball_decomposition(const GenealogySample& s, double h, double tol = 1e-9);

// CSV serialization; bit-exact round trip.
std::string to_csv(const GenealogySample& s);
GenealogySample sample_from_csv(const std::string& text);

}  // namespace spop
