// Geographic arenas: the truncated hierarchical group Omega_{N,L} and the
// d-dimensional torus, together with their random-walk kernels and the
// potential-theoretic diagnostics (walk degree, truncated Green function,
// weighted recurrence integrals).
//
// Omega_{N,L} is the finite group of L base-N digits under digit-wise
// addition mod N.  Sites are indexed 0..N^L-1 with digit p contributing
// digit * N^p, so the k-ball around any site is a contiguous index range.
//
// Level indexing convention: an individual picks the (k+1)-ball around its
// position at rate c_k / N^k (k = 0..L-1) and lands uniformly inside it, so
// c_0 governs nearest-neighbour (1-ball) mixing.  Entries of c beyond L are
// truncated; their rate mass is reported, not simulated.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "spop/rng.hpp"

namespace spop {

struct HierAddress {
  int N = 2;
  std::vector<int> digits;  // digits[0] = least significant (level-1 digit)

  int L() const { return static_cast<int>(digits.size()); }
  bool operator==(const HierAddress&) const = default;
};

// Index/digit arithmetic on Omega_{N,L}.
class HierGroup {
 public:
  HierGroup(int N, int L);

  int N() const { return N_; }
  int L() const { return L_; }
  std::uint64_t size() const { return size_; }

  std::uint64_t index_of(const HierAddress& a) const;
  HierAddress address_of(std::uint64_t idx) const;

  // Hierarchical distance: smallest k with equal digits at positions >= k.
  int distance(std::uint64_t i, std::uint64_t j) const;

  std::uint64_t add(std::uint64_t i, std::uint64_t j) const;
  std::uint64_t sub(std::uint64_t i, std::uint64_t j) const;

  std::uint64_t ball_size(int k) const;                          // N^k
  std::uint64_t ball_base(std::uint64_t center, int k) const;    // first index of B_k

 private:
  int N_ = 2;
  int L_ = 1;
  std::uint64_t size_ = 2;
  std::vector<std::uint64_t> pow_;  // N^0 .. N^L
};

int hier_distance(const HierAddress& i, const HierAddress& j);
std::vector<HierAddress> ball_members(const HierAddress& center, int k);

struct HierSpec {
  int N = 2;
  int L = 1;
  std::vector<double> c;  // c_k, k = 0.., levels beyond L dropped

  HierGroup group() const { return HierGroup(N, L); }
  // Total per-individual jump rate sum_{k<L} c_k / N^k.
  double jump_rate() const;
  // Rate mass of truncated levels k >= L.
  double dropped_rate() const;
};

struct TorusStep {
  std::vector<long long> offset;
  double prob = 0.0;
};

struct TorusSpec {
  int d = 1;
  int n = 1;                    // sites per axis: 2n+1
  double rate = 1.0;            // total jump rate per individual
  std::vector<TorusStep> steps; // step law, probabilities sum to 1

  std::uint64_t site_count() const;
  int side() const { return 2 * n + 1; }
};

using GeographySpec = std::variant<HierSpec, TorusSpec>;

void validate(const HierSpec& spec);
void validate(const TorusSpec& spec);

// Symmetrized step law p_hat(s) = (p(s) + p(-s)) / 2.
std::vector<TorusStep> symmetrize_steps(const std::vector<TorusStep>& steps);

// Migration sampler: maps a site to a jump destination.  Homogeneous by
// construction (the destination law of dest - from does not depend on from).
class MigrationKernel {
 public:
  static MigrationKernel from(const GeographySpec& spec);

  double total_rate() const { return total_rate_; }
  bool homogeneous() const { return true; }

  // Destination of one jump (conditioned on a jump happening).
  std::uint64_t sample_destination(std::uint64_t from, Rng& rng) const;

 private:
  struct HierPart {
    HierGroup group;
    std::vector<double> level_rate;  // c_k / N^k for k < L
  };
  struct TorusPart {
    TorusSpec spec;
    std::vector<double> cum;  // cumulative step probabilities
  };
  std::variant<HierPart, TorusPart> part_{TorusPart{}};
  double total_rate_ = 0.0;

  MigrationKernel() = default;
};

// One migration jump on Omega_{N,L}: level K+1 chosen with probability
// (c_K / N^K) / jump_rate, destination uniform on the (K+1)-ball.
// Throws if all c_k are zero (no motion possible).
std::uint64_t sample_hier_jump(std::uint64_t from, const HierSpec& spec, Rng& rng);
HierAddress sample_hier_jump(const HierAddress& from, const HierSpec& spec, Rng& rng);

// Degree of the hierarchical walk with geometric rates c_k = c^k:
// gamma = log c / (log N - log c), valid for 0 < c < N.
double degree_geometric(double c, int N);

struct GreenEstimate {
  double value = 0.0;
  double se = 0.0;
  double horizon = 0.0;
  std::uint64_t replicas = 0;
};

// Monte Carlo estimate of the truncated Green function at the origin,
// integral_0^T a_hat_t(0,0) dt, from the occupation time of the origin of
// the (symmetrized) walk.
GreenEstimate green_at_zero(const GeographySpec& spec, double horizon, std::uint64_t replicas,
                            Rng& rng);

// Same estimator for the free (untruncated) lattice walk on Z^d; used by the
// finite system scheme where the infinite-system Green function enters.
GreenEstimate green_at_zero_free_lattice(const TorusSpec& walk, double horizon,
                                         std::uint64_t replicas, Rng& rng);

struct RecurrenceEstimate {
  double value = 0.0;
  double se = 0.0;
  double horizon = 0.0;
  // Upper bound on the dropped tail integral_T^inf t^{-(1-gamma)/gamma} dt
  // (uses a_hat <= 1); infinity when the weight alone does not decay.
  double tail_bound = 0.0;
};

// Truncated estimate of I_{a_hat,gamma} = integral_1^T t^{-(1-gamma)/gamma}
// a_hat_t(0,0) dt.  gamma = 1 gives the plain Green integral on [1,T].
RecurrenceEstimate recurrence_integral(const GeographySpec& spec, double gamma, double horizon,
                                       std::uint64_t replicas, Rng& rng);

}  // namespace spop
