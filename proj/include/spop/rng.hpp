// Counter-derived random streams for reproducible parallel Monte Carlo.
//
// Every randomized routine in this project draws from an Rng that is derived
// from (master seed, purpose, replica, ...) key tuples.  Distinct tuples give
// statistically independent streams, so adding replicas or changing the
// number of worker threads never perturbs existing results.  Kernels that
// run one site per thread derive a fresh stream per (site, step), which makes
// the OpenMP and serial code paths bit-identical.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

namespace spop {

// One step of the splitmix64 sequence (Vigna).  Used for seeding only.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// xoshiro256++ generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  // Derives an independent stream for a key tuple.  Order-sensitive.
  static Rng derive(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
    std::uint64_t h = master;
    (void)splitmix64(h);
    for (std::uint64_t k : key) {
      h ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      (void)splitmix64(h);
    }
    return Rng(h);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0,1) with 53 random bits.
  double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform double in (0,1]; safe under log().
  double u01_open() { return 1.0 - u01(); }

  double uniform(double a, double b) { return a + (b - a) * u01(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Marsaglia polar; second value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  double exponential(double rate) {
    if (rate <= 0.0) throw std::invalid_argument("Rng::exponential: rate must be positive");
    return -std::log(u01_open()) / rate;
  }

  // Gamma(shape, 1), Marsaglia-Tsang.
  double gamma(double shape) {
    if (shape <= 0.0) throw std::invalid_argument("Rng::gamma: shape must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(u01_open(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = u01_open();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a);
    const double y = gamma(b);
    const double s = x + y;
    if (s <= 0.0) return 0.5;  // both shapes tiny; numerically degenerate
    return x / s;
  }

  // Binomial(n, p).  Inversion for small mean, explicit Bernoulli sweep
  // otherwise; both are exact.
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (p <= 0.0 || n == 0) return 0;
    if (p >= 1.0) return n;
    const double mean = static_cast<double>(n) * p;
    if (mean > 30.0 || static_cast<double>(n) * std::log1p(-p) < -700.0) {
      std::uint64_t cnt = 0;
      for (std::uint64_t i = 0; i < n; ++i)
        if (u01() < p) ++cnt;
      return cnt;
    }
    const double q = p / (1.0 - p);
    double pmf = std::exp(static_cast<double>(n) * std::log1p(-p));
    double cdf = pmf;
    const double u = u01();
    std::uint64_t k = 0;
    while (u > cdf && k < n) {
      pmf *= q * static_cast<double>(n - k) / static_cast<double>(k + 1);
      cdf += pmf;
      ++k;
    }
    return k;
  }

  // Index sampled proportionally to the given nonnegative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw std::invalid_argument("Rng::categorical: all weights zero");
    double u = u01() * total;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.size() - 1;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  void reseed(std::uint64_t seed) {
    std::uint64_t st = seed;
    for (auto& w : s_) w = splitmix64(st);
    have_spare_ = false;
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Cumulative-table sampler for large discrete mixtures (e.g. seedbank
// colours).  Sampling is a binary search over the cumulative weights.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(std::span<const double> weights) {
    cum_.reserve(weights.size());
    double run = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw std::invalid_argument("DiscreteSampler: negative weight");
      run += w;
      cum_.push_back(run);
    }
    if (cum_.empty() || run <= 0.0)
      throw std::invalid_argument("DiscreteSampler: total weight must be positive");
    total_ = run;
  }

  std::size_t sample(Rng& rng) const {
    const double u = rng.u01() * total_;
    std::size_t lo = 0, hi = cum_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cum_[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  double total() const { return total_; }

 private:
  std::vector<double> cum_;
  double total_ = 0.0;
};

}  // namespace spop
