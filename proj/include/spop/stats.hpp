// Small statistics toolbox shared by the simulators and the test suites:
// running moments, batch-mean standard errors, two-sample KS, chi-square
// goodness of fit, Hill tail-index estimation and weighted line fits.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace spop {

// Welford accumulator.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderror() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(std::span<const double> xs);

// Autocorrelation-aware standard error of a time-series average via
// non-overlapping batch means.
struct BatchMeansResult {
  double mean = 0.0;
  double se = 0.0;          // from the batch-mean spread
  std::size_t batches = 0;
  bool converged = true;    // false when first/second half disagree > 5 sigma
  double half_diff_sigma = 0.0;
};
BatchMeansResult batch_means(std::span<const double> series, std::size_t n_batches);

// Regularized incomplete gamma functions P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Survival function of the chi-square distribution.
double chi2_sf(double x, double dof);

// Pearson chi-square statistic for observed counts against expected counts.
double chi2_statistic(std::span<const std::uint64_t> observed, std::span<const double> expected);

// Asymptotic Kolmogorov-Smirnov p-value for statistic d with effective
// sample size ne (one-sample: ne = n; two-sample: ne = n*m/(n+m)).
double ks_pvalue(double d, double ne);

// Two-sample KS test; inputs need not be sorted.
struct KsResult {
  double d = 0.0;
  double pvalue = 1.0;
};
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// One-sample KS against a CDF supplied as a callable on the sorted data.
KsResult ks_one_sample(std::vector<double> xs, double (*cdf)(double, const void*), const void* ctx);

// Hill estimator of the tail index gamma (P(X > x) ~ x^{-gamma}) from the
// top k order statistics.
double hill_tail_index(std::vector<double> xs, std::size_t k);

// Weighted least squares fit y = a + b x; weights are 1/var(y_i).
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double slope_se = 0.0;
};
LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> weight);

// FNV-1a 64-bit hash; used for config and output-file fingerprints.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& s);

}  // namespace spop
