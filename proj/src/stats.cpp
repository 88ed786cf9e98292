#include "spop/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace spop {

double RunningStats::stderror() const {
  if (n_ < 2) return 0.0;
  return std::sqrt(variance() / static_cast<double>(n_));
}

MeanSe mean_and_se(std::span<const double> xs) {
  RunningStats rs;
  for (double x : xs) rs.add(x);
  return {rs.mean(), rs.stderror()};
}

BatchMeansResult batch_means(std::span<const double> series, std::size_t n_batches) {
  BatchMeansResult out;
  if (series.empty() || n_batches < 2) throw std::invalid_argument("batch_means: need data and >= 2 batches");
  n_batches = std::min(n_batches, series.size());
  const std::size_t len = series.size() / n_batches;
  if (len == 0) throw std::invalid_argument("batch_means: series shorter than batch count");

  RunningStats batches;
  for (std::size_t b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += series[i];
    batches.add(s / static_cast<double>(len));
  }
  out.mean = batches.mean();
  out.se = batches.stderror();
  out.batches = n_batches;

  // Geweke-style drift check: first half of the series against the second.
  const std::size_t half = series.size() / 2;
  RunningStats a, b;
  for (std::size_t i = 0; i < half; ++i) a.add(series[i]);
  for (std::size_t i = half; i < series.size(); ++i) b.add(series[i]);
  const double denom = std::sqrt(2.0) * std::max(out.se, 1e-300);
  out.half_diff_sigma = std::abs(a.mean() - b.mean()) / denom;
  out.converged = out.half_diff_sigma <= 5.0;
  return out;
}

namespace {

// Lanczos log-gamma.
double lgamma_local(double x) { return std::lgamma(x); }

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - lgamma_local(a));
}

double gamma_q_cf(double a, double x) {
  // Lentz continued fraction for Q(a,x).
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - lgamma_local(a)) * h;
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cf(a, x);
}

double chi2_sf(double x, double dof) { return gamma_q(dof / 2.0, x / 2.0); }

double chi2_statistic(std::span<const std::uint64_t> observed, std::span<const double> expected) {
  if (observed.size() != expected.size())
    throw std::invalid_argument("chi2_statistic: size mismatch");
  double stat = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0) throw std::invalid_argument("chi2_statistic: nonpositive expectation");
    const double diff = static_cast<double>(observed[i]) - expected[i];
    stat += diff * diff / expected[i];
  }
  return stat;
}

double ks_pvalue(double d, double ne) {
  if (d <= 0.0) return 1.0;
  const double sq = std::sqrt(ne);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * lambda * lambda * k * k);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-12) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const std::size_t n = xa.size(), m = xb.size();
  if (n == 0 || m == 0) throw std::invalid_argument("ks_two_sample: empty sample");
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < n && j < m) {
    const double x = std::min(xa[i], xb[j]);
    while (i < n && xa[i] <= x) ++i;
    while (j < m && xb[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double ne = static_cast<double>(n) * static_cast<double>(m) / static_cast<double>(n + m);
  return {d, ks_pvalue(d, ne)};
}

KsResult ks_one_sample(std::vector<double> xs, double (*cdf)(double, const void*), const void* ctx) {
  if (xs.empty()) throw std::invalid_argument("ks_one_sample: empty sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i], ctx);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return {d, ks_pvalue(d, n)};
}

double hill_tail_index(std::vector<double> xs, std::size_t k) {
  if (k + 1 > xs.size()) throw std::invalid_argument("hill_tail_index: k too large");
  if (k == 0) throw std::invalid_argument("hill_tail_index: k must be positive");
  std::sort(xs.begin(), xs.end(), std::greater<double>());
  const double ref = std::log(xs[k]);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::log(xs[i]) - ref;
  const double inv = acc / static_cast<double>(k);
  if (inv <= 0.0) throw std::runtime_error("hill_tail_index: degenerate sample");
  return 1.0 / inv;
}

LineFit weighted_line_fit(std::span<const double> x, std::span<const double> y,
                          std::span<const double> weight) {
  if (x.size() != y.size() || x.size() != weight.size() || x.size() < 2)
    throw std::invalid_argument("weighted_line_fit: bad inputs");
  double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = weight[i];
    sw += w;
    swx += w * x[i];
    swy += w * y[i];
    swxx += w * x[i] * x[i];
    swxy += w * x[i] * y[i];
  }
  const double det = sw * swxx - swx * swx;
  if (det <= 0.0) throw std::runtime_error("weighted_line_fit: singular system");
  LineFit fit;
  fit.slope = (sw * swxy - swx * swy) / det;
  fit.intercept = (swxx * swy - swx * swxy) / det;
  fit.slope_se = std::sqrt(sw / det);
  return fit;
}

std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

}  // namespace spop
