#include "spop/renorm.hpp"

#include <algorithm>
#include <cmath>

namespace spop {

std::vector<double> block_average(const SimplexField& state, const HierGroup& geo,
                                  std::uint64_t eta, int k) {
  if (state.sites != geo.size()) throw std::invalid_argument("block_average: field/geometry mismatch");
  const std::uint64_t base = geo.ball_base(eta, k);
  const std::uint64_t ball = geo.ball_size(k);
  std::vector<double> mean(state.K, 0.0);
  for (std::uint64_t s = base; s < base + ball; ++s)
    for (int u = 0; u < state.K; ++u) mean[u] += state.x[s * state.K + u];
  for (int u = 0; u < state.K; ++u) mean[u] /= static_cast<double>(ball);
  return mean;
}

double block_average_scalar(std::span<const double> x, const HierGroup& geo, std::uint64_t eta,
                            int k) {
  if (x.size() != geo.size()) throw std::invalid_argument("block_average_scalar: size mismatch");
  const std::uint64_t base = geo.ball_base(eta, k);
  const std::uint64_t ball = geo.ball_size(k);
  double acc = 0.0;
  for (std::uint64_t s = base; s < base + ball; ++s) acc += x[s];
  return acc / static_cast<double>(ball);
}

double dk_step(double c_k, double lambda_k, double d_k) {
  if (!(c_k > 0.0)) throw std::invalid_argument("dk_step: c_k must be positive");
  if (!(lambda_k >= 0.0) || !(d_k >= 0.0))
    throw std::invalid_argument("dk_step: lambda_k and d_k must be >= 0");
  const double s = 0.5 * lambda_k + d_k;
  if (s == 0.0) return 0.0;
  return c_k * s / (c_k + s);
}

std::vector<double> dk_recursion(const RenormSequences& seq, int levels) {
  if (levels < 0) throw std::invalid_argument("dk_recursion: levels must be >= 0");
  if (static_cast<int>(seq.c.size()) < levels || static_cast<int>(seq.lambda.size()) < levels)
    throw std::invalid_argument("dk_recursion: sequences shorter than level count");
  std::vector<double> d;
  d.reserve(levels + 1);
  d.push_back(seq.d0);
  for (int k = 0; k < levels; ++k) d.push_back(dk_step(seq.c[k], seq.lambda[k], d.back()));
  return d;
}

DichotomyVerdict classify_dichotomy(const GeometricFamily& fam) {
  if (!(fam.c > 0.0) || !(fam.q > 0.0) || !(fam.lambda >= 0.0) || !(fam.d0 >= 0.0))
    throw std::invalid_argument("classify_dichotomy: bad family parameters");
  DichotomyVerdict v;
  v.rule = "analytic";

  // Zero volatility everywhere: every m_k vanishes.
  if (fam.lambda == 0.0 && fam.d0 == 0.0) {
    v.verdict = Dichotomy::LocalCoexistence;
    v.detail = "sum m_k = 0 (no volatility enters the hierarchy)";
    return v;
  }
  // mu_k / c_k = (lambda/2) (q/c)^k: non-summable terms force clustering.
  if (fam.lambda > 0.0 && fam.q >= fam.c) {
    v.verdict = Dichotomy::Clustering;
    v.detail = "mu_k/c_k = (lambda/2)(q/c)^k does not sum (q >= c)";
    return v;
  }
  // Remaining cases have summable mu_k/c_k; the d_k part decides.
  if (fam.c > 1.0) {
    // sum 1/c_j < infinity keeps d_k bounded away from 0, and d_k/c_k is
    // geometric; with q < c the lambda part is geometric too.
    v.verdict = Dichotomy::LocalCoexistence;
    v.detail = "sum m_k < infinity (c > 1, d_k bounded, geometric tails)";
    return v;
  }
  // c <= 1 with some volatility: 1/d_k grows at most like sum c^{-j}, so
  // d_k/c^k stays bounded below; sum m_k diverges.
  v.verdict = Dichotomy::Clustering;
  v.detail = "sum m_k = infinity (c <= 1: d_k/c_k bounded below)";
  return v;
}

DichotomyVerdict classify_dichotomy(const RenormSequences& seq) {
  const int levels = static_cast<int>(std::min(seq.c.size(), seq.lambda.size()));
  if (levels == 0) throw std::invalid_argument("classify_dichotomy: empty sequences");
  const std::vector<double> d = dk_recursion(seq, levels);

  DichotomyVerdict v;
  v.rule = "numeric-threshold";
  std::vector<double> m(levels);
  double run = 0.0;
  for (int k = 0; k < levels; ++k) {
    m[k] = (0.5 * seq.lambda[k] + d[k]) / seq.c[k];
    run += m[k];
    v.partial_sums.push_back(run);
  }
  if (run == 0.0) {
    v.verdict = Dichotomy::LocalCoexistence;
    v.detail = "all m_k vanish at the horizon";
    return v;
  }
  // Trend over the last half of the horizon.
  const int tail_start = levels / 2;
  bool decaying = true;
  double max_ratio = 0.0;
  for (int k = std::max(tail_start, 1); k < levels; ++k) {
    if (m[k - 1] <= 0.0) {
      decaying = false;
      break;
    }
    const double ratio = m[k] / m[k - 1];
    max_ratio = std::max(max_ratio, ratio);
    if (!(ratio < 1.0)) decaying = false;
  }
  const double tail = m.back();
  if (decaying && max_ratio < 0.9 && levels >= 4) {
    // Geometric-tail extrapolation is small relative to the partial sum.
    const double bound = tail * max_ratio / (1.0 - max_ratio);
    if (bound < 0.1 * run) {
      v.verdict = Dichotomy::LocalCoexistence;
      v.detail = "terms decay geometrically (extrapolated tail < 10% of partial sum)";
      return v;
    }
  }
  if (levels >= 4 && m.back() >= 0.99 * m[tail_start] && m[tail_start] > 0.0) {
    v.verdict = Dichotomy::Clustering;
    v.detail = "terms are non-decreasing over the second half of the horizon";
    return v;
  }
  v.verdict = Dichotomy::Inconclusive;
  v.detail = "trend ambiguous at the horizon";
  return v;
}

namespace {

// Engine B transition: McKean-Vlasov jump-diffusion run to stationarity.
double simulate_equilibrium_draw(double c, double d, double theta, const LambdaMeasure* lm,
                                 double eps, const ChainEngineSettings& st, Rng& rng) {
  if (theta <= 0.0) return 0.0;
  if (theta >= 1.0) return 1.0;
  double x = theta;
  const double T = st.burn_in * std::max(1.0, 1.0 / std::max(c, 1e-3));
  double t = 0.0;
  double next_jump = std::numeric_limits<double>::infinity();
  double jump_rate = 0.0;
  if (lm != nullptr) {
    jump_rate = lm->star_rate(eps);
    if (jump_rate > 0.0) next_jump = rng.exponential(jump_rate);
  }
  const double sd = std::sqrt(d * st.dt);
  while (t < T) {
    if (next_jump <= t) {
      const double r = lm->sample_r(eps, rng);
      const double u = rng.u01() < x ? 1.0 : 0.0;  // parent type from x
      x = (1.0 - r) * x + r * u;
      next_jump = t + rng.exponential(jump_rate);
      continue;
    }
    const double g = std::max(x * (1.0 - x), 0.0);
    x += st.dt * c * (theta - x) + sd * std::sqrt(g) * rng.normal();
    x = std::clamp(x, 0.0, 1.0);
    t += st.dt;
  }
  return x;
}

}  // namespace

std::vector<double> interaction_chain_sample(double theta, const ChainParams& params, int j,
                                             ChainEngine engine,
                                             const ChainEngineSettings& settings, Rng& rng) {
  if (theta < 0.0 || theta > 1.0)
    throw std::invalid_argument("interaction_chain_sample: theta must lie in [0,1]");
  if (j < 0) throw std::invalid_argument("interaction_chain_sample: j must be >= 0");
  if (static_cast<int>(params.c.size()) < j + 1)
    throw std::invalid_argument("interaction_chain_sample: need c_0..c_j");
  std::vector<double> lambda = params.lambda;
  lambda.resize(std::max<std::size_t>(lambda.size(), j + 1), 0.0);
  if (!params.measures.empty() && static_cast<int>(params.measures.size()) < j + 1)
    throw std::invalid_argument("interaction_chain_sample: need Lambda_0..Lambda_j measures");

  RenormSequences seq{params.c, lambda, params.d0};
  const std::vector<double> d = dk_recursion(seq, j);  // d_0..d_j

  std::vector<double> path;
  path.reserve(j + 2);
  path.push_back(theta);  // level -(j+1)
  double x = theta;
  for (int k = j; k >= 0; --k) {
    if (x <= 0.0 || x >= 1.0) {
      path.push_back(std::clamp(x, 0.0, 1.0));  // absorbing boundaries
      x = std::clamp(x, 0.0, 1.0);
      continue;
    }
    const double ck = params.c[k];
    const double dk = d[k];
    const LambdaMeasure* lm = params.measures.empty() ? nullptr : &params.measures[k];
    double next;
    if (engine == ChainEngine::BetaEquilibrium) {
      if (lm != nullptr && lm->total_mass() > 0.0)
        throw std::invalid_argument(
            "interaction_chain_sample: Beta engine requires Lambda_k = 0");
      if (dk <= 0.0) {
        next = x;  // zero volatility: equilibrium collapses to the mean
      } else {
        next = rng.beta(2.0 * ck * x / dk, 2.0 * ck * (1.0 - x) / dk);
      }
    } else {
      next = simulate_equilibrium_draw(ck, dk, x, lm, params.eps, settings, rng);
    }
    path.push_back(next);
    x = next;
  }
  return path;
}

std::vector<std::vector<double>> run_two_type_hier_snapshots(const HierSpec& spec, double d,
                                                             double theta, double dt,
                                                             std::span<const double> times,
                                                             std::uint64_t noise_seed) {
  validate(spec);
  const HierGroup geo = spec.group();
  MigrationOp mig = MigrationOp::hier(spec);
  std::vector<double> x(geo.size(), theta);
  std::vector<double> drift(geo.size());

  std::vector<std::vector<double>> snaps;
  double t = 0.0;
  std::uint64_t step = 0;
  for (double target : times) {
    if (target < t) throw std::invalid_argument("run_two_type_hier_snapshots: times must be sorted");
    while (t < target) {
      const double h = std::min(dt, target - t);
      std::fill(drift.begin(), drift.end(), 0.0);
      mig.add_drift(x, 1, drift);
      #pragma omp parallel for schedule(static)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(x.size()); ++s) {
        Rng rng = Rng::derive(noise_seed, {step, static_cast<std::uint64_t>(s)});
        const double g = std::max(x[s] * (1.0 - x[s]), 0.0);
        double v = x[s] + h * drift[s] + std::sqrt(d * h * g) * rng.normal();
        x[s] = std::clamp(v, 0.0, 1.0);
      }
      t += h;
      ++step;
    }
    snaps.push_back(x);
  }
  return snaps;
}

std::vector<ProfilePoint> renormalized_profile(const HierSpec& spec, double d, double theta,
                                               double dt, std::uint64_t eta, int j, double t_N,
                                               std::span<const double> u,
                                               std::uint64_t noise_seed) {
  if (j < 0 || j + 1 > spec.L)
    throw std::invalid_argument("renormalized_profile: need j + 1 <= L");
  if (static_cast<int>(u.size()) < j + 1)
    throw std::invalid_argument("renormalized_profile: need u_0..u_j");
  const double Nj = std::pow(static_cast<double>(spec.N), j);
  // Observation times N^j t_N + N^k u_k for k = j..0, sorted for the runner.
  std::vector<std::pair<double, int>> sched;
  for (int k = j; k >= 0; --k)
    sched.push_back({Nj * t_N + std::pow(static_cast<double>(spec.N), k) * u[k], k});
  std::sort(sched.begin(), sched.end());
  std::vector<double> times;
  for (auto& [tt, kk] : sched) times.push_back(tt);

  const auto snaps = run_two_type_hier_snapshots(spec, d, theta, dt, times, noise_seed);
  const HierGroup geo = spec.group();
  std::vector<ProfilePoint> out;
  for (std::size_t i = 0; i < sched.size(); ++i) {
    const int k = sched[i].second;
    out.push_back({k, sched[i].first, block_average_scalar(snaps[i], geo, eta, k)});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.k > b.k; });
  return out;
}

double SeedbankTailParams::tail_constant() const {
  const double g = gamma();
  return A / beta * std::pow(B, 1.0 - g) * g * std::tgamma(g);
}

double SeedbankTailParams::K(std::uint64_t m) const {
  return A * std::pow(static_cast<double>(m + 1), -alpha);
}

double SeedbankTailParams::e(std::uint64_t m) const {
  return B * std::pow(static_cast<double>(m + 1), -beta);
}

double SeedbankTailParams::chi() const {
  double acc = 0.0;
  for (std::uint64_t m = 0; m <= m_max; ++m) acc += K(m) * e(m);
  return acc;
}

double SeedbankTailParams::rho() const {
  double acc = 0.0;
  for (std::uint64_t m = 0; m <= m_max; ++m) acc += K(m);
  return acc;
}

double SeedbankTailParams::truncation_tail_mass() const {
  // sum_{m > m_max} K_m e_m <= A B integral_{m_max+1}^inf x^{-(alpha+beta)} dx
  const double p = alpha + beta;
  if (p <= 1.0) return std::numeric_limits<double>::infinity();
  return A * B * std::pow(static_cast<double>(m_max + 1), 1.0 - p) / (p - 1.0);
}

void validate(const SeedbankTailParams& p, bool finite_rho_ok) {
  if (!(p.A > 0.0) || !(p.B > 0.0))
    throw std::invalid_argument("SeedbankTailParams: A and B must be positive");
  if (!(p.beta > 0.0)) throw std::invalid_argument("SeedbankTailParams: beta must be positive");
  if (!(p.alpha + p.beta > 1.0))
    throw std::invalid_argument("SeedbankTailParams: need alpha + beta > 1 (wake-up tail constraint)");
  if (!finite_rho_ok && !(p.alpha < 1.0))
    throw std::invalid_argument("SeedbankTailParams: fat-tail family needs alpha < 1");
}

std::vector<double> seedbank_tail_curve(const SeedbankTailParams& p, std::span<const double> t) {
  validate(p, true);
  const double chi = p.chi();
  if (!(chi > 0.0)) throw std::invalid_argument("seedbank_tail_curve: chi must be positive");
  std::vector<double> out(t.size(), 0.0);
  for (std::uint64_t m = 0; m <= p.m_max; ++m) {
    const double w = p.K(m) * p.e(m) / chi;
    const double em = p.e(m);
    for (std::size_t i = 0; i < t.size(); ++i) out[i] += w * std::exp(-em * t[i]);
  }
  return out;
}

namespace {

std::vector<double> wakeup_weights(const SeedbankTailParams& p) {
  validate(p, true);
  std::vector<double> w;
  w.reserve(p.m_max + 1);
  for (std::uint64_t m = 0; m <= p.m_max; ++m) w.push_back(p.K(m) * p.e(m));
  return w;
}

}  // namespace

WakeupSampler::WakeupSampler(const SeedbankTailParams& p) : pick_(wakeup_weights(p)) {
  rate_.reserve(p.m_max + 1);
  for (std::uint64_t m = 0; m <= p.m_max; ++m) rate_.push_back(p.e(m));
}

double WakeupSampler::sample(Rng& rng) const {
  const std::size_t m = pick_.sample(rng);
  return rng.exponential(rate_[m]);
}

RegimeVerdict seedbank_regime(const WalkFamily& walk, const SeedbankTailParams& tail) {
  validate(tail, true);
  RegimeVerdict out;
  out.rho_finite = !tail.rho_divergent();
  out.gamma = out.rho_finite ? 1.0 : tail.gamma();
  const double g = out.gamma;

  // Seedbank-dominated regime: the weight alone is integrable against any
  // bounded a_hat_t(0,0).
  if (!out.rho_finite && g < 0.5) {
    out.verdict = SeedbankRegime::Coexistence;
    out.criterion = "gamma < 1/2: I_{a,gamma} < infinity for every walk";
    return out;
  }

  // Walk degree gamma_w decides: the integral converges iff the weight
  // exponent -(1-g)/g lies below the degree, i.e. gamma_w > 1 - 1/g.
  const double threshold = 1.0 - 1.0 / g;
  auto decide = [&](double degree, const std::string& name) {
    if (degree > threshold) {
      out.verdict = SeedbankRegime::Coexistence;
      out.criterion = name + ": degree " + std::to_string(degree) + " > " +
                      std::to_string(threshold);
    } else {
      out.verdict = SeedbankRegime::Clustering;
      out.criterion = name + ": degree " + std::to_string(degree) +
                      " <= " + std::to_string(threshold) + " (marginal cases diverge)";
    }
  };

  switch (walk.kind) {
    case WalkFamily::Kind::MeanField:
      // a_hat_t(0,0) decays exponentially in the McKean-Vlasov limit.
      out.verdict = SeedbankRegime::Coexistence;
      out.criterion = "mean-field walk: a_hat_t(0,0) decays exponentially, integral finite";
      return out;
    case WalkFamily::Kind::Rate0: {
      // a_hat_t(0,0) = 1: integral of the weight alone on [1, infinity).
      const bool finite = (1.0 - g) / g > 1.0;
      out.verdict = finite ? SeedbankRegime::Coexistence : SeedbankRegime::Clustering;
      out.criterion = finite ? "rate-0 walk: weight exponent > 1"
                             : "rate-0 walk: integral of t^{-(1-gamma)/gamma} diverges";
      return out;
    }
    case WalkFamily::Kind::HierGeometric: {
      if (!(walk.c > 0.0) || walk.c >= static_cast<double>(walk.N)) {
        out.verdict = SeedbankRegime::Inconclusive;
        out.criterion = "hierarchical walk outside the geometric degree formula (need 0 < c < N)";
        return out;
      }
      decide(degree_geometric(walk.c, walk.N), "hierarchical walk");
      return out;
    }
    case WalkFamily::Kind::Lattice:
      decide(static_cast<double>(walk.dim) / 2.0 - 1.0, "Z^d walk");
      return out;
  }
  return out;
}

}  // namespace spop
