#include "spop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "spop/stats.hpp"

namespace spop {

MigrationOp MigrationOp::none() {
  MigrationOp op;
  op.kind_ = Kind::None;
  op.sites_ = 1;
  return op;
}

MigrationOp MigrationOp::mean_field(double c) {
  if (!(c >= 0.0)) throw std::invalid_argument("MigrationOp: mean-field rate must be >= 0");
  MigrationOp op;
  op.kind_ = Kind::MeanField;
  op.c_ = c;
  op.sites_ = 0;  // any site count
  return op;
}

MigrationOp MigrationOp::hier(const HierSpec& spec) {
  validate(spec);
  MigrationOp op;
  op.kind_ = Kind::Hier;
  op.group_.emplace(spec.N, spec.L);
  double scale = 1.0;
  for (int k = 0; k < spec.L && k < static_cast<int>(spec.c.size()); ++k) {
    op.level_rate_.push_back(spec.c[k] * scale);
    scale /= spec.N;
  }
  op.sites_ = op.group_->size();
  return op;
}

MigrationOp MigrationOp::torus(const TorusSpec& spec) {
  validate(spec);
  MigrationOp op;
  op.kind_ = Kind::Torus;
  op.torus_ = spec;
  op.torus_steps_ = spec.steps;
  op.sites_ = spec.site_count();
  return op;
}

void MigrationOp::add_drift(std::span<const double> x, int K, std::span<double> drift) const {
  const std::uint64_t S = x.size() / K;
  if (drift.size() != x.size()) throw std::invalid_argument("MigrationOp: buffer size mismatch");
  switch (kind_) {
    case Kind::None:
      return;
    case Kind::MeanField: {
      std::vector<double> mean(K, 0.0);
      for (std::uint64_t s = 0; s < S; ++s)
        for (int u = 0; u < K; ++u) mean[u] += x[s * K + u];
      for (int u = 0; u < K; ++u) mean[u] /= static_cast<double>(S);
      #pragma omp parallel for schedule(static)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(S); ++s)
        for (int u = 0; u < K; ++u)
          drift[s * K + u] += c_ * (mean[u] - x[s * K + u]);
      return;
    }
    case Kind::Hier: {
      if (S != group_->size()) throw std::invalid_argument("MigrationOp: field/geometry mismatch");
      // Successive block means: level l+1 means are built from level l.
      std::vector<double> bm(x.begin(), x.end());
      std::uint64_t blocks = S;
      const int N = group_->N();
      for (std::size_t k = 0; k < level_rate_.size(); ++k) {
        // Collapse N consecutive blocks into their mean.
        blocks /= N;
        std::vector<double> nxt(blocks * K, 0.0);
        for (std::uint64_t b = 0; b < blocks; ++b) {
          for (int j = 0; j < N; ++j)
            for (int u = 0; u < K; ++u) nxt[b * K + u] += bm[(b * N + j) * K + u];
          for (int u = 0; u < K; ++u) nxt[b * K + u] /= N;
        }
        bm.swap(nxt);
        const double rate = level_rate_[k];
        if (rate > 0.0) {
          const std::uint64_t ball = group_->ball_size(static_cast<int>(k) + 1);
          #pragma omp parallel for schedule(static)
          for (std::int64_t s = 0; s < static_cast<std::int64_t>(S); ++s) {
            const std::uint64_t b = static_cast<std::uint64_t>(s) / ball;
            for (int u = 0; u < K; ++u)
              drift[s * K + u] += rate * (bm[b * K + u] - x[s * K + u]);
          }
        }
      }
      return;
    }
    case Kind::Torus: {
      if (S != torus_.site_count()) throw std::invalid_argument("MigrationOp: field/geometry mismatch");
      const int side = torus_.side();
      const int d = torus_.d;
      #pragma omp parallel for schedule(static)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(S); ++s) {
        for (const auto& st : torus_steps_) {
          // neighbour index with wrap-around per axis
          std::uint64_t nb = 0;
          std::uint64_t mult = 1;
          std::uint64_t rem = static_cast<std::uint64_t>(s);
          for (int axis = 0; axis < d; ++axis) {
            long long coord = static_cast<long long>(rem % side);
            rem /= side;
            long long moved = (coord + st.offset[axis]) % side;
            if (moved < 0) moved += side;
            nb += static_cast<std::uint64_t>(moved) * mult;
            mult *= side;
          }
          const double w = torus_.rate * st.prob;
          for (int u = 0; u < K; ++u)
            drift[s * K + u] += w * (x[nb * K + u] - x[s * K + u]);
        }
      }
      return;
    }
  }
}

void validate(const FvParams& p) {
  if (p.K < 2) throw std::invalid_argument("FvParams: need K >= 2 types");
  if (!(p.d >= 0.0) || !(p.m >= 0.0) || !(p.s >= 0.0))
    throw std::invalid_argument("FvParams: rates must be >= 0");
  if (!(p.dt > 0.0)) throw std::invalid_argument("FvParams: dt must be positive");
  if (p.m > 0.0) {
    if (static_cast<int>(p.mutation.size()) != p.K * p.K)
      throw std::invalid_argument("FvParams: mutation kernel must be K x K");
    for (int u = 0; u < p.K; ++u) {
      double row = 0.0;
      for (int v = 0; v < p.K; ++v) row += p.mutation[u * p.K + v];
      if (std::abs(row - 1.0) > 1e-9)
        throw std::invalid_argument("FvParams: mutation kernel rows must sum to 1");
    }
  }
  if (p.s > 0.0) {
    if (static_cast<int>(p.fitness.size()) != p.K)
      throw std::invalid_argument("FvParams: fitness vector must have K entries");
    const auto [mn, mx] = std::minmax_element(p.fitness.begin(), p.fitness.end());
    if (std::abs(*mn) > 1e-9 || std::abs(*mx - 1.0) > 1e-9)
      throw std::invalid_argument("FvParams: fitness must satisfy inf psi = 0, sup psi = 1");
  }
}

SimplexField SimplexField::constant(std::uint64_t sites, std::span<const double> point) {
  SimplexField f;
  f.sites = sites;
  f.K = static_cast<int>(point.size());
  f.x.resize(sites * point.size());
  for (std::uint64_t s = 0; s < sites; ++s)
    std::copy(point.begin(), point.end(), f.x.begin() + s * point.size());
  return f;
}

void fv_noise_transform(std::span<const double> x, std::span<const double> z,
                        std::span<double> out) {
  const std::size_t K = x.size();
  double dot = 0.0;
  for (std::size_t u = 0; u < K; ++u) dot += std::sqrt(std::max(x[u], 0.0)) * z[u];
  for (std::size_t u = 0; u < K; ++u) {
    const double r = std::sqrt(std::max(x[u], 0.0));
    out[u] = r * (z[u] - r * dot);
  }
}

namespace {

// Shared site update for both fv kernels; returns clip count for the site.
inline std::uint64_t fv_update_site(double* xs, const double* mig, const FvParams& p,
                                    std::uint64_t site, std::uint64_t step,
                                    std::uint64_t noise_seed) {
  const int K = p.K;
  double drift[64];
  double z[64];
  double w[64];
  if (K > 64) throw std::invalid_argument("step_interacting_fv: K > 64 not supported");

  for (int u = 0; u < K; ++u) drift[u] = mig[u];
  if (p.m > 0.0) {
    for (int u = 0; u < K; ++u) {
      double inflow = 0.0;
      for (int v = 0; v < K; ++v) inflow += xs[v] * p.mutation[v * K + u];
      drift[u] += p.m * (inflow - xs[u]);
    }
  }
  if (p.s > 0.0) {
    double mean_fit = 0.0;
    for (int u = 0; u < K; ++u) mean_fit += p.fitness[u] * xs[u];
    for (int u = 0; u < K; ++u) drift[u] += p.s * xs[u] * (p.fitness[u] - mean_fit);
  }

  if (p.d > 0.0) {
    Rng rng = Rng::derive(noise_seed, {step, site});
    for (int u = 0; u < K; ++u) z[u] = rng.normal();
    fv_noise_transform({xs, static_cast<std::size_t>(K)}, {z, static_cast<std::size_t>(K)},
                       {w, static_cast<std::size_t>(K)});
  } else {
    for (int u = 0; u < K; ++u) w[u] = 0.0;
  }

  const double noise_scale = std::sqrt(p.d * p.dt);
  std::uint64_t clips = 0;
  double sum = 0.0;
  for (int u = 0; u < K; ++u) {
    double v = xs[u] + p.dt * drift[u] + noise_scale * w[u];
    if (v < 0.0) {
      v = 0.0;
      ++clips;
    }
    xs[u] = v;
    sum += v;
  }
  if (!std::isfinite(sum) || sum <= 0.0) throw NumericalFailure(site, step);
  for (int u = 0; u < K; ++u) xs[u] /= sum;
  return clips;
}

}  // namespace

void step_interacting_fv(SimplexField& state, const FvParams& params, const MigrationOp& mig,
                         std::uint64_t step_index, std::uint64_t noise_seed,
                         StepDiagnostics& diag) {
  validate(params);
  if (state.K != params.K) throw std::invalid_argument("step_interacting_fv: K mismatch");
  std::vector<double> mig_drift(state.x.size(), 0.0);
  mig.add_drift(state.x, state.K, mig_drift);

  std::uint64_t clips = 0;
  #pragma omp parallel for schedule(static) reduction(+ : clips)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(state.sites); ++s) {
    clips += fv_update_site(state.x.data() + s * state.K, mig_drift.data() + s * state.K, params,
                            static_cast<std::uint64_t>(s), step_index, noise_seed);
  }
  diag.clip_events += clips;
}

void step_interacting_fv_serial(SimplexField& state, const FvParams& params,
                                const MigrationOp& mig, std::uint64_t step_index,
                                std::uint64_t noise_seed, StepDiagnostics& diag) {
  validate(params);
  if (state.K != params.K) throw std::invalid_argument("step_interacting_fv: K mismatch");
  std::vector<double> mig_drift(state.x.size(), 0.0);
  mig.add_drift(state.x, state.K, mig_drift);
  std::uint64_t clips = 0;
  for (std::uint64_t s = 0; s < state.sites; ++s)
    clips += fv_update_site(state.x.data() + s * state.K, mig_drift.data() + s * state.K, params,
                            s, step_index, noise_seed);
  diag.clip_events += clips;
}

double SeedbankParams::chi() const {
  double v = 0.0;
  for (std::size_t m = 0; m < exchange_rate.size(); ++m) v += exchange_rate[m] * relative_size[m];
  return v;
}

double SeedbankParams::rho() const {
  double v = 0.0;
  for (double k : relative_size) v += k;
  return v;
}

void validate(const SeedbankParams& p) {
  if (!(p.b >= 0.0)) throw std::invalid_argument("SeedbankParams: b must be >= 0");
  if (!(p.dt > 0.0)) throw std::invalid_argument("SeedbankParams: dt must be positive");
  if (p.exchange_rate.size() != p.relative_size.size())
    throw std::invalid_argument("SeedbankParams: e and K sequences must have equal length");
  for (double e : p.exchange_rate)
    if (!(e >= 0.0) || !std::isfinite(e))
      throw std::invalid_argument("SeedbankParams: exchange rates must be finite and >= 0");
  for (double k : p.relative_size)
    if (!(k >= 0.0) || !std::isfinite(k))
      throw std::invalid_argument("SeedbankParams: relative sizes must be finite and >= 0");
  if (!std::isfinite(p.chi())) throw std::invalid_argument("SeedbankParams: chi must be finite");
}

SeedbankField SeedbankField::constant(std::uint64_t sites, int colours, double x0, double y0) {
  SeedbankField f;
  f.sites = sites;
  f.colours = colours;
  f.x.assign(sites, x0);
  f.y.assign(sites * colours, y0);
  return f;
}

namespace {

inline std::uint64_t seedbank_update_site(double* x, double* y, const double* mig,
                                          const SeedbankParams& p,
                                          std::span<const double> relax_factor,
                                          std::uint64_t site, std::uint64_t step,
                                          std::uint64_t noise_seed) {
  const std::size_t M = p.exchange_rate.size();
  const double x_old = *x;

  // Exchange increment uses the same relaxation weights as the exact y^m
  // update below (K_m (y - x)(1 - exp(-e_m dt)) = dt e_m K_m (y - x) + O(dt^2)),
  // so with b = 0 the weighted sum x + sum K_m y^m changes only through
  // migration, exactly.
  double exchange = 0.0;
  for (std::size_t m = 0; m < M; ++m)
    exchange += p.relative_size[m] * (y[m] - x_old) * (1.0 - relax_factor[m]);

  double noise = 0.0;
  if (p.b > 0.0) {
    const double gval = p.g ? p.g(x_old) : x_old * (1.0 - x_old);
    if (gval > 0.0) {
      Rng rng = Rng::derive(noise_seed, {step, site});
      noise = std::sqrt(p.b * gval * p.dt) * rng.normal();
    }
  }

  std::uint64_t clips = 0;
  double v = x_old + p.dt * *mig + exchange + noise;
  if (!std::isfinite(v)) throw NumericalFailure(site, step);
  if (v < 0.0) {
    v = 0.0;
    ++clips;
  } else if (v > 1.0) {
    v = 1.0;
    ++clips;
  }
  *x = v;

  // y^m: exact relaxation toward the within-step-frozen x (linear ODE).
  for (std::size_t m = 0; m < M; ++m) y[m] = x_old + (y[m] - x_old) * relax_factor[m];
  return clips;
}

}  // namespace

void step_seedbank(SeedbankField& state, const SeedbankParams& params, const MigrationOp& mig,
                   std::uint64_t step_index, std::uint64_t noise_seed, StepDiagnostics& diag) {
  validate(params);
  if (state.colours != static_cast<int>(params.exchange_rate.size()))
    throw std::invalid_argument("step_seedbank: colour count mismatch");
  std::vector<double> mig_drift(state.sites, 0.0);
  mig.add_drift(state.x, 1, mig_drift);
  std::vector<double> relax(params.exchange_rate.size());
  for (std::size_t m = 0; m < relax.size(); ++m)
    relax[m] = std::exp(-params.exchange_rate[m] * params.dt);

  std::uint64_t clips = 0;
  #pragma omp parallel for schedule(static) reduction(+ : clips)
  for (std::int64_t s = 0; s < static_cast<std::int64_t>(state.sites); ++s)
    clips += seedbank_update_site(&state.x[s], state.y.data() + s * state.colours,
                                  &mig_drift[s], params, relax, static_cast<std::uint64_t>(s),
                                  step_index, noise_seed);
  diag.clip_events += clips;
}

void step_seedbank_serial(SeedbankField& state, const SeedbankParams& params,
                          const MigrationOp& mig, std::uint64_t step_index,
                          std::uint64_t noise_seed, StepDiagnostics& diag) {
  validate(params);
  if (state.colours != static_cast<int>(params.exchange_rate.size()))
    throw std::invalid_argument("step_seedbank: colour count mismatch");
  std::vector<double> mig_drift(state.sites, 0.0);
  mig.add_drift(state.x, 1, mig_drift);
  std::vector<double> relax(params.exchange_rate.size());
  for (std::size_t m = 0; m < relax.size(); ++m)
    relax[m] = std::exp(-params.exchange_rate[m] * params.dt);
  std::uint64_t clips = 0;
  for (std::uint64_t s = 0; s < state.sites; ++s)
    clips += seedbank_update_site(&state.x[s], state.y.data() + s * state.colours,
                                  &mig_drift[s], params, relax, s, step_index, noise_seed);
  diag.clip_events += clips;
}

Trajectory run_mckean_vlasov(const McKeanVlasovParams& params, std::span<const double> theta,
                             std::span<const double> sample_times, Rng& rng) {
  const int K = params.K;
  if (static_cast<int>(theta.size()) != K)
    throw std::invalid_argument("run_mckean_vlasov: theta dimension mismatch");
  double tsum = 0.0;
  for (double v : theta) {
    if (v < 0.0) throw std::invalid_argument("run_mckean_vlasov: theta off the simplex");
    tsum += v;
  }
  if (std::abs(tsum - 1.0) > 1e-9)
    throw std::invalid_argument("run_mckean_vlasov: theta must sum to 1");

  FvParams fv;
  fv.K = K;
  fv.d = params.d;
  fv.m = params.m;
  fv.mutation = params.mutation;
  fv.s = params.s;
  fv.fitness = params.fitness;
  fv.dt = params.dt;
  validate(fv);

  std::vector<double> x(theta.begin(), theta.end());
  std::vector<double> drift(K), z(K), w(K);

  Trajectory out;
  double t = 0.0;
  std::uint64_t step = 0;
  for (double target : sample_times) {
    if (target < t) throw std::invalid_argument("run_mckean_vlasov: sample times must be sorted");
    while (t < target) {
      const double h = std::min(params.dt, target - t);
      for (int u = 0; u < K; ++u) drift[u] = params.c * (theta[u] - x[u]);
      if (params.m > 0.0) {
        for (int u = 0; u < K; ++u) {
          double inflow = 0.0;
          for (int v = 0; v < K; ++v) inflow += x[v] * params.mutation[v * K + u];
          drift[u] += params.m * (inflow - x[u]);
        }
      }
      if (params.s > 0.0) {
        double mean_fit = 0.0;
        for (int u = 0; u < K; ++u) mean_fit += params.fitness[u] * x[u];
        for (int u = 0; u < K; ++u) drift[u] += params.s * x[u] * (params.fitness[u] - mean_fit);
      }
      if (params.d > 0.0) {
        for (int u = 0; u < K; ++u) z[u] = rng.normal();
        fv_noise_transform(x, z, w);
      } else {
        std::fill(w.begin(), w.end(), 0.0);
      }
      const double ns = std::sqrt(params.d * h);
      double sum = 0.0;
      for (int u = 0; u < K; ++u) {
        double v = x[u] + h * drift[u] + ns * w[u];
        if (v < 0.0) v = 0.0;
        x[u] = v;
        sum += v;
      }
      if (!std::isfinite(sum) || sum <= 0.0) throw NumericalFailure(0, step);
      for (int u = 0; u < K; ++u) x[u] /= sum;
      t += h;
      ++step;
    }
    out.times.push_back(target);
    out.states.push_back(x);
  }
  return out;
}

ScalarMvRun run_mckean_vlasov_scalar(double c, double d, double theta, double x0, double T,
                                     double dt, Rng& rng,
                                     std::span<const double> predrawn_normals) {
  if (!(dt > 0.0) || !(T > 0.0)) throw std::invalid_argument("run_mckean_vlasov_scalar: bad dt/T");
  if (theta < 0.0 || theta > 1.0 || x0 < 0.0 || x0 > 1.0)
    throw std::invalid_argument("run_mckean_vlasov_scalar: state must lie in [0,1]");
  const std::uint64_t n_steps = static_cast<std::uint64_t>(std::llround(T / dt));
  if (!predrawn_normals.empty() && predrawn_normals.size() < n_steps)
    throw std::invalid_argument("run_mckean_vlasov_scalar: too few pre-drawn normals");

  ScalarMvRun out;
  out.values.reserve(n_steps + 1);
  double x = x0;
  out.values.push_back(x);
  const double sd = std::sqrt(d * dt);
  for (std::uint64_t i = 0; i < n_steps; ++i) {
    const double g = x * (1.0 - x);
    const double z = predrawn_normals.empty() ? rng.normal() : predrawn_normals[i];
    double v = x + dt * c * (theta - x) + sd * std::sqrt(std::max(g, 0.0)) * z;
    if (!std::isfinite(v)) throw NumericalFailure(0, i);
    if (v < 0.0) {
      v = 0.0;
      ++out.clip_events;
    } else if (v > 1.0) {
      v = 1.0;
      ++out.clip_events;
    }
    x = v;
    out.values.push_back(x);
  }
  return out;
}

GmapEstimate equilibrium_gmap(double c, double d, double theta,
                              const std::function<double(double)>& g, double T, double dt,
                              Rng& rng) {
  if (theta < 0.0 || theta > 1.0) throw std::invalid_argument("equilibrium_gmap: theta in [0,1]");
  const ScalarMvRun run = run_mckean_vlasov_scalar(c, d, theta, theta, T, dt, rng);
  const std::size_t burn = run.values.size() / 10;
  std::vector<double> series;
  series.reserve(run.values.size() - burn);
  for (std::size_t i = burn; i < run.values.size(); ++i) series.push_back(g(run.values[i]));
  const BatchMeansResult bm = batch_means(series, 32);
  GmapEstimate est;
  est.value = bm.mean;
  est.se = bm.se;
  est.burn_in = static_cast<double>(burn) * dt;
  est.batches = bm.batches;
  est.converged = bm.converged;
  return est;
}

}  // namespace spop
