#include "spop/fss.hpp"

#include <algorithm>
#include <cmath>

#include "spop/stats.hpp"

namespace spop {

ValueWithError compute_dstar(double d, double ahat, double ahat_se) {
  if (!(d >= 0.0)) throw std::invalid_argument("compute_dstar: d must be >= 0");
  if (!(ahat >= 0.0)) throw std::invalid_argument("compute_dstar: Green estimate must be >= 0");
  const double denom = 1.0 + d * ahat;
  const double value = d / denom;
  // |d(d*)/d(ahat)| = d^2 / (1 + d ahat)^2
  const double se = d * d / (denom * denom) * ahat_se;
  return {value, se};
}

ValueWithError compute_dstar(double d, const GreenEstimate& green) {
  return compute_dstar(d, green.value, green.se);
}

KappaResult compute_kappa(std::span<const double> K_seq, double tail_tolerance) {
  double sum = 0.0;
  for (double k : K_seq) {
    if (!(k >= 0.0)) throw std::invalid_argument("compute_kappa: K_m must be >= 0");
    sum += k;
  }
  KappaResult out;
  const double denom = 1.0 + sum;
  out.value = 1.0 / (denom * denom);
  // A truncated sequence whose last term is still sizable has not converged.
  out.truncation_flagged = !K_seq.empty() && K_seq.back() > tail_tolerance;
  return out;
}

namespace {

// Per-colour stationary covariance system of the single-site seedbank
// McKean-Vlasov equilibrium (immigration c toward theta, volatility b g):
// unknowns V = Var(x), C_m = Cov(x, y_m); E[x(1-x)] = theta(1-theta) - V
// and the macroscopic volatility rate is b E[x(1-x)] / (theta(1-theta)).
// Derived by setting the generator of x^2, x y_m, y_l y_m to zero mean.
double seedbank_fg_rate(double c, double b, std::span<const double> e,
                        std::span<const double> K) {
  const std::size_t M = e.size();
  const std::size_t dim = M + 1;  // V, C_0..C_{M-1}
  std::vector<double> A(dim * dim, 0.0);
  std::vector<double> rhs(dim, 0.0);
  // Row 0: -2cV + 2 sum_m e_m K_m (C_m - V) + b(P - V) = 0, with
  // P = theta(1-theta) scaled out (work per unit of P): b P -> b.
  A[0] = -2.0 * c - b;
  for (std::size_t m = 0; m < M; ++m) {
    A[0] -= 2.0 * e[m] * K[m];
    A[0 * dim + 1 + m] = 2.0 * e[m] * K[m];
  }
  rhs[0] = -b;
  // Row m: -c C_m + sum_l e_l K_l [ (e_l C_m + e_m C_l)/(e_l+e_m) - C_m ]
  //         + e_m (V - C_m) = 0.
  for (std::size_t m = 0; m < M; ++m) {
    const std::size_t row = 1 + m;
    A[row * dim + 0] = e[m];
    double cm = -c - e[m];
    for (std::size_t l = 0; l < M; ++l) {
      const double w = e[l] * K[l];
      cm += w * (e[l] / (e[l] + e[m]) - 1.0);
      A[row * dim + 1 + l] += w * e[m] / (e[l] + e[m]);
    }
    A[row * dim + 1 + m] += cm;
  }
  // Gaussian elimination with partial pivoting.
  std::vector<double> x(rhs.begin(), rhs.end());
  for (std::size_t col = 0; col < dim; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < dim; ++r)
      if (std::abs(A[r * dim + col]) > std::abs(A[piv * dim + col])) piv = r;
    if (std::abs(A[piv * dim + col]) < 1e-14)
      throw std::runtime_error("seedbank_fg_rate: singular moment system");
    if (piv != col) {
      for (std::size_t cc = 0; cc < dim; ++cc) std::swap(A[piv * dim + cc], A[col * dim + cc]);
      std::swap(x[piv], x[col]);
    }
    for (std::size_t r = col + 1; r < dim; ++r) {
      const double f = A[r * dim + col] / A[col * dim + col];
      for (std::size_t cc = col; cc < dim; ++cc) A[r * dim + cc] -= f * A[col * dim + cc];
      x[r] -= f * x[col];
    }
  }
  for (std::size_t col = dim; col-- > 0;) {
    for (std::size_t cc = col + 1; cc < dim; ++cc) x[col] -= A[col * dim + cc] * x[cc];
    x[col] /= A[col * dim + col];
  }
  const double V_over_P = x[0];
  return b * (1.0 - V_over_P);  // decay rate of E[x(1-x)] relative units
}

struct ReplicaSeries {
  std::vector<double> theta_hat;  // per grid time
};

}  // namespace

FssReport run_fss(const FssExperiment& exp, std::uint64_t seed) {
  if (exp.sizes.empty()) throw std::invalid_argument("run_fss: empty size ladder");
  if (exp.t_grid.size() < 2 || exp.t_grid.front() != 0.0)
    throw std::invalid_argument("run_fss: t_grid must start at 0 and have >= 2 points");
  for (std::size_t i = 1; i < exp.t_grid.size(); ++i)
    if (exp.t_grid[i] <= exp.t_grid[i - 1])
      throw std::invalid_argument("run_fss: t_grid must increase");
  if (exp.replicas < 2) throw std::invalid_argument("run_fss: need >= 2 replicas");
  if (!(exp.dt > 0.0)) throw std::invalid_argument("run_fss: dt must be positive");
  const auto& model = exp.model;

  FssReport report;
  report.t_grid = exp.t_grid;

  // Reference decay rate of E[theta_hat (1 - theta_hat)].
  switch (model.kind) {
    case FssModel::Kind::MeanFieldFW: {
      report.model_name = "meanfield-fw";
      // F g identity: E_{nu_theta}[d x(1-x)] = 2cd/(2c+d) theta(1-theta).
      report.dstar = 2.0 * model.c * model.d / (2.0 * model.c + model.d);
      report.kappa = 1.0;
      break;
    }
    case FssModel::Kind::TorusFW: {
      report.model_name = "torus-fw";
      TorusSpec walk{model.torus_dim, 1, model.c, model.torus_steps};
      const std::uint64_t n_max = *std::max_element(exp.sizes.begin(), exp.sizes.end());
      double beta_max = 1.0;
      for (int i = 0; i < model.torus_dim; ++i) beta_max *= static_cast<double>(2 * n_max + 1);
      const double horizon = exp.green_horizon.value_or(beta_max);
      Rng grng = Rng::derive(seed, {0x9fee});
      const GreenEstimate green =
          green_at_zero_free_lattice(walk, horizon, exp.green_replicas, grng);
      const ValueWithError ds = compute_dstar(model.d, green);
      report.dstar = ds.value;
      report.dstar_se = ds.se;
      report.kappa = 1.0;
      break;
    }
    case FssModel::Kind::MeanFieldSeedbank: {
      report.model_name = "meanfield-seedbank";
      if (model.seed_e.size() != model.seed_K.size() || model.seed_e.empty())
        throw std::invalid_argument("run_fss: seedbank model needs matching e/K sequences");
      const KappaResult kap = compute_kappa(model.seed_K);
      report.kappa = kap.value;
      report.dstar = kap.value * seedbank_fg_rate(model.c, model.d, model.seed_e, model.seed_K);
      break;
    }
  }

  const double p0 = model.theta0 * (1.0 - model.theta0);
  for (double t : exp.t_grid) report.reference.push_back(p0 * std::exp(-report.dstar * t));

  const double rho = [&] {
    double acc = 0.0;
    for (double k : model.seed_K) acc += k;
    return acc;
  }();

  std::uint64_t budget_used = 0;
  for (std::size_t ni = 0; ni < exp.sizes.size(); ++ni) {
    const std::uint64_t n = exp.sizes[ni];
    std::uint64_t sites = n;
    if (model.kind == FssModel::Kind::TorusFW) {
      sites = 1;
      for (int i = 0; i < model.torus_dim; ++i) sites *= 2 * n + 1;
    }
    const double beta = static_cast<double>(sites);
    const double t_end = exp.t_grid.back() * beta;
    const std::uint64_t steps = static_cast<std::uint64_t>(std::ceil(t_end / exp.dt));
    const std::uint64_t cost = steps * sites * exp.replicas;
    budget_used += cost;
    if (budget_used > exp.max_site_steps)
      throw BudgetExceeded("run_fss: ladder entry n=" + std::to_string(n) + " needs " +
                           std::to_string(cost) + " site-steps, budget " +
                           std::to_string(exp.max_site_steps));

    std::vector<ReplicaSeries> reps(exp.replicas);
    MigrationOp torus_mig = model.kind == FssModel::Kind::TorusFW
                                ? MigrationOp::torus(TorusSpec{model.torus_dim,
                                                               static_cast<int>(n), model.c,
                                                               model.torus_steps})
                                : MigrationOp::none();

    #pragma omp parallel for schedule(dynamic)
    for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(exp.replicas); ++rep) {
      Rng rng = Rng::derive(seed, {0xf55, ni, static_cast<std::uint64_t>(rep)});
      ReplicaSeries series;
      series.theta_hat.resize(exp.t_grid.size());

      std::vector<double> x(sites, model.theta0);
      const std::size_t colours =
          model.kind == FssModel::Kind::MeanFieldSeedbank ? model.seed_e.size() : 0;
      std::vector<double> y(sites * colours, model.theta0);
      std::vector<double> relax(colours);
      for (std::size_t m = 0; m < colours; ++m)
        relax[m] = std::exp(-model.seed_e[m] * exp.dt);
      std::vector<double> drift;
      if (model.kind == FssModel::Kind::TorusFW) drift.resize(sites);

      auto theta_hat = [&]() {
        double sx = 0.0;
        for (double v : x) sx += v;
        if (colours == 0) return sx / static_cast<double>(sites);
        double sy = 0.0;
        for (std::uint64_t s = 0; s < sites; ++s)
          for (std::size_t m = 0; m < colours; ++m) sy += model.seed_K[m] * y[s * colours + m];
        return (sx + sy) / (static_cast<double>(sites) * (1.0 + rho));
      };

      double t = 0.0;
      series.theta_hat[0] = theta_hat();
      for (std::size_t ti = 1; ti < exp.t_grid.size(); ++ti) {
        const double target = exp.t_grid[ti] * beta;
        while (t < target) {
          const double h = std::min(exp.dt, target - t);
          const double sh = std::sqrt(model.d * h);
          switch (model.kind) {
            case FssModel::Kind::MeanFieldFW: {
              double mean = 0.0;
              for (double v : x) mean += v;
              mean /= static_cast<double>(sites);
              for (std::uint64_t s = 0; s < sites; ++s) {
                const double g = std::max(x[s] * (1.0 - x[s]), 0.0);
                double v = x[s] + h * model.c * (mean - x[s]) + sh * std::sqrt(g) * rng.normal();
                x[s] = std::clamp(v, 0.0, 1.0);
              }
              break;
            }
            case FssModel::Kind::TorusFW: {
              std::fill(drift.begin(), drift.end(), 0.0);
              torus_mig.add_drift(x, 1, drift);
              for (std::uint64_t s = 0; s < sites; ++s) {
                const double g = std::max(x[s] * (1.0 - x[s]), 0.0);
                double v = x[s] + h * drift[s] + sh * std::sqrt(g) * rng.normal();
                x[s] = std::clamp(v, 0.0, 1.0);
              }
              break;
            }
            case FssModel::Kind::MeanFieldSeedbank: {
              double mean = 0.0;
              for (double v : x) mean += v;
              mean /= static_cast<double>(sites);
              const bool full_step = h == exp.dt;
              for (std::uint64_t s = 0; s < sites; ++s) {
                const double x_old = x[s];
                double* ys = y.data() + s * colours;
                // exchange mirrors the exact y relaxation (conserves the
                // weighted sum when b = 0)
                double exchange = 0.0;
                for (std::size_t m = 0; m < colours; ++m) {
                  const double f = full_step ? relax[m] : std::exp(-model.seed_e[m] * h);
                  exchange += model.seed_K[m] * (ys[m] - x_old) * (1.0 - f);
                  ys[m] = x_old + (ys[m] - x_old) * f;
                }
                const double g = std::max(x_old * (1.0 - x_old), 0.0);
                double v = x_old + h * model.c * (mean - x_old) + exchange +
                           sh * std::sqrt(g) * rng.normal();
                x[s] = std::clamp(v, 0.0, 1.0);
              }
              break;
            }
          }
          t += h;
        }
        series.theta_hat[ti] = theta_hat();
      }
      reps[rep] = std::move(series);
    }

    FssLadderEntry entry;
    entry.n = n;
    entry.sites = sites;
    for (std::size_t ti = 0; ti < exp.t_grid.size(); ++ti) {
      RunningStats mom, mn;
      for (const auto& r : reps) {
        const double th = r.theta_hat[ti];
        mom.add(th * (1.0 - th));
        mn.add(th);
      }
      entry.moment.push_back(mom.mean());
      entry.moment_se.push_back(mom.stderror());
      entry.mean.push_back(mn.mean());
      entry.mean_se.push_back(mn.stderror());
      const double se = std::max(mom.stderror(), 1e-12);
      entry.zscore.push_back((mom.mean() - report.reference[ti]) / se);
    }
    // WLS decay-rate fit on ln(moment); weights 1/sigma_ln^2.
    std::vector<double> xs, ys, ws;
    for (std::size_t ti = 0; ti < exp.t_grid.size(); ++ti) {
      if (entry.moment[ti] <= 0.0) continue;
      const double sln = std::max(entry.moment_se[ti] / entry.moment[ti], 1e-6);
      xs.push_back(exp.t_grid[ti]);
      ys.push_back(std::log(entry.moment[ti]));
      ws.push_back(1.0 / (sln * sln));
    }
    if (xs.size() >= 2) {
      const LineFit fit = weighted_line_fit(xs, ys, ws);
      entry.fitted_rate = -fit.slope;
      entry.fitted_rate_se = fit.slope_se;
    }
    report.ladder.push_back(std::move(entry));
  }
  return report;
}

GenealogySample genealogical_rescale(const GenealogySample& sample, std::uint64_t n_sites) {
  if (n_sites == 0) throw std::invalid_argument("genealogical_rescale: need n_sites >= 1");
  GenealogySample out = sample;
  const double f = 1.0 / static_cast<double>(n_sites);
  for (double& v : out.dist) v *= f;
  out.t = sample.t * f;
  return out;
}

}  // namespace spop
