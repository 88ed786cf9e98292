#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "spop/dynamics.hpp"
#include "spop/stats.hpp"

using namespace spop;

namespace {

// closed-form logistic solution of x' = s x (1 - x)
double logistic(double x0, double s, double t) {
  const double e = std::exp(s * t);
  return x0 * e / (1.0 - x0 + x0 * e);
}

}  // namespace

TEST_CASE("zero generator leaves the state unchanged") {
  const std::vector<double> theta = {0.5, 0.5};
  SimplexField f = SimplexField::constant(8, theta);
  const std::vector<double> before = f.x;
  FvParams p;
  p.K = 2;
  p.d = 0.0;
  p.dt = 1e-2;
  StepDiagnostics diag;
  for (int s = 0; s < 10; ++s) step_interacting_fv(f, p, MigrationOp::none(), s, 1, diag);
  CHECK(f.x == before);
  CHECK(diag.clip_events == 0);
}

TEST_CASE("selection drift follows the logistic closed form to O(dt^2) locally") {
  FvParams p;
  p.K = 2;
  p.s = 0.7;
  p.fitness = {1.0, 0.0};
  const double x0 = 0.3;

  auto one_step_error = [&](double dt) {
    SimplexField f = SimplexField::constant(1, std::vector<double>{x0, 1.0 - x0});
    FvParams q = p;
    q.dt = dt;
    StepDiagnostics diag;
    step_interacting_fv(f, q, MigrationOp::none(), 0, 1, diag);
    return std::abs(f.x[0] - logistic(x0, p.s, dt));
  };

  const double e1 = one_step_error(0.02);
  const double e2 = one_step_error(0.01);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.2));  // local order 2
  CHECK(e1 < 1e-5);
}

TEST_CASE("mutation drift matches M^T x - x") {
  FvParams p;
  p.K = 3;
  p.m = 0.4;
  p.mutation = {0.8, 0.1, 0.1,  //
                0.0, 0.9, 0.1,  //
                0.2, 0.0, 0.8};
  p.dt = 1e-3;
  const std::vector<double> x0 = {0.5, 0.3, 0.2};
  SimplexField f = SimplexField::constant(1, x0);
  StepDiagnostics diag;
  step_interacting_fv(f, p, MigrationOp::none(), 0, 1, diag);
  for (int u = 0; u < 3; ++u) {
    double inflow = 0.0;
    for (int v = 0; v < 3; ++v) inflow += x0[v] * p.mutation[v * 3 + u];
    const double expected = x0[u] + p.dt * p.m * (inflow - x0[u]);
    CHECK(f.x[u] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("migration alone conserves the spatial mean (doubly stochastic)") {
  FvParams p;
  p.K = 2;
  p.dt = 5e-3;
  SimplexField f = SimplexField::constant(2, std::vector<double>{0.5, 0.5});
  f.x = {0.2, 0.8, 0.9, 0.1};
  MigrationOp mig = MigrationOp::mean_field(1.7);
  StepDiagnostics diag;
  for (int s = 0; s < 50; ++s) step_interacting_fv(f, p, mig, s, 1, diag);
  CHECK((f.x[0] + f.x[2]) / 2.0 == doctest::Approx(0.55).epsilon(1e-12));
}

TEST_CASE("noise factorization reproduces the Fleming-Viot covariance") {
  Rng rng(4);
  for (int it = 0; it < 50; ++it) {
    const int K = 2 + static_cast<int>(rng.below(6));
    std::vector<double> x(K);
    double sum = 0.0;
    for (int u = 0; u < K; ++u) sum += x[u] = rng.exponential(1.0);
    for (int u = 0; u < K; ++u) x[u] /= sum;
    // build A explicitly: A = diag(sqrt x)(I - sqrt x sqrt x^T)
    std::vector<double> A(K * K);
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j)
        A[i * K + j] = std::sqrt(x[i]) * ((i == j ? 1.0 : 0.0) - std::sqrt(x[i] * x[j]));
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) {
        double aat = 0.0;
        for (int k = 0; k < K; ++k) aat += A[i * K + k] * A[j * K + k];
        const double target = (i == j ? x[i] : 0.0) - x[i] * x[j];
        CHECK(aat == doctest::Approx(target).epsilon(1e-10));
      }
    // the kernel applies the same transform
    std::vector<double> z(K), w(K);
    for (int u = 0; u < K; ++u) z[u] = rng.normal();
    fv_noise_transform(x, z, w);
    for (int i = 0; i < K; ++i) {
      double direct = 0.0;
      for (int j = 0; j < K; ++j) direct += A[i * K + j] * z[j];
      CHECK(w[i] == doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("simplex preservation under full dynamics") {
  FvParams p;
  p.K = 5;
  p.d = 1.0;
  p.m = 0.3;
  p.mutation.assign(25, 0.2);
  p.s = 0.5;
  p.fitness = {0.0, 0.3, 0.6, 0.9, 1.0};
  p.dt = 2e-3;
  const HierSpec spec{3, 3, {1.0, 0.4}};
  MigrationOp mig = MigrationOp::hier(spec);
  SimplexField f = SimplexField::constant(27, std::vector<double>(5, 0.2));
  StepDiagnostics diag;
  for (int s = 0; s < 1000; ++s) step_interacting_fv(f, p, mig, s, 99, diag);
  for (std::uint64_t site = 0; site < f.sites; ++site) {
    double sum = 0.0;
    for (int u = 0; u < 5; ++u) {
      const double v = f.x[site * 5 + u];
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("openmp and serial kernels are bit-identical") {
  FvParams p;
  p.K = 3;
  p.d = 0.8;
  p.dt = 1e-3;
  const HierSpec spec{4, 3, {1.0, 0.3}};
  MigrationOp mig = MigrationOp::hier(spec);
  SimplexField a = SimplexField::constant(64, std::vector<double>{0.5, 0.25, 0.25});
  SimplexField b = a;
  StepDiagnostics da, db;
  for (int s = 0; s < 25; ++s) {
    step_interacting_fv(a, p, mig, s, 7, da);
    step_interacting_fv_serial(b, p, mig, s, 7, db);
  }
  CHECK(std::memcmp(a.x.data(), b.x.data(), a.x.size() * sizeof(double)) == 0);
  CHECK(da.clip_events == db.clip_events);

  SeedbankParams sp;
  sp.b = 1.0;
  sp.dt = 1e-3;
  sp.exchange_rate = {0.5, 0.1};
  sp.relative_size = {1.0, 2.0};
  SeedbankField sa = SeedbankField::constant(64, 2, 0.5, 0.2);
  SeedbankField sb = sa;
  MigrationOp mf = MigrationOp::mean_field(1.0);
  for (int s = 0; s < 25; ++s) {
    step_seedbank(sa, sp, mf, s, 7, da);
    step_seedbank_serial(sb, sp, mf, s, 7, db);
  }
  CHECK(std::memcmp(sa.x.data(), sb.x.data(), sa.x.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(sa.y.data(), sb.y.data(), sa.y.size() * sizeof(double)) == 0);
}

TEST_CASE("neutral spatial mean is a martingale") {
  FvParams p;
  p.K = 2;
  p.d = 1.0;
  p.dt = 2e-3;
  MigrationOp mig = MigrationOp::mean_field(1.0);
  RunningStats drift;
  for (int rep = 0; rep < 400; ++rep) {
    SimplexField f = SimplexField::constant(16, std::vector<double>{0.5, 0.5});
    StepDiagnostics diag;
    const std::uint64_t seed = Rng::derive(1234, {static_cast<std::uint64_t>(rep)}).next();
    for (int s = 0; s < 500; ++s) step_interacting_fv(f, p, mig, s, seed, diag);
    double mean = 0.0;
    for (std::uint64_t site = 0; site < 16; ++site) mean += f.x[site * 2];
    drift.add(mean / 16.0 - 0.5);
  }
  CHECK(std::abs(drift.mean()) < 3.0 * drift.stderror());
}

TEST_CASE("seedbank: frozen bank when exchange rates vanish") {
  SeedbankParams p;
  p.b = 1.0;
  p.dt = 1e-3;
  p.exchange_rate = {0.0};
  p.relative_size = {1.0};
  SeedbankField f = SeedbankField::constant(8, 1, 0.5, 0.3);
  StepDiagnostics diag;
  for (int s = 0; s < 100; ++s) step_seedbank(f, p, MigrationOp::none(), s, 3, diag);
  for (std::uint64_t site = 0; site < 8; ++site) CHECK(f.y[site] == 0.3);
}

TEST_CASE("seedbank relaxes to the conserved weighted mean (2x2 ODE oracle)") {
  // b = 0, no migration, one colour with e = K = 1: x' = y - x, y' = x - y;
  // exact solution x(t) = 1/2 + 1/2 e^{-2t} from x0 = 1, y0 = 0.
  auto run_error = [&](double dt) {
    SeedbankParams p;
    p.b = 0.0;
    p.dt = dt;
    p.exchange_rate = {1.0};
    p.relative_size = {1.0};
    SeedbankField f = SeedbankField::constant(1, 1, 1.0, 0.0);
    StepDiagnostics diag;
    const int steps = static_cast<int>(std::llround(1.0 / dt));
    double worst = 0.0;
    for (int s = 0; s < steps; ++s) {
      step_seedbank(f, p, MigrationOp::none(), s, 1, diag);
      const double t = (s + 1) * dt;
      worst = std::max(worst, std::abs(f.x[0] - (0.5 + 0.5 * std::exp(-2.0 * t))));
    }
    return worst;
  };
  const double e1 = run_error(1e-2);
  const double e2 = run_error(5e-3);
  CHECK(e1 < 1e-3);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.25));  // global order 1
  // both components head toward the conserved mean 1/2
  SeedbankParams p;
  p.b = 0.0;
  p.dt = 1e-3;
  p.exchange_rate = {1.0};
  p.relative_size = {1.0};
  SeedbankField f = SeedbankField::constant(1, 1, 1.0, 0.0);
  StepDiagnostics diag;
  for (int s = 0; s < 10000; ++s) step_seedbank(f, p, MigrationOp::none(), s, 1, diag);
  CHECK(f.x[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(f.y[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("seedbank weighted sum is conserved exactly when b = 0") {
  SeedbankParams p;
  p.b = 0.0;
  p.dt = 4e-3;
  p.exchange_rate = {0.5, 0.25};
  p.relative_size = {1.0, 2.0};
  MigrationOp mig = MigrationOp::mean_field(0.8);
  SeedbankField f = SeedbankField::constant(8, 2, 0.5, 0.5);
  for (std::uint64_t s = 0; s < 8; ++s) {
    f.x[s] = 0.1 + 0.08 * static_cast<double>(s);
    f.y[s * 2] = 0.9 - 0.05 * static_cast<double>(s);
    f.y[s * 2 + 1] = 0.3 + 0.02 * static_cast<double>(s);
  }
  auto weighted_mean = [&]() {
    double acc = 0.0;
    for (std::uint64_t s = 0; s < 8; ++s)
      acc += f.x[s] + 1.0 * f.y[s * 2] + 2.0 * f.y[s * 2 + 1];
    return acc / 8.0;
  };
  const double before = weighted_mean();
  StepDiagnostics diag;
  for (int s = 0; s < 500; ++s) step_seedbank(f, p, mig, s, 5, diag);
  CHECK(diag.clip_events == 0);
  CHECK(weighted_mean() == doctest::Approx(before).epsilon(1e-13));
}

TEST_CASE("euler strong order one half under common noise") {
  // coarse increments are sums of fine ones; strong error ~ sqrt(dt).
  // the reference runs at dt/8 of the finer compared resolution so its own
  // error does not distort the ratio
  Rng rng(31);
  const double T = 1.0, c = 1.0, d = 0.5, theta = 0.5;
  const int nf = 4096;
  const double dt_f = T / nf;
  RunningStats err1, err2;
  for (int rep = 0; rep < 1500; ++rep) {
    std::vector<double> zf(nf);
    for (auto& z : zf) z = rng.normal();
    std::vector<double> z8(nf / 8), z16(nf / 16);
    for (int i = 0; i < nf / 8; ++i) {
      double acc = 0.0;
      for (int k = 0; k < 8; ++k) acc += zf[8 * i + k];
      z8[i] = acc / std::sqrt(8.0);
    }
    for (int i = 0; i < nf / 16; ++i) z16[i] = (z8[2 * i] + z8[2 * i + 1]) / std::sqrt(2.0);
    Rng dummy(0);
    const double xf =
        run_mckean_vlasov_scalar(c, d, theta, theta, T, dt_f, dummy, zf).values.back();
    const double x8 =
        run_mckean_vlasov_scalar(c, d, theta, theta, T, 8 * dt_f, dummy, z8).values.back();
    const double x16 =
        run_mckean_vlasov_scalar(c, d, theta, theta, T, 16 * dt_f, dummy, z16).values.back();
    err1.add(std::abs(x8 - xf));
    err2.add(std::abs(x16 - xf));
  }
  const double factor = err2.mean() / err1.mean();
  CHECK(factor >= 1.2);
  CHECK(factor <= 1.7);
}

TEST_CASE("mckean-vlasov: zero rates give a constant trajectory") {
  McKeanVlasovParams p;
  p.K = 2;
  p.c = 0.0;
  p.d = 0.0;
  p.dt = 1e-2;
  Rng rng(6);
  const std::vector<double> theta = {0.3, 0.7};
  const std::vector<double> times = {0.5, 1.0, 2.0};
  const Trajectory tr = run_mckean_vlasov(p, theta, times, rng);
  for (const auto& st : tr.states) {
    CHECK(st[0] == doctest::Approx(0.3));
    CHECK(st[1] == doctest::Approx(0.7));
  }
}

TEST_CASE("equilibrium moment: E[x(1-x)] = 2c theta(1-theta)/(2c+d)") {
  // stationary-moment identity from the generator of x(1-x); for
  // c = d = 1, theta = 1/2 the value is 1/6
  Rng rng(41);
  const GmapEstimate est =
      equilibrium_gmap(1.0, 1.0, 0.5, [](double x) { return x * (1.0 - x); }, 500.0, 1e-3, rng);
  CHECK(est.converged);
  CHECK(std::abs(est.value - 1.0 / 6.0) < 3.0 * est.se);

  // monotone decrease in d at fixed c
  double prev = est.value;
  for (double d : {4.0, 16.0}) {
    Rng r2 = Rng::derive(41, {static_cast<std::uint64_t>(d)});
    const GmapEstimate e =
        equilibrium_gmap(1.0, d, 0.5, [](double x) { return x * (1.0 - x); }, 500.0, 1e-3, r2);
    CHECK(e.value < prev);
    prev = e.value;
  }
}

TEST_CASE("equilibrium_gmap trivial cases") {
  Rng rng(7);
  const GmapEstimate zero =
      equilibrium_gmap(1.0, 1.0, 0.5, [](double) { return 0.0; }, 50.0, 1e-3, rng);
  CHECK(zero.value == 0.0);
  for (double theta : {0.0, 1.0}) {
    const GmapEstimate absorbed =
        equilibrium_gmap(1.0, 1.0, theta, [](double x) { return x * (1.0 - x); }, 50.0, 1e-3, rng);
    CHECK(absorbed.value == 0.0);
  }
}

TEST_CASE("invalid parameters are rejected") {
  FvParams p;
  p.K = 2;
  p.s = 1.0;
  p.fitness = {0.5, 1.0};  // inf psi != 0
  SimplexField f = SimplexField::constant(2, std::vector<double>{0.5, 0.5});
  StepDiagnostics diag;
  CHECK_THROWS_AS(step_interacting_fv(f, p, MigrationOp::none(), 0, 1, diag),
                  std::invalid_argument);
  p.fitness = {0.0, 1.0};
  p.dt = -1.0;
  CHECK_THROWS_AS(step_interacting_fv(f, p, MigrationOp::none(), 0, 1, diag),
                  std::invalid_argument);
}
