#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "spop/genealogy.hpp"
#include "spop/stats.hpp"

using namespace spop;

namespace {

// 4-leaf ultrametric with merge times: (0,1) at t-1, +2 at t-2, +3 at t-3,
// sampled at time t = 4.
GenealogySample four_leaf_sample() {
  GenealogySample s;
  s.n = 4;
  s.t = 4.0;
  s.dist.assign(16, 0.0);
  s.censored.assign(16, 0);
  s.marks.assign(4, {0, 0});
  s.set(0, 1, 2.0, false);
  s.set(0, 2, 4.0, false);
  s.set(1, 2, 4.0, false);
  s.set(0, 3, 6.0, false);
  s.set(1, 3, 6.0, false);
  s.set(2, 3, 6.0, false);
  return s;
}

GenealogySample moran_sample(int M, double d, double T, int n, std::uint64_t seed) {
  Rng rng(seed);
  const HierSpec spec{2, 0, {}};
  ParticleSystem sys(spec.group(), M);
  sys.init_two_types(0.5, rng);
  CanningsRates rates;
  rates.d = d;
  run_cannings(sys, spec, rates, T, rng);
  return extract_sample(sys, n, {}, rng);
}

}  // namespace

TEST_CASE("merge time from a hand-traced two-lineage log") {
  // founders 0,1; at s = 0.75 lineage 2 is born to parent 0
  std::vector<AncestryRecord> log = {{0.75, 2, 0, 0, 0}};
  const LineageTable t = LineageTable::build(log, 2);
  // individuals 2 and 0 at time 3: diverged when 2 was born
  CHECK(t.merge_time(2, 0, 3.0) == 0.75);
  CHECK(t.merge_time(0, 2, 3.0) == 0.75);
  // distinct founders never merge
  CHECK(!t.merge_time(0, 1, 3.0).has_value());
  // same individual: merge at the sample time (distance 0)
  CHECK(t.merge_time(2, 2, 3.0) == 3.0);
}

TEST_CASE("malformed logs raise IntegrityError with the offending record") {
  // times decrease
  {
    std::vector<AncestryRecord> log = {{1.0, 2, 0, 0, 0}, {0.5, 3, 2, 0, 0}};
    CHECK_THROWS_AS(LineageTable::build(log, 2), IntegrityError);
    try {
      LineageTable::build(log, 2);
    } catch (const IntegrityError& e) {
      CHECK(e.record == 1);
    }
  }
  // child id out of sequence (reused)
  {
    std::vector<AncestryRecord> log = {{1.0, 2, 0, 0, 0}, {2.0, 2, 0, 0, 0}};
    CHECK_THROWS_AS(LineageTable::build(log, 2), IntegrityError);
  }
  // parent younger than child
  {
    std::vector<AncestryRecord> log = {{1.0, 2, 3, 0, 0}};
    CHECK_THROWS_AS(LineageTable::build(log, 2), IntegrityError);
  }
}

TEST_CASE("extract_sample basics on an engine run") {
  const GenealogySample s = moran_sample(10, 1.0, 8.0, 5, 42);
  CHECK(s.n == 5);
  CHECK(s.t == 8.0);
  for (int i = 0; i < s.n; ++i) CHECK(s.d(i, i) == 0.0);
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) {
      CHECK(s.d(i, j) == s.d(j, i));
      CHECK(s.d(i, j) <= 2.0 * s.t + 1e-12);
    }
  CHECK(ultrametric_violation(s) <= 1e-9);
  // marks: single site, two types
  for (const auto& m : s.marks) {
    CHECK(m.site == 0);
    CHECK((m.type == 0 || m.type == 1));
  }
}

TEST_CASE("n = 1 gives the zero matrix; oversampling forces duplicates") {
  const GenealogySample one = moran_sample(10, 1.0, 2.0, 1, 43);
  CHECK(one.n == 1);
  CHECK(one.dist[0] == 0.0);

  // sampling with replacement: 30 draws from 10 individuals must repeat
  const GenealogySample big = moran_sample(10, 1.0, 2.0, 30, 44);
  double min_off = 1e300;
  for (int i = 0; i < big.n; ++i)
    for (int j = i + 1; j < big.n; ++j) min_off = std::min(min_off, big.d(i, j));
  CHECK(min_off == 0.0);
}

TEST_CASE("subsampling preserves ultrametricity") {
  const GenealogySample s = moran_sample(30, 1.0, 10.0, 12, 45);
  // principal submatrix on indices {0, 2, 5, 7, 11}
  const std::vector<int> keep = {0, 2, 5, 7, 11};
  GenealogySample sub;
  sub.n = static_cast<int>(keep.size());
  sub.t = s.t;
  sub.dist.assign(sub.n * sub.n, 0.0);
  sub.censored.assign(sub.n * sub.n, 0);
  sub.marks.assign(sub.n, {0, 0});
  for (int i = 0; i < sub.n; ++i)
    for (int j = 0; j < sub.n; ++j)
      sub.dist[i * sub.n + j] = s.d(keep[i], keep[j]);
  CHECK(ultrametric_violation(sub) <= 1e-9);
}

TEST_CASE("polynomial statistic: normalization and constants") {
  const GenealogySample s = four_leaf_sample();
  // phi = 1, g = 1 integrates the sampling measure: exactly 1
  const PolyResult unit = polynomial_statistic(s, 3, nullptr, nullptr);
  CHECK(unit.exhaustive);
  CHECK(unit.value == 1.0);

  // constant distance matrix: mean pairwise distance is that constant
  GenealogySample flat = s;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i != j) flat.dist[i * 4 + j] = 2.0 * flat.t;
  const PolyResult mean = polynomial_statistic(
      flat, 2, [](std::span<const double> d) { return d[0]; }, nullptr);
  CHECK(mean.value == doctest::Approx(2.0 * flat.t));
}

TEST_CASE("polynomial statistic: subsampled estimate is unbiased") {
  const GenealogySample s = moran_sample(8, 1.0, 6.0, 8, 46);
  const PhiFn phi = [](std::span<const double> d) { return std::exp(-d[0]) + 0.3 * d[1]; };
  const PolyResult exact = polynomial_statistic(s, 3, phi, nullptr);
  REQUIRE(exact.exhaustive);
  Rng rng(5);
  const PolyResult mc = polynomial_statistic(s, 3, phi, nullptr, 10, 40000, &rng);
  CHECK_FALSE(mc.exhaustive);
  CHECK(std::abs(mc.value - exact.value) < 4.0 * mc.se);
}

TEST_CASE("sample polynomials are unbiased for the population polynomial") {
  // population of P = 6 individuals; its degree-2 polynomial integrates
  // mu_pop^{(x)2}, i.e. ordered pairs of independent uniform draws,
  // repeats included (distance 0 on the diagonal)
  const GenealogySample pop = moran_sample(6, 1.0, 5.0, 6, 49);
  auto phi = [](std::span<const double> d) { return std::exp(-d[0]); };
  double pop_value = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) pop_value += phi(std::vector<double>{pop.d(i, j)});
  pop_value /= 36.0;

  Rng rng(50);
  RunningStats rs;
  for (int rep = 0; rep < 4000; ++rep) {
    // n = 4 individuals drawn uniformly with replacement
    GenealogySample s;
    s.n = 4;
    s.t = pop.t;
    s.dist.assign(16, 0.0);
    s.censored.assign(16, 0);
    s.marks.assign(4, {0, 0});
    int pick[4];
    for (int a = 0; a < 4; ++a) pick[a] = static_cast<int>(rng.below(6));
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) s.dist[a * 4 + b] = pop.d(pick[a], pick[b]);
    rs.add(polynomial_statistic(s, 2, phi, nullptr).value);
  }
  CHECK(std::abs(rs.mean() - pop_value) < 3.5 * rs.stderror());
}

TEST_CASE("polynomial statistic uses marks") {
  GenealogySample s = four_leaf_sample();
  s.marks = {{0, 1}, {0, 1}, {0, 0}, {0, 0}};
  const MarkFn g = [](std::span<const GenealogySample::Mark> m) {
    return static_cast<double>(m[0].type);
  };
  const PolyResult frac = polynomial_statistic(s, 1, nullptr, g);
  CHECK(frac.value == doctest::Approx(0.5));
}

TEST_CASE("laplace transform of the stationary pair distance (coalescent oracle)") {
  // E[e^{-dist}] = lambda/(lambda + 2) for pair-coalescence rate lambda = d
  const double d = 1.0;
  RunningStats rs;
  for (int rep = 0; rep < 2500; ++rep) {
    const GenealogySample s = moran_sample(60, d, 25.0, 2, 7000 + rep);
    if (s.is_censored(0, 1)) continue;  // negligible at T = 25
    rs.add(std::exp(-s.d(0, 1)));
  }
  CHECK(std::abs(rs.mean() - d / (d + 2.0)) < 4.0 * rs.stderror());
}

TEST_CASE("transform_distances endpoint and midpoint values") {
  GenealogySample s = four_leaf_sample();
  s.set(0, 1, 0.0, false);
  s.set(0, 2, std::log(2.0), false);
  s.set(1, 2, std::log(2.0), false);
  s.set(2, 3, 8.0, true);  // censored pair
  s.set(0, 3, 8.0, true);
  s.set(1, 3, 8.0, true);
  const GenealogySample tr = transform_distances(s);
  CHECK(tr.d(0, 1) == 0.0);
  CHECK(tr.d(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(tr.d(2, 3) == 1.0);
  CHECK_FALSE(tr.is_censored(2, 3));
  CHECK(ultrametric_violation(tr) <= 1e-9);  // monotone transform preserves it
}

TEST_CASE("tmrca: trivial and censored cases") {
  GenealogySample one;
  one.n = 1;
  one.t = 3.0;
  one.dist.assign(1, 0.0);
  one.censored.assign(1, 0);
  one.marks.assign(1, {0, 0});
  CHECK(tmrca(one) == 0.0);

  const GenealogySample s = four_leaf_sample();
  CHECK(tmrca(s) == 3.0);

  GenealogySample cens = s;
  cens.set(0, 3, 8.0, true);
  CHECK(!tmrca(cens).has_value());
}

TEST_CASE("kingman tmrca expectation (2/d)(1 - 1/n) at small scale") {
  // n = 6, d = 1: E[tMRCA] = 2(1 - 1/6) = 5/3
  RunningStats rs;
  for (int rep = 0; rep < 400; ++rep) {
    const GenealogySample s = moran_sample(40, 1.0, 30.0, 6, 9000 + rep);
    const auto tm = tmrca(s);
    if (tm) rs.add(*tm);
  }
  CHECK(std::abs(rs.mean() - 5.0 / 3.0) < 3.5 * rs.stderror());
}

TEST_CASE("ball decomposition: hand oracle and trivial limits") {
  const GenealogySample s = four_leaf_sample();
  // h = 1.5: threshold 2h = 3 separates the t-1 merge from the others
  const BallDecomposition bd = ball_decomposition(s, 1.5);
  REQUIRE(bd.classes.size() == 3);
  CHECK(bd.classes[0] == std::vector<int>{0, 1});
  CHECK(bd.classes[1] == std::vector<int>{2});
  CHECK(bd.classes[2] == std::vector<int>{3});
  CHECK(bd.mass[0] == doctest::Approx(0.5));

  // h above the tmrca: one class
  CHECK(ball_decomposition(s, 3.5).classes.size() == 1);
  // h below every positive distance: singletons
  CHECK(ball_decomposition(s, 0.5).classes.size() == 4);
}

TEST_CASE("ball decomposition refines as h decreases") {
  const GenealogySample s = moran_sample(40, 1.0, 20.0, 10, 47);
  const auto coarse = ball_decomposition(s, 4.0);
  const auto fine = ball_decomposition(s, 1.0);
  // every fine class is contained in one coarse class
  std::vector<int> coarse_of(s.n, -1);
  for (std::size_t c = 0; c < coarse.classes.size(); ++c)
    for (int i : coarse.classes[c]) coarse_of[i] = static_cast<int>(c);
  for (const auto& cls : fine.classes) {
    for (int i : cls) CHECK(coarse_of[i] == coarse_of[cls[0]]);
  }
  double total = 0.0;
  for (double m : fine.mass) total += m;
  CHECK(total == doctest::Approx(1.0));
}

TEST_CASE("ball decomposition rejects non-ultrametric input") {
  GenealogySample bad = four_leaf_sample();
  bad.dist[0 * 4 + 1] = 5.9;  // break symmetry-consistent ultrametricity
  bad.dist[1 * 4 + 0] = 5.9;
  CHECK(ultrametric_violation(bad) > 1e-9);
  CHECK_THROWS_AS(ball_decomposition(bad, 1.5), IntegrityError);
}

TEST_CASE("exchangeability: pair distances share one law across positions") {
  std::vector<double> d01, d23;
  for (int rep = 0; rep < 400; ++rep) {
    const GenealogySample s = moran_sample(30, 1.0, 20.0, 4, 11000 + rep);
    d01.push_back(s.d(0, 1));
    d23.push_back(s.d(2, 3));
  }
  CHECK(ks_two_sample(d01, d23).pvalue > 0.01);
}

TEST_CASE("csv round trip is bit-exact") {
  GenealogySample s = moran_sample(20, 1.0, 7.3, 6, 48);
  s.dist[1 * 6 + 2] = s.dist[2 * 6 + 1] = 0.1 + 1e-17;  // awkward double
  const std::string text = to_csv(s);
  const GenealogySample back = sample_from_csv(text);
  CHECK(back.n == s.n);
  CHECK(back.t == s.t);
  REQUIRE(back.dist.size() == s.dist.size());
  for (std::size_t i = 0; i < s.dist.size(); ++i) CHECK(back.dist[i] == s.dist[i]);
  CHECK(back.censored == s.censored);
  for (int i = 0; i < s.n; ++i) {
    CHECK(back.marks[i].site == s.marks[i].site);
    CHECK(back.marks[i].type == s.marks[i].type);
  }
  CHECK(to_csv(back) == text);
}
