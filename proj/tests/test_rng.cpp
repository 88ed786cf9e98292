#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "spop/rng.hpp"
#include "spop/stats.hpp"

using namespace spop;

TEST_CASE("streams are deterministic and key-separated") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());

  Rng c = Rng::derive(1, {2, 3});
  Rng d = Rng::derive(1, {2, 3});
  Rng e = Rng::derive(1, {3, 2});
  CHECK(c.next() == d.next());
  CHECK(c.next() != e.next());  // order-sensitive keys

  // adding a replica does not perturb earlier streams
  Rng r0 = Rng::derive(7, {0, 0});
  Rng r0_again = Rng::derive(7, {0, 0});
  (void)Rng::derive(7, {0, 1});
  CHECK(r0.next() == r0_again.next());
}

TEST_CASE("u01 and below ranges") {
  Rng rng(123);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.u01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) CHECK(rng.below(7) < 7);
  CHECK_THROWS_AS(rng.below(0), std::invalid_argument);
}

TEST_CASE("below is uniform (chi-square at 1%)") {
  Rng rng(5);
  const std::uint64_t n = 9;
  std::vector<std::uint64_t> counts(n, 0);
  const int draws = 90000;
  for (int i = 0; i < draws; ++i) ++counts[rng.below(n)];
  std::vector<double> expected(n, draws / static_cast<double>(n));
  const double stat = chi2_statistic(counts, expected);
  CHECK(chi2_sf(stat, static_cast<double>(n - 1)) > 0.01);
}

TEST_CASE("normal moments") {
  Rng rng(99);
  RunningStats rs;
  for (int i = 0; i < 200000; ++i) rs.add(rng.normal());
  CHECK(std::abs(rs.mean()) < 5.0 / std::sqrt(200000.0));
  CHECK(rs.variance() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("exponential mean") {
  Rng rng(7);
  RunningStats rs;
  for (int i = 0; i < 100000; ++i) rs.add(rng.exponential(2.0));
  CHECK(rs.mean() == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS_AS(rng.exponential(0.0), std::invalid_argument);
}

TEST_CASE("beta(2,2) moments") {
  // Beta(a,b): mean a/(a+b), var ab/((a+b)^2 (a+b+1))
  Rng rng(11);
  RunningStats rs;
  for (int i = 0; i < 100000; ++i) rs.add(rng.beta(2.0, 2.0));
  CHECK(rs.mean() == doctest::Approx(0.5).epsilon(0.01));
  CHECK(rs.variance() == doctest::Approx(0.05).epsilon(0.05));
}

TEST_CASE("binomial matches exact moments on both code paths") {
  Rng rng(13);
  // small mean: inversion path
  {
    RunningStats rs;
    for (int i = 0; i < 50000; ++i) rs.add(static_cast<double>(rng.binomial(200, 0.01)));
    CHECK(rs.mean() == doctest::Approx(2.0).epsilon(0.05));
    CHECK(rs.variance() == doctest::Approx(200 * 0.01 * 0.99).epsilon(0.1));
  }
  // large mean: Bernoulli sweep path
  {
    RunningStats rs;
    for (int i = 0; i < 20000; ++i) rs.add(static_cast<double>(rng.binomial(200, 0.4)));
    CHECK(rs.mean() == doctest::Approx(80.0).epsilon(0.01));
    CHECK(rs.variance() == doctest::Approx(200 * 0.4 * 0.6).epsilon(0.1));
  }
  CHECK(rng.binomial(10, 0.0) == 0);
  CHECK(rng.binomial(10, 1.0) == 10);
}

TEST_CASE("categorical and DiscreteSampler frequencies") {
  Rng rng(17);
  const std::vector<double> w = {1.0, 3.0, 6.0};
  std::vector<std::uint64_t> counts(3, 0);
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++counts[rng.categorical(w)];
  std::vector<double> expected = {draws * 0.1, draws * 0.3, draws * 0.6};
  CHECK(chi2_sf(chi2_statistic(counts, expected), 2.0) > 0.01);

  DiscreteSampler ds(w);
  std::fill(counts.begin(), counts.end(), 0);
  for (int i = 0; i < draws; ++i) ++counts[ds.sample(rng)];
  CHECK(chi2_sf(chi2_statistic(counts, expected), 2.0) > 0.01);

  CHECK_THROWS_AS(rng.categorical(std::vector<double>{0.0, 0.0}), std::invalid_argument);
}
