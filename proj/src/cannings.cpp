#include "spop/cannings.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spop/dynamics.hpp"
#include "spop/errors.hpp"
#include "spop/stats.hpp"

namespace spop {

LambdaMeasure LambdaMeasure::dirac(double r, double mass) {
  LambdaMeasure lm;
  lm.atoms.push_back({r, mass});
  return lm;
}

LambdaMeasure LambdaMeasure::uniform(double mass) {
  LambdaMeasure lm;
  lm.uniform_mass = mass;
  return lm;
}

LambdaMeasure LambdaMeasure::beta(double a, double b, double mass) {
  LambdaMeasure lm;
  lm.beta_mass = mass;
  lm.beta_a = a;
  lm.beta_b = b;
  return lm;
}

void validate(const LambdaMeasure& lm) {
  if (!(lm.kingman_mass >= 0.0)) throw std::invalid_argument("LambdaMeasure: kingman mass < 0");
  for (const auto& a : lm.atoms) {
    if (!(a.r > 0.0) || a.r > 1.0)
      throw std::invalid_argument("LambdaMeasure: atom locations must lie in (0,1]");
    if (!(a.mass >= 0.0)) throw std::invalid_argument("LambdaMeasure: atom mass < 0");
  }
  if (!(lm.uniform_mass >= 0.0) || !(lm.beta_mass >= 0.0))
    throw std::invalid_argument("LambdaMeasure: continuous masses must be >= 0");
  if (lm.beta_mass > 0.0) {
    if (!(lm.beta_a >= 1.0))
      throw std::invalid_argument("LambdaMeasure: beta continuous part needs a >= 1");
    if (!(lm.beta_b > 0.0)) throw std::invalid_argument("LambdaMeasure: beta b must be positive");
  }
  if (!std::isfinite(lm.total_mass()))
    throw std::invalid_argument("LambdaMeasure: total mass must be finite");
}

namespace {

double beta_norm(double a, double b) {
  return std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b));
}

// Composite Simpson on a log grid for integral_lo^hi f(r) dr.
template <typename F>
double log_simpson(F&& f, double lo, double hi, int panels = 4096) {
  const double ulo = std::log(lo), uhi = std::log(hi);
  const double h = (uhi - ulo) / panels;
  auto g = [&](double u) {
    const double r = std::exp(u);
    return f(r) * r;
  };
  double acc = g(ulo) + g(uhi);
  for (int i = 1; i < panels; ++i) acc += g(ulo + h * i) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

}  // namespace

double LambdaMeasure::total_mass() const {
  double m = uniform_mass + beta_mass;
  for (const auto& a : atoms) m += a.mass;
  return m;
}

double LambdaMeasure::mass_below(double eps) const {
  double m = 0.0;
  for (const auto& a : atoms)
    if (a.r < eps) m += a.mass;
  m += uniform_mass * std::min(eps, 1.0);
  if (beta_mass > 0.0 && eps > 0.0) {
    const double c = beta_norm(beta_a, beta_b) * beta_mass;
    m += log_simpson(
        [&](double r) { return c * std::pow(r, beta_a - 1.0) * std::pow(1.0 - r, beta_b - 1.0); },
        std::min(eps, 1.0) * 1e-6, std::min(eps, 1.0));
  }
  return m;
}

double LambdaMeasure::star_rate(double eps) const {
  if (!(eps > 0.0) || eps > 1.0)
    throw std::invalid_argument("LambdaMeasure: cutoff eps must lie in (0,1]");
  double rate = 0.0;
  for (const auto& a : atoms)
    if (a.r >= eps) rate += a.mass / (a.r * a.r);
  rate += uniform_mass * (1.0 / eps - 1.0);
  if (beta_mass > 0.0 && eps < 1.0) {
    const double c = beta_norm(beta_a, beta_b) * beta_mass;
    rate += log_simpson(
        [&](double r) { return c * std::pow(r, beta_a - 3.0) * std::pow(1.0 - r, beta_b - 1.0); },
        eps, 1.0);
  }
  return rate;
}

double LambdaMeasure::sample_r(double eps, Rng& rng) const {
  // Component choice proportional to the Lambda* rate contributions.
  std::vector<double> w;
  w.reserve(atoms.size() + 2);
  for (const auto& a : atoms) w.push_back(a.r >= eps ? a.mass / (a.r * a.r) : 0.0);
  w.push_back(uniform_mass > 0.0 ? uniform_mass * (1.0 / eps - 1.0) : 0.0);
  double beta_rate = 0.0;
  if (beta_mass > 0.0 && eps < 1.0) {
    const double c = beta_norm(beta_a, beta_b) * beta_mass;
    beta_rate = log_simpson(
        [&](double r) { return c * std::pow(r, beta_a - 3.0) * std::pow(1.0 - r, beta_b - 1.0); },
        eps, 1.0);
  }
  w.push_back(beta_rate);

  const std::size_t pick = rng.categorical(w);
  if (pick < atoms.size()) return atoms[pick].r;
  if (pick == atoms.size()) {
    // Inverse CDF of density proportional to r^{-2} on [eps, 1].
    const double u = rng.u01();
    return 1.0 / (1.0 / eps - u * (1.0 / eps - 1.0));
  }
  // Beta part: rejection against the r^{-2} proposal.  The acceptance kernel
  // r^{a-1}(1-r)^{b-1} is bounded on [eps,1] since a >= 1.
  const double mode = std::clamp((beta_a - 1.0) / std::max(beta_a + beta_b - 2.0, 1e-12), eps, 1.0);
  auto kernel = [&](double r) {
    return std::pow(r, beta_a - 1.0) * std::pow(1.0 - r, beta_b - 1.0);
  };
  const double kmax = std::max({kernel(mode), kernel(eps), kernel(1.0 - 1e-12)});
  for (;;) {
    const double u = rng.u01();
    const double r = 1.0 / (1.0 / eps - u * (1.0 / eps - 1.0));
    if (rng.u01() * kmax <= kernel(r)) return r;
  }
}

std::pair<double, double> sample_lambda_event(const LambdaMeasure& lm, double eps, Rng& rng) {
  validate(lm);
  const double rate = lm.star_rate(eps);
  if (rate <= 0.0) return {std::numeric_limits<double>::infinity(), 0.0};
  return {rng.exponential(rate), lm.sample_r(eps, rng)};
}

ParticleSystem::ParticleSystem(const HierGroup& geo, int per_site) : geo_(geo), M_(per_site) {
  if (per_site < 1) throw std::invalid_argument("ParticleSystem: need >= 1 individual per site");
  pop_.resize(geo_.size() * static_cast<std::uint64_t>(M_));
  for (std::uint64_t i = 0; i < pop_.size(); ++i) pop_[i] = {0, i};
  next_lineage_ = pop_.size();
}

void ParticleSystem::init_two_types(double theta1, Rng& rng) {
  if (theta1 < 0.0 || theta1 > 1.0)
    throw std::invalid_argument("ParticleSystem: theta must lie in [0,1]");
  for (auto& ind : pop_) ind.type = rng.u01() < theta1 ? 1 : 0;
}

void ParticleSystem::init_types(std::span<const std::int32_t> types) {
  if (types.size() != pop_.size())
    throw std::invalid_argument("ParticleSystem: type vector size mismatch");
  for (std::size_t i = 0; i < types.size(); ++i) pop_[i].type = types[i];
}

double ParticleSystem::site_frequency(std::uint64_t site, std::int32_t type) const {
  std::uint64_t cnt = 0;
  for (int i = 0; i < M_; ++i)
    if (pop_[site * M_ + i].type == type) ++cnt;
  return static_cast<double>(cnt) / M_;
}

double ParticleSystem::global_frequency(std::int32_t type) const {
  std::uint64_t cnt = 0;
  for (const auto& ind : pop_)
    if (ind.type == type) ++cnt;
  return static_cast<double>(cnt) / static_cast<double>(pop_.size());
}

namespace {

// B distinct indices in [0, n); Floyd's method for small B, partial shuffle
// otherwise.
void sample_distinct(std::uint64_t n, std::uint64_t B, Rng& rng, std::vector<std::uint32_t>& out) {
  out.clear();
  if (B == 0) return;
  if (B * 8 >= n) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    for (std::uint64_t i = 0; i < B; ++i) {
      const std::uint64_t j = i + rng.below(n - i);
      std::swap(idx[i], idx[j]);
      out.push_back(idx[i]);
    }
    return;
  }
  for (std::uint64_t j = n - B; j < n; ++j) {
    const std::uint32_t t = static_cast<std::uint32_t>(rng.below(j + 1));
    if (std::find(out.begin(), out.end(), t) != out.end())
      out.push_back(static_cast<std::uint32_t>(j));
    else
      out.push_back(t);
  }
}

}  // namespace

std::uint64_t apply_lambda_resampling(std::span<Individual> block, double r, double time,
                                      std::uint32_t site, std::int32_t level,
                                      std::vector<AncestryRecord>& log,
                                      std::uint64_t& next_lineage, Rng& rng) {
  if (block.empty()) throw std::invalid_argument("apply_lambda_resampling: empty block");
  if (!(r > 0.0) || r > 1.0)
    throw std::invalid_argument("apply_lambda_resampling: r must lie in (0,1]");
  const std::uint64_t B = rng.binomial(block.size(), r);
  if (B < 2) return 0;
  static thread_local std::vector<std::uint32_t> marked;
  sample_distinct(block.size(), B, rng, marked);
  const std::uint32_t parent_pos = marked[rng.below(B)];
  const Individual parent = block[parent_pos];
  std::uint64_t replaced = 0;
  for (std::uint32_t pos : marked) {
    if (pos == parent_pos) continue;
    const std::uint64_t child = next_lineage++;
    log.push_back({time, child, parent.lineage, site, level});
    block[pos] = {parent.type, child};
    ++replaced;
  }
  return replaced;
}

CanningsRunStats run_cannings(ParticleSystem& sys, const HierSpec& spec,
                              const CanningsRates& rates, double T, Rng& rng,
                              std::uint64_t max_events) {
  validate(spec);
  validate(rates.lambda0);
  for (const auto& lm : rates.blocks) {
    validate(lm);
    if (lm.kingman_mass > 0.0)
      throw std::invalid_argument("run_cannings: Kingman atoms in block measures not supported");
  }
  if (!(rates.d >= 0.0)) throw std::invalid_argument("run_cannings: d must be >= 0");
  if (static_cast<int>(rates.blocks.size()) > spec.L)
    throw std::invalid_argument("run_cannings: more block levels than the geography has");
  const HierGroup& geo = sys.geography();
  if (geo.N() != spec.N || geo.L() != spec.L)
    throw std::invalid_argument("run_cannings: system/geography mismatch");

  const std::uint64_t S = geo.size();
  const int M = sys.per_site();
  const double mig_rate_ind = spec.jump_rate();
  const double pair_rate = rates.d + rates.lambda0.kingman_mass;
  const double pairs_per_site = 0.5 * M * (M - 1);

  CanningsRunStats stats;
  stats.dropped_pair_rate_local = rates.lambda0.mass_below(rates.eps);

  // Category rates are constant: per-site sizes never change.
  std::vector<double> cat;
  cat.push_back(static_cast<double>(S) * M * mig_rate_ind);        // 0: migration
  cat.push_back(static_cast<double>(S) * pair_rate * pairs_per_site);  // 1: kingman
  cat.push_back(static_cast<double>(S) * rates.lambda0.star_rate(rates.eps));  // 2: local lambda
  for (std::size_t k = 1; k <= rates.blocks.size(); ++k) {
    const double balls = static_cast<double>(S) / static_cast<double>(geo.ball_size(static_cast<int>(k)));
    const double per_ball =
        rates.blocks[k - 1].star_rate(rates.eps) / std::pow(static_cast<double>(spec.N), 2.0 * k);
    cat.push_back(balls * per_ball);
    stats.dropped_pair_rate_block.push_back(rates.blocks[k - 1].mass_below(rates.eps));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < cat.size(); ++i) {
    if (!std::isfinite(cat[i]))
      throw std::invalid_argument("run_cannings: event rate overflow in category " +
                                  std::to_string(i) + (i >= 3 ? " (block level " + std::to_string(i - 2) + ")" : ""));
    total += cat[i];
  }

  MigrationKernel kernel = mig_rate_ind > 0.0 ? MigrationKernel::from(GeographySpec{spec})
                                              : MigrationKernel::from(GeographySpec{TorusSpec{1, 1, 0.0, {}}});

  std::vector<std::uint32_t> assign;     // block redistribution scratch
  std::vector<Individual> scratch;
  std::vector<std::uint32_t> site_count;
  std::vector<std::uint32_t> displaced;

  double t = sys.time_;
  std::uint64_t n_events = 0;
  while (total > 0.0) {
    t += rng.exponential(total);
    if (t >= T) break;
    if (++n_events > max_events) {
      sys.time_ = t;
      throw BudgetExceeded("run_cannings: event budget of " + std::to_string(max_events) +
                           " exhausted at t = " + std::to_string(t));
    }
    const std::size_t what = rng.categorical(cat);
    if (what == 0) {
      // migration: swap the migrant with a uniform individual at the target
      const std::uint64_t ind = rng.below(S * static_cast<std::uint64_t>(M));
      const std::uint64_t site = ind / M;
      const std::uint64_t dest = kernel.sample_destination(site, rng);
      ++stats.events_migration;
      if (dest != site) {
        const std::uint64_t other = dest * M + rng.below(M);
        std::swap(sys.pop_[ind], sys.pop_[other]);
      }
    } else if (what == 1) {
      const std::uint64_t site = rng.below(S);
      const std::uint32_t i = static_cast<std::uint32_t>(rng.below(M));
      std::uint32_t j = static_cast<std::uint32_t>(rng.below(M - 1));
      if (j >= i) ++j;
      const bool i_is_parent = rng.u01() < 0.5;
      const std::uint32_t pslot = i_is_parent ? i : j;
      const std::uint32_t cslot = i_is_parent ? j : i;
      Individual& parent = sys.pop_[site * M + pslot];
      Individual& child = sys.pop_[site * M + cslot];
      const std::uint64_t lin = sys.next_lineage_++;
      sys.log_.push_back({t, lin, parent.lineage, static_cast<std::uint32_t>(site), 0});
      child = {parent.type, lin};
      ++stats.events_kingman;
      ++stats.replacements;
    } else if (what == 2) {
      const std::uint64_t site = rng.below(S);
      const double r = rates.lambda0.sample_r(rates.eps, rng);
      stats.replacements += apply_lambda_resampling(sys.site_block(site), r, t,
                                                    static_cast<std::uint32_t>(site), 0,
                                                    sys.log_, sys.next_lineage_, rng);
      ++stats.events_lambda_local;
    } else {
      const int k = static_cast<int>(what) - 2;  // block level
      const std::uint64_t ball_sites = geo.ball_size(k);
      const std::uint64_t ball = rng.below(S / ball_sites);
      const std::uint64_t base_site = ball * ball_sites;
      const std::uint64_t P = ball_sites * static_cast<std::uint64_t>(M);
      Individual* pool = sys.pop_.data() + base_site * M;

      const double r = rates.blocks[k - 1].sample_r(rates.eps, rng);
      stats.replacements += apply_lambda_resampling({pool, P}, r, t,
                                                    static_cast<std::uint32_t>(base_site), k,
                                                    sys.log_, sys.next_lineage_, rng);

      // Uniform redistribution over the ball, then rebalance to M per site.
      assign.resize(P);
      site_count.assign(ball_sites, 0);
      for (std::uint64_t i = 0; i < P; ++i) {
        assign[i] = static_cast<std::uint32_t>(rng.below(ball_sites));
        ++site_count[assign[i]];
      }
      // Per-site lists by counting sort.
      std::vector<std::uint32_t> offset(ball_sites + 1, 0);
      for (std::uint64_t s = 0; s < ball_sites; ++s) offset[s + 1] = offset[s] + site_count[s];
      std::vector<std::uint32_t> by_site(P);
      {
        std::vector<std::uint32_t> cursor(offset.begin(), offset.end() - 1);
        for (std::uint64_t i = 0; i < P; ++i) by_site[cursor[assign[i]]++] = static_cast<std::uint32_t>(i);
      }
      displaced.clear();
      scratch.assign(P, Individual{});
      std::vector<std::uint32_t> fill_count(ball_sites, 0);
      static thread_local std::vector<std::uint32_t> drop;
      for (std::uint64_t s = 0; s < ball_sites; ++s) {
        const std::uint32_t cnt = site_count[s];
        std::uint32_t keep = std::min<std::uint32_t>(cnt, M);
        if (cnt > static_cast<std::uint32_t>(M)) {
          // uniformly choose which assigned individuals stay
          sample_distinct(cnt, cnt - M, rng, drop);
          std::sort(drop.begin(), drop.end());
          std::size_t di = 0;
          std::uint32_t placed = 0;
          for (std::uint32_t i = 0; i < cnt; ++i) {
            const std::uint32_t who = by_site[offset[s] + i];
            if (di < drop.size() && drop[di] == i) {
              displaced.push_back(who);
              ++di;
            } else {
              scratch[s * M + placed++] = pool[who];
            }
          }
          fill_count[s] = placed;
        } else {
          for (std::uint32_t i = 0; i < keep; ++i)
            scratch[s * M + i] = pool[by_site[offset[s] + i]];
          fill_count[s] = keep;
        }
      }
      // Shuffle the displaced pool, then fill deficits in site order.
      for (std::size_t i = displaced.size(); i > 1; --i)
        std::swap(displaced[i - 1], displaced[rng.below(i)]);
      std::size_t next = 0;
      for (std::uint64_t s = 0; s < ball_sites; ++s)
        while (fill_count[s] < static_cast<std::uint32_t>(M))
          scratch[s * M + fill_count[s]++] = pool[displaced[next++]];
      stats.redistribution_moves += displaced.size();
      std::copy(scratch.begin(), scratch.end(), pool);
      ++stats.events_block;
    }
  }
  sys.time_ = T;
  stats.final_time = T;
  return stats;
}

MoranFvReport moran_fv_consistency(std::span<const int> M_list, double d, double theta,
                                   std::span<const double> times, std::uint64_t replicas,
                                   double dt, std::uint64_t seed,
                                   const std::function<double(double)>& statistic) {
  if (times.empty() || replicas == 0)
    throw std::invalid_argument("moran_fv_consistency: need times and replicas");
  auto stat = statistic ? statistic : [](double x) { return x * (1.0 - x); };

  MoranFvReport report;
  report.times.assign(times.begin(), times.end());

  for (std::size_t mi = 0; mi < M_list.size(); ++mi) {
    const int M = M_list[mi];
    if (M < 1) throw std::invalid_argument("moran_fv_consistency: M must be >= 1");
    std::vector<std::vector<double>> per_rep(replicas, std::vector<double>(times.size()));
    #pragma omp parallel for schedule(dynamic)
    for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(replicas); ++rep) {
      Rng rng = Rng::derive(seed, {0x4d00 + mi, static_cast<std::uint64_t>(rep)});
      const HierSpec spec{2, 0, {}};  // single site
      ParticleSystem sys(spec.group(), M);
      const int ones = static_cast<int>(std::lround(theta * M));
      std::vector<std::int32_t> types(M, 0);
      for (int i = 0; i < ones; ++i) types[i] = 1;
      sys.init_types(types);
      CanningsRates rates;
      rates.d = d;
      for (std::size_t ti = 0; ti < times.size(); ++ti) {
        run_cannings(sys, spec, rates, times[ti], rng);
        per_rep[rep][ti] = stat(sys.site_frequency(0));
      }
    }
    MoranFvSeries series;
    series.M = M;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      RunningStats rs;
      for (std::uint64_t rep = 0; rep < replicas; ++rep) rs.add(per_rep[rep][ti]);
      series.mean.push_back(rs.mean());
      series.se.push_back(rs.stderror());
    }
    report.particle.push_back(std::move(series));
  }

  // Matched diffusion: single-site neutral Fisher-Wright, Euler scheme.
  {
    std::vector<std::vector<double>> per_rep(replicas, std::vector<double>(times.size()));
    #pragma omp parallel for schedule(dynamic)
    for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(replicas); ++rep) {
      Rng rng = Rng::derive(seed, {0xd1ff, static_cast<std::uint64_t>(rep)});
      double t = 0.0;
      double x = theta;
      for (std::size_t ti = 0; ti < times.size(); ++ti) {
        while (t < times[ti]) {
          const double h = std::min(dt, times[ti] - t);
          const double g = std::max(x * (1.0 - x), 0.0);
          x += std::sqrt(d * h * g) * rng.normal();
          x = std::clamp(x, 0.0, 1.0);
          t += h;
        }
        per_rep[rep][ti] = stat(x);
      }
    }
    report.diffusion.M = 0;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      RunningStats rs;
      for (std::uint64_t rep = 0; rep < replicas; ++rep) rs.add(per_rep[rep][ti]);
      report.diffusion.mean.push_back(rs.mean());
      report.diffusion.se.push_back(rs.stderror());
    }
  }
  return report;
}

}  // namespace spop
