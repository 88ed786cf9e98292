#include "spop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "spop/stats.hpp"

namespace spop {

HierGroup::HierGroup(int N, int L) : N_(N), L_(L) {
  if (N < 2) throw std::invalid_argument("HierGroup: N must be >= 2");
  if (L < 0) throw std::invalid_argument("HierGroup: L must be >= 0");  // L = 0: single site
  pow_.resize(static_cast<std::size_t>(L) + 1);
  pow_[0] = 1;
  for (int k = 1; k <= L; ++k) {
    if (pow_[k - 1] > UINT64_MAX / static_cast<std::uint64_t>(N))
      throw std::invalid_argument("HierGroup: N^L overflows");
    pow_[k] = pow_[k - 1] * static_cast<std::uint64_t>(N);
  }
  size_ = pow_[L];
}

std::uint64_t HierGroup::index_of(const HierAddress& a) const {
  if (a.N != N_ || a.L() != L_)
    throw std::invalid_argument("HierGroup::index_of: address has mismatched (N, L)");
  std::uint64_t idx = 0;
  for (int p = 0; p < L_; ++p) {
    const int d = a.digits[p];
    if (d < 0 || d >= N_) throw std::invalid_argument("HierGroup::index_of: digit out of range");
    idx += static_cast<std::uint64_t>(d) * pow_[p];
  }
  return idx;
}

HierAddress HierGroup::address_of(std::uint64_t idx) const {
  HierAddress a;
  a.N = N_;
  a.digits.resize(L_);
  for (int p = 0; p < L_; ++p) {
    a.digits[p] = static_cast<int>(idx % N_);
    idx /= N_;
  }
  return a;
}

int HierGroup::distance(std::uint64_t i, std::uint64_t j) const {
  int k = 0;
  int p = 0;
  while (i != j) {
    if (static_cast<int>(i % N_) != static_cast<int>(j % N_)) k = p + 1;
    i /= N_;
    j /= N_;
    ++p;
  }
  return k;
}

std::uint64_t HierGroup::add(std::uint64_t i, std::uint64_t j) const {
  std::uint64_t out = 0;
  for (int p = 0; p < L_; ++p) {
    const std::uint64_t d = (i % N_ + j % N_) % N_;
    out += d * pow_[p];
    i /= N_;
    j /= N_;
  }
  return out;
}

std::uint64_t HierGroup::sub(std::uint64_t i, std::uint64_t j) const {
  std::uint64_t out = 0;
  for (int p = 0; p < L_; ++p) {
    const std::uint64_t d = (i % N_ + N_ - j % N_) % N_;
    out += d * pow_[p];
    i /= N_;
    j /= N_;
  }
  return out;
}

std::uint64_t HierGroup::ball_size(int k) const {
  if (k < 0 || k > L_) throw std::invalid_argument("HierGroup::ball_size: level out of range");
  return pow_[k];
}

std::uint64_t HierGroup::ball_base(std::uint64_t center, int k) const {
  if (k < 0 || k > L_) throw std::invalid_argument("HierGroup::ball_base: level out of range");
  return center - center % pow_[k];
}

int hier_distance(const HierAddress& i, const HierAddress& j) {
  if (i.N != j.N || i.L() != j.L())
    throw std::invalid_argument("hier_distance: addresses have mismatched (N, L)");
  HierGroup g(i.N, i.L());
  return g.distance(g.index_of(i), g.index_of(j));
}

std::vector<HierAddress> ball_members(const HierAddress& center, int k) {
  HierGroup g(center.N, center.L());
  if (k < 0 || k > center.L()) throw std::invalid_argument("ball_members: level out of range");
  const std::uint64_t base = g.ball_base(g.index_of(center), k);
  std::vector<HierAddress> out;
  out.reserve(g.ball_size(k));
  for (std::uint64_t i = 0; i < g.ball_size(k); ++i) out.push_back(g.address_of(base + i));
  return out;
}

double HierSpec::jump_rate() const {
  double rate = 0.0;
  double scale = 1.0;
  for (int k = 0; k < L && k < static_cast<int>(c.size()); ++k) {
    rate += c[k] * scale;
    scale /= N;
  }
  return rate;
}

double HierSpec::dropped_rate() const {
  double rate = 0.0;
  double scale = std::pow(static_cast<double>(N), -static_cast<double>(L));
  for (std::size_t k = L; k < c.size(); ++k) {
    rate += c[k] * scale;
    scale /= N;
  }
  return rate;
}

void validate(const HierSpec& spec) {
  HierGroup check(spec.N, spec.L);  // validates N, L and N^L
  (void)check;
  for (double ck : spec.c) {
    if (!(ck >= 0.0) || !std::isfinite(ck))
      throw std::invalid_argument("HierSpec: migration rates c_k must be finite and >= 0");
  }
}

std::uint64_t TorusSpec::site_count() const {
  std::uint64_t s = 1;
  for (int i = 0; i < d; ++i) s *= static_cast<std::uint64_t>(side());
  return s;
}

void validate(const TorusSpec& spec) {
  if (spec.d < 1) throw std::invalid_argument("TorusSpec: dimension must be >= 1");
  if (spec.n < 1) throw std::invalid_argument("TorusSpec: n must be >= 1");
  if (!(spec.rate >= 0.0) || !std::isfinite(spec.rate))
    throw std::invalid_argument("TorusSpec: jump rate must be finite and >= 0");
  double total = 0.0;
  for (const auto& st : spec.steps) {
    if (static_cast<int>(st.offset.size()) != spec.d)
      throw std::invalid_argument("TorusSpec: step offset dimension mismatch");
    if (!(st.prob >= 0.0)) throw std::invalid_argument("TorusSpec: step probability < 0");
    total += st.prob;
  }
  if (!spec.steps.empty() && std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("TorusSpec: step law must sum to 1");
  if (spec.steps.empty() && spec.rate > 0.0)
    throw std::invalid_argument("TorusSpec: positive rate needs a step law");
}

std::vector<TorusStep> symmetrize_steps(const std::vector<TorusStep>& steps) {
  std::map<std::vector<long long>, double> acc;
  for (const auto& st : steps) {
    std::vector<long long> neg(st.offset.size());
    for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -st.offset[i];
    acc[st.offset] += 0.5 * st.prob;
    acc[neg] += 0.5 * st.prob;
  }
  std::vector<TorusStep> out;
  out.reserve(acc.size());
  for (auto& [off, p] : acc) out.push_back({off, p});
  return out;
}

MigrationKernel MigrationKernel::from(const GeographySpec& spec) {
  MigrationKernel mk;
  if (std::holds_alternative<HierSpec>(spec)) {
    const auto& h = std::get<HierSpec>(spec);
    validate(h);
    HierPart part{h.group(), {}};
    double scale = 1.0;
    for (int k = 0; k < h.L && k < static_cast<int>(h.c.size()); ++k) {
      part.level_rate.push_back(h.c[k] * scale);
      scale /= h.N;
    }
    mk.total_rate_ = h.jump_rate();
    mk.part_ = std::move(part);
  } else {
    const auto& t = std::get<TorusSpec>(spec);
    validate(t);
    TorusPart part{t, {}};
    double run = 0.0;
    for (const auto& st : t.steps) {
      run += st.prob;
      part.cum.push_back(run);
    }
    mk.total_rate_ = t.rate;
    mk.part_ = std::move(part);
  }
  return mk;
}

std::uint64_t MigrationKernel::sample_destination(std::uint64_t from, Rng& rng) const {
  if (std::holds_alternative<HierPart>(part_)) {
    const auto& p = std::get<HierPart>(part_);
    if (p.level_rate.empty()) throw std::runtime_error("MigrationKernel: walk has no motion");
    const std::size_t k = rng.categorical(p.level_rate);
    const std::uint64_t base = p.group.ball_base(from, static_cast<int>(k) + 1);
    return base + rng.below(p.group.ball_size(static_cast<int>(k) + 1));
  }
  const auto& p = std::get<TorusPart>(part_);
  if (p.cum.empty()) throw std::runtime_error("MigrationKernel: walk has no motion");
  const double u = rng.u01() * p.cum.back();
  const std::size_t idx =
      std::upper_bound(p.cum.begin(), p.cum.end(), u) - p.cum.begin();
  const auto& st = p.spec.steps[std::min(idx, p.spec.steps.size() - 1)];
  const int side = p.spec.side();
  std::uint64_t out = 0;
  std::uint64_t mult = 1;
  std::uint64_t rem = from;
  for (int axis = 0; axis < p.spec.d; ++axis) {
    const long long coord = static_cast<long long>(rem % side);
    rem /= side;
    long long moved = (coord + st.offset[axis]) % side;
    if (moved < 0) moved += side;
    out += static_cast<std::uint64_t>(moved) * mult;
    mult *= side;
  }
  return out;
}

std::uint64_t sample_hier_jump(std::uint64_t from, const HierSpec& spec, Rng& rng) {
  validate(spec);
  if (spec.jump_rate() <= 0.0)
    throw std::invalid_argument("sample_hier_jump: all c_k are zero, walk has no motion");
  MigrationKernel mk = MigrationKernel::from(GeographySpec{spec});
  return mk.sample_destination(from, rng);
}

HierAddress sample_hier_jump(const HierAddress& from, const HierSpec& spec, Rng& rng) {
  if (from.N != spec.N || from.L() != spec.L)
    throw std::invalid_argument("sample_hier_jump: address does not match spec");
  HierGroup g = spec.group();
  return g.address_of(sample_hier_jump(g.index_of(from), spec, rng));
}

double degree_geometric(double c, int N) {
  if (N < 2) throw std::invalid_argument("degree_geometric: N must be >= 2");
  if (!(c > 0.0)) throw std::invalid_argument("degree_geometric: c must be positive");
  if (c >= static_cast<double>(N))
    throw std::invalid_argument("degree_geometric: formula requires c < N");
  return std::log(c) / (std::log(static_cast<double>(N)) - std::log(c));
}

namespace {

// Occupation intervals of the origin for one walk path, pushed to a sink.
// The sink receives [a, b) intervals with the walk at the origin.
template <typename Sink>
void walk_origin_occupation(const MigrationKernel& kernel, double horizon, Rng& rng, Sink&& sink) {
  const double rate = kernel.total_rate();
  std::uint64_t pos = 0;
  double t = 0.0;
  if (rate <= 0.0) {
    sink(0.0, horizon);
    return;
  }
  while (t < horizon) {
    const double hold = rng.exponential(rate);
    const double end = std::min(t + hold, horizon);
    if (pos == 0 && end > t) sink(t, end);
    t += hold;
    if (t >= horizon) break;
    pos = kernel.sample_destination(pos, rng);
  }
}

GeographySpec symmetrized(const GeographySpec& spec) {
  if (std::holds_alternative<HierSpec>(spec)) return spec;  // already symmetric
  TorusSpec t = std::get<TorusSpec>(spec);
  t.steps = symmetrize_steps(t.steps);
  return t;
}

}  // namespace

GreenEstimate green_at_zero(const GeographySpec& spec, double horizon, std::uint64_t replicas,
                            Rng& rng) {
  if (horizon <= 0.0 || replicas == 0)
    throw std::invalid_argument("green_at_zero: need positive horizon and replicas");
  const MigrationKernel kernel = MigrationKernel::from(symmetrized(spec));
  RunningStats rs;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    double occ = 0.0;
    walk_origin_occupation(kernel, horizon, rng, [&](double a, double b) { occ += b - a; });
    rs.add(occ);
  }
  return {rs.mean(), rs.stderror(), horizon, replicas};
}

GreenEstimate green_at_zero_free_lattice(const TorusSpec& walk, double horizon,
                                         std::uint64_t replicas, Rng& rng) {
  validate(walk);
  if (horizon <= 0.0 || replicas == 0)
    throw std::invalid_argument("green_at_zero_free_lattice: need positive horizon and replicas");
  const auto steps = symmetrize_steps(walk.steps);
  std::vector<double> cum;
  double run = 0.0;
  for (const auto& st : steps) {
    run += st.prob;
    cum.push_back(run);
  }
  RunningStats rs;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    std::vector<long long> pos(walk.d, 0);
    double t = 0.0;
    double occ = 0.0;
    if (walk.rate <= 0.0) {
      rs.add(horizon);
      continue;
    }
    while (t < horizon) {
      const double hold = rng.exponential(walk.rate);
      const bool at_origin =
          std::all_of(pos.begin(), pos.end(), [](long long v) { return v == 0; });
      if (at_origin) occ += std::min(t + hold, horizon) - t;
      t += hold;
      if (t >= horizon) break;
      const double u = rng.u01() * run;
      const std::size_t idx = std::upper_bound(cum.begin(), cum.end(), u) - cum.begin();
      const auto& st = steps[std::min(idx, steps.size() - 1)];
      for (int axis = 0; axis < walk.d; ++axis) pos[axis] += st.offset[axis];
    }
    rs.add(occ);
  }
  return {rs.mean(), rs.stderror(), horizon, replicas};
}

RecurrenceEstimate recurrence_integral(const GeographySpec& spec, double gamma, double horizon,
                                       std::uint64_t replicas, Rng& rng) {
  if (!(gamma > 0.0) || gamma > 1.0)
    throw std::invalid_argument("recurrence_integral: gamma must be in (0, 1]");
  if (horizon <= 1.0 || replicas == 0)
    throw std::invalid_argument("recurrence_integral: need horizon > 1 and replicas > 0");
  const double p = (1.0 - gamma) / gamma;  // weight exponent t^{-p}
  const MigrationKernel kernel = MigrationKernel::from(symmetrized(spec));

  // Closed-form weight integral over an occupation interval intersected
  // with [1, T].
  auto weight_integral = [&](double a, double b) {
    a = std::max(a, 1.0);
    b = std::min(b, horizon);
    if (b <= a) return 0.0;
    if (std::abs(p - 1.0) < 1e-12) return std::log(b / a);
    return (std::pow(b, 1.0 - p) - std::pow(a, 1.0 - p)) / (1.0 - p);
  };

  RunningStats rs;
  for (std::uint64_t r = 0; r < replicas; ++r) {
    double acc = 0.0;
    walk_origin_occupation(kernel, horizon, rng, [&](double a, double b) { acc += weight_integral(a, b); });
    rs.add(acc);
  }

  RecurrenceEstimate out;
  out.value = rs.mean();
  out.se = rs.stderror();
  out.horizon = horizon;
  out.tail_bound = p > 1.0 ? std::pow(horizon, 1.0 - p) / (p - 1.0)
                           : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace spop
