#include "spop/genealogy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace spop {

void GenealogySample::set(int i, int j, double v, bool cens) {
  dist[static_cast<std::size_t>(i) * n + j] = v;
  dist[static_cast<std::size_t>(j) * n + i] = v;
  censored[static_cast<std::size_t>(i) * n + j] = cens ? 1 : 0;
  censored[static_cast<std::size_t>(j) * n + i] = cens ? 1 : 0;
}

double ultrametric_violation(const GenealogySample& s) {
  double worst = 0.0;
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j)
      for (int k = 0; k < s.n; ++k) {
        const double lhs = s.d(i, j);
        const double rhs = std::max(s.d(i, k), s.d(k, j));
        worst = std::max(worst, lhs - rhs);
      }
  return worst;
}

LineageTable LineageTable::build(std::span<const AncestryRecord> log, std::uint64_t founders) {
  LineageTable t;
  t.founders = founders;
  t.parent.reserve(log.size());
  t.birth.reserve(log.size());
  double last_time = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& rec = log[i];
    if (rec.time < last_time)
      throw IntegrityError("ancestry log: record times decrease", static_cast<std::int64_t>(i));
    last_time = rec.time;
    if (rec.child != founders + i)
      throw IntegrityError("ancestry log: child lineage out of sequence",
                           static_cast<std::int64_t>(i));
    if (rec.parent >= rec.child)
      throw IntegrityError("ancestry log: parent not older than child",
                           static_cast<std::int64_t>(i));
    if (rec.parent >= founders) {
      const double pbirth = t.birth[rec.parent - founders];
      if (pbirth > rec.time)
        throw IntegrityError("ancestry log: parent born after event",
                             static_cast<std::int64_t>(i));
    }
    t.parent.push_back(rec.parent);
    t.birth.push_back(rec.time);
  }
  return t;
}

std::optional<double> LineageTable::merge_time(std::uint64_t a, std::uint64_t b,
                                               double sample_time) const {
  if (a == b) return sample_time;  // same individual sampled twice
  auto birth_of = [&](std::uint64_t id) { return id < founders ? 0.0 : birth[id - founders]; };
  double last = sample_time;
  while (a != b) {
    const double ba = birth_of(a);
    const double bb = birth_of(b);
    if (ba >= bb) {
      if (a < founders) return std::nullopt;  // distinct founders
      last = ba;
      a = parent[a - founders];
    } else {
      if (b < founders) return std::nullopt;
      last = bb;
      b = parent[b - founders];
    }
  }
  return last;
}

GenealogySample extract_sample(const ParticleSystem& sys, int n,
                               std::span<const std::uint64_t> site_filter, Rng& rng) {
  if (n < 1) throw std::invalid_argument("extract_sample: n must be >= 1");
  const int M = sys.per_site();
  const auto pop = sys.population();

  // Candidate individual slots under the sampling measure.
  std::vector<std::uint64_t> slots;
  if (site_filter.empty()) {
    slots.resize(pop.size());
    for (std::uint64_t i = 0; i < pop.size(); ++i) slots[i] = i;
  } else {
    for (std::uint64_t site : site_filter) {
      if (site >= sys.geography().size())
        throw std::invalid_argument("extract_sample: site filter out of range");
      for (int i = 0; i < M; ++i) slots.push_back(site * M + i);
    }
  }

  const LineageTable table = LineageTable::build(sys.ancestry(), sys.geography().size() * M);
  const double t = sys.time();

  GenealogySample s;
  s.n = n;
  s.t = t;
  s.dist.assign(static_cast<std::size_t>(n) * n, 0.0);
  s.censored.assign(static_cast<std::size_t>(n) * n, 0);
  s.marks.resize(n);

  std::vector<std::uint64_t> chosen(n);
  for (int i = 0; i < n; ++i) {
    chosen[i] = slots[rng.below(slots.size())];
    s.marks[i].site = static_cast<std::uint32_t>(chosen[i] / M);
    s.marks[i].type = pop[chosen[i]].type;
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const auto merge = table.merge_time(pop[chosen[i]].lineage, pop[chosen[j]].lineage, t);
      if (merge)
        s.set(i, j, 2.0 * (t - *merge), false);
      else
        s.set(i, j, 2.0 * t, true);
    }
  return s;
}

PolyResult polynomial_statistic(const GenealogySample& s, int degree, const PhiFn& phi,
                                const MarkFn& g, std::uint64_t max_exhaustive,
                                std::uint64_t tuples, Rng* rng) {
  if (degree < 1 || degree > s.n)
    throw std::invalid_argument("polynomial_statistic: degree must lie in [1, n]");
  const std::uint64_t n = static_cast<std::uint64_t>(s.n);
  const int npairs = degree * (degree - 1) / 2;
  std::vector<double> pd(npairs);
  std::vector<GenealogySample::Mark> marks(degree);
  std::vector<int> idx(degree, 0);

  auto eval = [&]() {
    int p = 0;
    for (int a = 0; a < degree; ++a) {
      marks[a] = s.marks[idx[a]];
      for (int b = a + 1; b < degree; ++b) pd[p++] = s.d(idx[a], idx[b]);
    }
    const double fphi = phi ? phi(pd) : 1.0;
    const double fg = g ? g(marks) : 1.0;
    return fphi * fg;
  };

  // Ordered sub-tuples of distinct indices (sampling with replacement
  // happened at extraction time, so distinct indices are independent draws
  // from the sampling measure).  Exhaustive when the falling-factorial
  // count is small enough.
  double total_d = 1.0;
  for (int a = 0; a < degree; ++a) total_d *= static_cast<double>(n - a);
  auto has_repeat = [&]() {
    for (int a = 0; a < degree; ++a)
      for (int b = a + 1; b < degree; ++b)
        if (idx[a] == idx[b]) return true;
    return false;
  };
  if (total_d <= static_cast<double>(max_exhaustive)) {
    double acc = 0.0;
    std::uint64_t count = 0;
    for (;;) {
      if (!has_repeat()) {
        acc += eval();
        ++count;
      }
      int pos = degree - 1;
      while (pos >= 0 && ++idx[pos] == static_cast<int>(n)) idx[pos--] = 0;
      if (pos < 0) break;
    }
    return {acc / static_cast<double>(count), 0.0, true, count};
  }

  if (rng == nullptr)
    throw std::invalid_argument("polynomial_statistic: subsampling requires an rng");
  double acc = 0.0, acc2 = 0.0;
  std::vector<int> pool(n);
  for (std::uint64_t it = 0; it < tuples; ++it) {
    // partial Fisher-Yates draw of an ordered distinct tuple
    for (std::uint64_t a = 0; a < n; ++a) pool[a] = static_cast<int>(a);
    for (int a = 0; a < degree; ++a) {
      const std::uint64_t j = a + rng->below(n - a);
      std::swap(pool[a], pool[j]);
      idx[a] = pool[a];
    }
    const double v = eval();
    acc += v;
    acc2 += v * v;
  }
  const double mean = acc / static_cast<double>(tuples);
  const double var = std::max(0.0, acc2 / static_cast<double>(tuples) - mean * mean);
  return {mean, std::sqrt(var / static_cast<double>(tuples)), false, tuples};
}

GenealogySample transform_distances(const GenealogySample& s) {
  GenealogySample out = s;
  for (int i = 0; i < s.n; ++i)
    for (int j = 0; j < s.n; ++j) {
      const std::size_t at = static_cast<std::size_t>(i) * s.n + j;
      if (i == j) {
        out.dist[at] = 0.0;
        out.censored[at] = 0;
        continue;
      }
      if (s.censored[at]) {
        out.dist[at] = 1.0;  // divergent distances map to the value 1
        out.censored[at] = 0;
      } else {
        out.dist[at] = 1.0 - std::exp(-s.dist[at]);
      }
    }
  return out;
}

std::optional<double> tmrca(const GenealogySample& s) {
  double worst = 0.0;
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j) {
      if (s.is_censored(i, j)) return std::nullopt;
      worst = std::max(worst, s.d(i, j));
    }
  return worst / 2.0;
}

BallDecomposition ball_decomposition(const GenealogySample& s, double h, double tol) {
  if (!(h > 0.0)) throw std::invalid_argument("ball_decomposition: h must be positive");
  const double viol = ultrametric_violation(s);
  if (viol > tol)
    throw IntegrityError("ball_decomposition: ultrametricity violated by " + std::to_string(viol));
  BallDecomposition out;
  std::vector<int> cls(s.n, -1);
  for (int i = 0; i < s.n; ++i) {
    if (cls[i] >= 0) continue;
    const int id = static_cast<int>(out.classes.size());
    out.classes.emplace_back();
    for (int j = i; j < s.n; ++j)
      if (cls[j] < 0 && s.d(i, j) < 2.0 * h) {
        cls[j] = id;
        out.classes[id].push_back(j);
      }
  }
  // The thresholded relation must be an equivalence; verify.
  for (int i = 0; i < s.n; ++i)
    for (int j = i + 1; j < s.n; ++j) {
      const bool same = cls[i] == cls[j];
      const bool close = s.d(i, j) < 2.0 * h;
      if (same != close)
        throw IntegrityError("ball_decomposition: relation is not an equivalence at pair (" +
                             std::to_string(i) + "," + std::to_string(j) + ")");
    }
  for (const auto& c : out.classes)
    out.mass.push_back(static_cast<double>(c.size()) / static_cast<double>(s.n));
  return out;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_csv(const GenealogySample& s) {
  std::ostringstream os;
  os << "n," << s.n << "\n";
  os << "t," << fmt_double(s.t) << "\n";
  os << "dist\n";
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j) {
      if (j) os << ",";
      os << fmt_double(s.d(i, j));
    }
    os << "\n";
  }
  os << "censored\n";
  for (int i = 0; i < s.n; ++i) {
    for (int j = 0; j < s.n; ++j) {
      if (j) os << ",";
      os << (s.is_censored(i, j) ? 1 : 0);
    }
    os << "\n";
  }
  os << "marks\nsite,type\n";
  for (const auto& m : s.marks) os << m.site << "," << m.type << "\n";
  return os.str();
}

GenealogySample sample_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(is, line)) throw std::invalid_argument("sample_from_csv: truncated input");
    return line;
  };
  GenealogySample s;
  {
    next_line();
    if (line.rfind("n,", 0) != 0) throw std::invalid_argument("sample_from_csv: missing n header");
    s.n = std::stoi(line.substr(2));
    next_line();
    if (line.rfind("t,", 0) != 0) throw std::invalid_argument("sample_from_csv: missing t header");
    s.t = std::strtod(line.c_str() + 2, nullptr);
  }
  if (next_line() != "dist") throw std::invalid_argument("sample_from_csv: missing dist block");
  s.dist.resize(static_cast<std::size_t>(s.n) * s.n);
  for (int i = 0; i < s.n; ++i) {
    next_line();
    const char* p = line.c_str();
    for (int j = 0; j < s.n; ++j) {
      char* end = nullptr;
      s.dist[static_cast<std::size_t>(i) * s.n + j] = std::strtod(p, &end);
      p = (*end == ',') ? end + 1 : end;
    }
  }
  if (next_line() != "censored")
    throw std::invalid_argument("sample_from_csv: missing censored block");
  s.censored.resize(static_cast<std::size_t>(s.n) * s.n);
  for (int i = 0; i < s.n; ++i) {
    next_line();
    const char* p = line.c_str();
    for (int j = 0; j < s.n; ++j) {
      char* end = nullptr;
      s.censored[static_cast<std::size_t>(i) * s.n + j] =
          static_cast<std::uint8_t>(std::strtol(p, &end, 10));
      p = (*end == ',') ? end + 1 : end;
    }
  }
  if (next_line() != "marks") throw std::invalid_argument("sample_from_csv: missing marks block");
  next_line();  // column header
  s.marks.resize(s.n);
  for (int i = 0; i < s.n; ++i) {
    next_line();
    char* end = nullptr;
    s.marks[i].site = static_cast<std::uint32_t>(std::strtoul(line.c_str(), &end, 10));
    s.marks[i].type = static_cast<std::int32_t>(std::strtol(end + 1, nullptr, 10));
  }
  return s;
}

}  // namespace spop
