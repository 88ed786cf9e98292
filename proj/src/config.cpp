#include "spop/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "spop/stats.hpp"

namespace spop {

namespace {

using nlohmann::json;

// Collects validation problems; getters return defaults on error so that one
// pass reports everything.
struct Checker {
  std::vector<std::string>& errs;

  void fail(const std::string& path, const std::string& msg) { errs.push_back(path + ": " + msg); }

  bool object(const json& j, const std::string& path) {
    if (!j.is_object()) {
      fail(path, "expected an object");
      return false;
    }
    return true;
  }

  void known_keys(const json& j, const std::string& path, std::set<std::string> keys) {
    if (!j.is_object()) return;
    for (auto it = j.begin(); it != j.end(); ++it)
      if (!keys.count(it.key())) fail(path, "unknown key '" + it.key() + "'");
  }

  double number(const json& j, const std::string& path, const std::string& key, bool required,
                double def) {
    if (!j.contains(key)) {
      if (required) fail(path, "missing required key '" + key + "'");
      return def;
    }
    if (!j[key].is_number()) {
      fail(path + "." + key, "expected a number");
      return def;
    }
    return j[key].get<double>();
  }

  std::int64_t integer(const json& j, const std::string& path, const std::string& key,
                       bool required, std::int64_t def) {
    if (!j.contains(key)) {
      if (required) fail(path, "missing required key '" + key + "'");
      return def;
    }
    if (!j[key].is_number_integer()) {
      fail(path + "." + key, "expected an integer");
      return def;
    }
    return j[key].get<std::int64_t>();
  }

  bool boolean(const json& j, const std::string& path, const std::string& key, bool def) {
    if (!j.contains(key)) return def;
    if (!j[key].is_boolean()) {
      fail(path + "." + key, "expected a boolean");
      return def;
    }
    return j[key].get<bool>();
  }

  std::string text(const json& j, const std::string& path, const std::string& key, bool required,
                   const std::string& def) {
    if (!j.contains(key)) {
      if (required) fail(path, "missing required key '" + key + "'");
      return def;
    }
    if (!j[key].is_string()) {
      fail(path + "." + key, "expected a string");
      return def;
    }
    return j[key].get<std::string>();
  }

  std::vector<double> numbers(const json& j, const std::string& path, const std::string& key,
                              bool required) {
    std::vector<double> out;
    if (!j.contains(key)) {
      if (required) fail(path, "missing required key '" + key + "'");
      return out;
    }
    if (!j[key].is_array()) {
      fail(path + "." + key, "expected an array of numbers");
      return out;
    }
    for (const auto& v : j[key]) {
      if (!v.is_number()) {
        fail(path + "." + key, "expected numbers only");
        return {};
      }
      out.push_back(v.get<double>());
    }
    return out;
  }
};

std::optional<GeographySpec> parse_geometry(Checker& ck, const json& j, const std::string& path) {
  if (!ck.object(j, path)) return std::nullopt;
  const std::string kind = ck.text(j, path, "kind", true, "");
  if (kind == "hier") {
    ck.known_keys(j, path, {"kind", "N", "L", "c"});
    HierSpec spec;
    spec.N = static_cast<int>(ck.integer(j, path, "N", true, 2));
    spec.L = static_cast<int>(ck.integer(j, path, "L", true, 1));
    spec.c = ck.numbers(j, path, "c", true);
    if (spec.N < 2) ck.fail(path + ".N", "branching parameter must be >= 2");
    if (spec.L < 1) ck.fail(path + ".L", "truncation depth must be >= 1");
    for (double c : spec.c)
      if (!(c >= 0.0) || !std::isfinite(c)) ck.fail(path + ".c", "rates must be finite and >= 0");
    if (!ck.errs.empty()) return std::nullopt;
    return GeographySpec{spec};
  }
  if (kind == "torus") {
    ck.known_keys(j, path, {"kind", "d", "n", "rate", "steps"});
    TorusSpec spec;
    spec.d = static_cast<int>(ck.integer(j, path, "d", true, 1));
    spec.n = static_cast<int>(ck.integer(j, path, "n", true, 1));
    spec.rate = ck.number(j, path, "rate", false, 1.0);
    if (j.contains("steps")) {
      if (!j["steps"].is_array()) {
        ck.fail(path + ".steps", "expected an array of {offset, prob}");
      } else {
        for (std::size_t i = 0; i < j["steps"].size(); ++i) {
          const auto& st = j["steps"][i];
          const std::string sp = path + ".steps[" + std::to_string(i) + "]";
          if (!ck.object(st, sp)) continue;
          ck.known_keys(st, sp, {"offset", "prob"});
          TorusStep out;
          if (st.contains("offset") && st["offset"].is_array()) {
            for (const auto& o : st["offset"]) {
              if (!o.is_number_integer()) {
                ck.fail(sp + ".offset", "expected integers");
                break;
              }
              out.offset.push_back(o.get<long long>());
            }
          } else {
            ck.fail(sp, "missing offset array");
          }
          out.prob = ck.number(st, sp, "prob", true, 0.0);
          spec.steps.push_back(std::move(out));
        }
      }
    } else {
      ck.fail(path, "missing required key 'steps'");
    }
    if (ck.errs.empty()) {
      try {
        validate(spec);
      } catch (const std::exception& e) {
        ck.fail(path, e.what());
      }
    }
    if (!ck.errs.empty()) return std::nullopt;
    return GeographySpec{spec};
  }
  ck.fail(path + ".kind", "expected 'hier' or 'torus'");
  return std::nullopt;
}

LambdaMeasure parse_measure(Checker& ck, const json& j, const std::string& path) {
  LambdaMeasure lm;
  if (!ck.object(j, path)) return lm;
  ck.known_keys(j, path, {"kingman", "atoms", "uniform", "beta"});
  lm.kingman_mass = ck.number(j, path, "kingman", false, 0.0);
  if (j.contains("atoms")) {
    if (!j["atoms"].is_array()) {
      ck.fail(path + ".atoms", "expected an array of [r, mass] pairs");
    } else {
      for (const auto& a : j["atoms"]) {
        if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
          ck.fail(path + ".atoms", "expected [r, mass] pairs");
          break;
        }
        lm.atoms.push_back({a[0].get<double>(), a[1].get<double>()});
      }
    }
  }
  lm.uniform_mass = ck.number(j, path, "uniform", false, 0.0);
  if (j.contains("beta")) {
    const auto& b = j["beta"];
    const std::string bp = path + ".beta";
    if (ck.object(b, bp)) {
      ck.known_keys(b, bp, {"a", "b", "mass"});
      lm.beta_a = ck.number(b, bp, "a", true, 2.0);
      lm.beta_b = ck.number(b, bp, "b", true, 2.0);
      lm.beta_mass = ck.number(b, bp, "mass", false, 1.0);
    }
  }
  try {
    validate(lm);
  } catch (const std::exception& e) {
    ck.fail(path, e.what());
  }
  return lm;
}

json emit_measure(const LambdaMeasure& lm) {
  json j = json::object();
  j["kingman"] = lm.kingman_mass;
  json atoms = json::array();
  for (const auto& a : lm.atoms) atoms.push_back(json::array({a.r, a.mass}));
  j["atoms"] = atoms;
  j["uniform"] = lm.uniform_mass;
  j["beta"] = {{"a", lm.beta_a}, {"b", lm.beta_b}, {"mass", lm.beta_mass}};
  return j;
}

json emit_geometry(const GeographySpec& g) {
  json j = json::object();
  if (std::holds_alternative<HierSpec>(g)) {
    const auto& h = std::get<HierSpec>(g);
    j["kind"] = "hier";
    j["N"] = h.N;
    j["L"] = h.L;
    j["c"] = h.c;
  } else {
    const auto& t = std::get<TorusSpec>(g);
    j["kind"] = "torus";
    j["d"] = t.d;
    j["n"] = t.n;
    j["rate"] = t.rate;
    json steps = json::array();
    for (const auto& st : t.steps) steps.push_back({{"offset", st.offset}, {"prob", st.prob}});
    j["steps"] = steps;
  }
  return j;
}

SeedbankTailParams parse_tail(Checker& ck, const json& j, const std::string& path,
                              bool finite_rho_ok) {
  SeedbankTailParams p;
  if (!ck.object(j, path)) return p;
  ck.known_keys(j, path, {"A", "B", "alpha", "beta", "m_max"});
  p.A = ck.number(j, path, "A", false, 1.0);
  p.B = ck.number(j, path, "B", false, 1.0);
  p.alpha = ck.number(j, path, "alpha", true, 0.5);
  p.beta = ck.number(j, path, "beta", true, 1.0);
  p.m_max = static_cast<std::uint64_t>(ck.integer(j, path, "m_max", false, 1000));
  try {
    validate(p, finite_rho_ok);
  } catch (const std::exception& e) {
    ck.fail(path, e.what());
  }
  return p;
}

json emit_tail(const SeedbankTailParams& p) {
  return {{"A", p.A}, {"B", p.B}, {"alpha", p.alpha}, {"beta", p.beta}, {"m_max", p.m_max}};
}

}  // namespace

std::uint64_t ExperimentConfig::config_hash() const { return fnv1a64(canonical.dump()); }

ExperimentConfig parse_config(const std::string& text) {
  std::vector<std::string> errs;
  Checker ck{errs};

  json root = json::parse(text, nullptr, false);
  if (root.is_discarded()) throw ConfigError({"config: not valid JSON"});
  if (!root.is_object()) throw ConfigError({"config: top level must be an object"});

  ExperimentConfig cfg;
  cfg.kind = ck.text(root, "config", "kind", true, "");
  cfg.seed = static_cast<std::uint64_t>(ck.integer(root, "config", "seed", false, 1));
  cfg.replicas = static_cast<std::uint64_t>(ck.integer(root, "config", "replicas", false, 100));
  if (root.contains("budget")) {
    const auto& b = root["budget"];
    if (ck.object(b, "budget")) {
      ck.known_keys(b, "budget", {"max_site_steps", "max_events"});
      cfg.max_site_steps = static_cast<std::uint64_t>(
          ck.integer(b, "budget", "max_site_steps", false, 1'000'000'000'000LL));
      cfg.max_events = static_cast<std::uint64_t>(
          ck.integer(b, "budget", "max_events", false, 2'000'000'000LL));
    }
  }

  const std::set<std::string> kinds = {
      "diffusion-run",  "cannings-run",   "mckean-vlasov",  "interaction-chain", "dichotomy",
      "seedbank-tail",  "seedbank-regime", "fss",           "genealogy-stats"};
  if (!kinds.count(cfg.kind)) {
    ck.fail("config.kind", "unknown experiment kind '" + cfg.kind + "'");
    throw ConfigError(errs);
  }

  std::set<std::string> top_keys = {"kind", "seed", "replicas", "budget"};

  if (cfg.kind == "diffusion-run") {
    top_keys.insert({"geometry", "dynamics", "run"});
    if (root.contains("geometry"))
      cfg.geometry = parse_geometry(ck, root["geometry"], "geometry");
    else
      ck.fail("config", "missing required block 'geometry'");
    DiffusionRunConfig dc;
    if (root.contains("dynamics") && ck.object(root["dynamics"], "dynamics")) {
      const auto& dy = root["dynamics"];
      ck.known_keys(dy, "dynamics",
                    {"K", "d", "dt", "theta", "mutation", "selection", "seedbank"});
      dc.fv.K = static_cast<int>(ck.integer(dy, "dynamics", "K", false, 2));
      dc.fv.d = ck.number(dy, "dynamics", "d", false, 0.0);
      dc.fv.dt = ck.number(dy, "dynamics", "dt", false, 1e-3);
      dc.theta = ck.numbers(dy, "dynamics", "theta", true);
      if (dy.contains("mutation") && ck.object(dy["mutation"], "dynamics.mutation")) {
        const auto& mu = dy["mutation"];
        ck.known_keys(mu, "dynamics.mutation", {"rate", "kernel"});
        dc.fv.m = ck.number(mu, "dynamics.mutation", "rate", true, 0.0);
        if (mu.contains("kernel") && mu["kernel"].is_array()) {
          for (const auto& row : mu["kernel"])
            for (const auto& v : row) dc.fv.mutation.push_back(v.get<double>());
        } else if (dc.fv.m > 0.0) {
          ck.fail("dynamics.mutation", "missing kernel");
        }
      }
      if (dy.contains("selection") && ck.object(dy["selection"], "dynamics.selection")) {
        const auto& se = dy["selection"];
        ck.known_keys(se, "dynamics.selection", {"rate", "fitness"});
        dc.fv.s = ck.number(se, "dynamics.selection", "rate", true, 0.0);
        dc.fv.fitness = ck.numbers(se, "dynamics.selection", "fitness", dc.fv.s > 0.0);
      }
      if (dy.contains("seedbank") && ck.object(dy["seedbank"], "dynamics.seedbank")) {
        const auto& sb = dy["seedbank"];
        ck.known_keys(sb, "dynamics.seedbank", {"e", "K"});
        SeedbankParams sp;
        sp.b = dc.fv.d;
        sp.dt = dc.fv.dt;
        sp.exchange_rate = ck.numbers(sb, "dynamics.seedbank", "e", true);
        sp.relative_size = ck.numbers(sb, "dynamics.seedbank", "K", true);
        if (dc.fv.K != 2) ck.fail("dynamics.seedbank", "seedbank runs are two-type (K = 2)");
        try {
          validate(sp);
        } catch (const std::exception& e) {
          ck.fail("dynamics.seedbank", e.what());
        }
        dc.seedbank = std::move(sp);
      }
      if (dc.fv.K < 2) ck.fail("dynamics.K", "need K >= 2");
      if (!(dc.fv.dt > 0.0)) ck.fail("dynamics.dt", "dt must be positive");
      if (static_cast<int>(dc.theta.size()) != dc.fv.K && dc.fv.K >= 2)
        ck.fail("dynamics.theta", "theta must have K entries");
      double tsum = 0.0;
      for (double v : dc.theta) {
        if (v < 0.0) ck.fail("dynamics.theta", "entries must be >= 0");
        tsum += v;
      }
      if (!dc.theta.empty() && std::abs(tsum - 1.0) > 1e-9)
        ck.fail("dynamics.theta", "must sum to 1");
    } else {
      ck.fail("config", "missing required block 'dynamics'");
    }
    if (root.contains("run") && ck.object(root["run"], "run")) {
      const auto& r = root["run"];
      ck.known_keys(r, "run", {"T", "record_times", "per_site_output"});
      dc.T = ck.number(r, "run", "T", true, 1.0);
      dc.record_times = ck.numbers(r, "run", "record_times", true);
      dc.per_site_output = ck.boolean(r, "run", "per_site_output", false);
      if (!(dc.T > 0.0)) ck.fail("run.T", "must be positive");
      for (std::size_t i = 0; i < dc.record_times.size(); ++i) {
        if (dc.record_times[i] < 0.0 || dc.record_times[i] > dc.T)
          ck.fail("run.record_times", "times must lie in [0, T]");
        if (i > 0 && dc.record_times[i] <= dc.record_times[i - 1])
          ck.fail("run.record_times", "times must increase");
      }
    } else {
      ck.fail("config", "missing required block 'run'");
    }
    cfg.diffusion = std::move(dc);
  } else if (cfg.kind == "cannings-run") {
    top_keys.insert({"geometry", "cannings"});
    if (root.contains("geometry"))
      cfg.geometry = parse_geometry(ck, root["geometry"], "geometry");
    else
      ck.fail("config", "missing required block 'geometry'");
    if (cfg.geometry && !std::holds_alternative<HierSpec>(*cfg.geometry))
      ck.fail("geometry", "cannings-run requires a hierarchical geography");
    CanningsRunConfig cc;
    if (root.contains("cannings") && ck.object(root["cannings"], "cannings")) {
      const auto& ca = root["cannings"];
      ck.known_keys(ca, "cannings", {"M", "d", "eps", "lambda0", "blocks", "T", "init_theta",
                                     "sample_n"});
      cc.M = static_cast<int>(ck.integer(ca, "cannings", "M", true, 10));
      cc.rates.d = ck.number(ca, "cannings", "d", false, 0.0);
      cc.rates.eps = ck.number(ca, "cannings", "eps", false, 1e-3);
      if (ca.contains("lambda0")) cc.rates.lambda0 = parse_measure(ck, ca["lambda0"], "cannings.lambda0");
      if (ca.contains("blocks")) {
        if (!ca["blocks"].is_array()) {
          ck.fail("cannings.blocks", "expected an array of measures");
        } else {
          for (std::size_t i = 0; i < ca["blocks"].size(); ++i)
            cc.rates.blocks.push_back(
                parse_measure(ck, ca["blocks"][i], "cannings.blocks[" + std::to_string(i) + "]"));
        }
      }
      cc.T = ck.number(ca, "cannings", "T", true, 1.0);
      cc.init_theta = ck.number(ca, "cannings", "init_theta", false, 0.5);
      cc.sample_n = static_cast<int>(ck.integer(ca, "cannings", "sample_n", false, 0));
      if (cc.M < 1) ck.fail("cannings.M", "M must be >= 1");
      if (!(cc.T > 0.0)) ck.fail("cannings.T", "T must be positive");
      if (!(cc.rates.eps > 0.0) || cc.rates.eps > 1.0)
        ck.fail("cannings.eps", "eps must lie in (0,1]");
      if (cc.init_theta < 0.0 || cc.init_theta > 1.0)
        ck.fail("cannings.init_theta", "must lie in [0,1]");
      if (cc.sample_n < 0) ck.fail("cannings.sample_n", "must be >= 0");
    } else {
      ck.fail("config", "missing required block 'cannings'");
    }
    cfg.cannings = std::move(cc);
  } else if (cfg.kind == "mckean-vlasov") {
    top_keys.insert({"mv"});
    MckeanVlasovConfig mc;
    if (root.contains("mv") && ck.object(root["mv"], "mv")) {
      const auto& m = root["mv"];
      ck.known_keys(m, "mv", {"K", "c", "d", "dt", "theta", "sample_times"});
      mc.params.K = static_cast<int>(ck.integer(m, "mv", "K", false, 2));
      mc.params.c = ck.number(m, "mv", "c", true, 1.0);
      mc.params.d = ck.number(m, "mv", "d", true, 1.0);
      mc.params.dt = ck.number(m, "mv", "dt", false, 1e-3);
      mc.theta = ck.numbers(m, "mv", "theta", true);
      mc.sample_times = ck.numbers(m, "mv", "sample_times", true);
      if (static_cast<int>(mc.theta.size()) != mc.params.K)
        ck.fail("mv.theta", "theta must have K entries");
      for (std::size_t i = 1; i < mc.sample_times.size(); ++i)
        if (mc.sample_times[i] <= mc.sample_times[i - 1])
          ck.fail("mv.sample_times", "times must increase");
    } else {
      ck.fail("config", "missing required block 'mv'");
    }
    cfg.mckean_vlasov = std::move(mc);
  } else if (cfg.kind == "interaction-chain") {
    top_keys.insert({"renorm", "chain"});
    InteractionChainConfig ic;
    if (root.contains("renorm") && ck.object(root["renorm"], "renorm")) {
      const auto& r = root["renorm"];
      ck.known_keys(r, "renorm", {"c", "lambda", "d0"});
      ic.params.c = ck.numbers(r, "renorm", "c", true);
      ic.params.lambda = ck.numbers(r, "renorm", "lambda", false);
      ic.params.d0 = ck.number(r, "renorm", "d0", false, 0.0);
      for (double c : ic.params.c)
        if (!(c > 0.0)) ck.fail("renorm.c", "entries must be positive");
      for (double l : ic.params.lambda)
        if (!(l >= 0.0)) ck.fail("renorm.lambda", "entries must be >= 0");
      if (!(ic.params.d0 >= 0.0)) ck.fail("renorm.d0", "must be >= 0");
    } else {
      ck.fail("config", "missing required block 'renorm'");
    }
    if (root.contains("chain") && ck.object(root["chain"], "chain")) {
      const auto& c = root["chain"];
      ck.known_keys(c, "chain", {"theta", "j", "engine", "burn_in", "dt"});
      ic.theta = ck.number(c, "chain", "theta", true, 0.5);
      ic.j = static_cast<int>(ck.integer(c, "chain", "j", true, 0));
      const std::string eng = ck.text(c, "chain", "engine", false, "beta");
      if (eng == "beta")
        ic.engine = ChainEngine::BetaEquilibrium;
      else if (eng == "simulate")
        ic.engine = ChainEngine::Simulated;
      else
        ck.fail("chain.engine", "expected 'beta' or 'simulate'");
      ic.settings.burn_in = ck.number(c, "chain", "burn_in", false, 15.0);
      ic.settings.dt = ck.number(c, "chain", "dt", false, 1e-3);
      if (ic.theta < 0.0 || ic.theta > 1.0) ck.fail("chain.theta", "must lie in [0,1]");
      if (ic.j < 0) ck.fail("chain.j", "must be >= 0");
      if (static_cast<int>(ic.params.c.size()) < ic.j + 1)
        ck.fail("renorm.c", "need at least j + 1 entries");
    } else {
      ck.fail("config", "missing required block 'chain'");
    }
    cfg.chain = std::move(ic);
  } else if (cfg.kind == "dichotomy") {
    top_keys.insert({"cases"});
    if (root.contains("cases") && root["cases"].is_array()) {
      for (std::size_t i = 0; i < root["cases"].size(); ++i) {
        const auto& c = root["cases"][i];
        const std::string cp = "cases[" + std::to_string(i) + "]";
        DichotomyCase dcase;
        if (!ck.object(c, cp)) continue;
        ck.known_keys(c, cp, {"family", "sequences"});
        if (c.contains("family") && ck.object(c["family"], cp + ".family")) {
          const auto& f = c["family"];
          ck.known_keys(f, cp + ".family", {"c", "lambda", "q", "d0"});
          GeometricFamily fam;
          fam.c = ck.number(f, cp + ".family", "c", true, 1.0);
          fam.lambda = ck.number(f, cp + ".family", "lambda", false, 0.0);
          fam.q = ck.number(f, cp + ".family", "q", false, 1.0);
          fam.d0 = ck.number(f, cp + ".family", "d0", false, 1.0);
          if (!(fam.c > 0.0) || !(fam.q > 0.0) || fam.lambda < 0.0 || fam.d0 < 0.0)
            ck.fail(cp + ".family", "need c > 0, q > 0, lambda >= 0, d0 >= 0");
          dcase.family = fam;
        } else if (c.contains("sequences") && ck.object(c["sequences"], cp + ".sequences")) {
          const auto& s = c["sequences"];
          ck.known_keys(s, cp + ".sequences", {"c", "lambda", "d0"});
          RenormSequences seq;
          seq.c = ck.numbers(s, cp + ".sequences", "c", true);
          seq.lambda = ck.numbers(s, cp + ".sequences", "lambda", true);
          seq.d0 = ck.number(s, cp + ".sequences", "d0", false, 0.0);
          for (double v : seq.c)
            if (!(v > 0.0)) ck.fail(cp + ".sequences.c", "entries must be positive");
          dcase.sequences = std::move(seq);
        } else {
          ck.fail(cp, "need either 'family' or 'sequences'");
        }
        cfg.dichotomy_cases.push_back(std::move(dcase));
      }
      if (cfg.dichotomy_cases.empty()) ck.fail("cases", "must not be empty");
    } else {
      ck.fail("config", "missing required array 'cases'");
    }
  } else if (cfg.kind == "seedbank-tail") {
    top_keys.insert({"tail", "grid", "samples"});
    SeedbankTailConfig tc;
    if (root.contains("tail"))
      tc.tail = parse_tail(ck, root["tail"], "tail", false);
    else
      ck.fail("config", "missing required block 'tail'");
    tc.t_grid = ck.numbers(root, "config", "grid", true);
    tc.samples = static_cast<std::uint64_t>(ck.integer(root, "config", "samples", false, 0));
    for (double t : tc.t_grid)
      if (!(t >= 0.0)) ck.fail("grid", "times must be >= 0");
    cfg.seedbank_tail = std::move(tc);
  } else if (cfg.kind == "seedbank-regime") {
    top_keys.insert({"tail", "walk"});
    SeedbankRegimeConfig rc;
    if (root.contains("tail"))
      rc.tail = parse_tail(ck, root["tail"], "tail", true);
    else
      ck.fail("config", "missing required block 'tail'");
    if (root.contains("walk") && ck.object(root["walk"], "walk")) {
      const auto& w = root["walk"];
      ck.known_keys(w, "walk", {"kind", "c", "N", "dim"});
      const std::string wk = ck.text(w, "walk", "kind", true, "");
      if (wk == "meanfield")
        rc.walk.kind = WalkFamily::Kind::MeanField;
      else if (wk == "rate0")
        rc.walk.kind = WalkFamily::Kind::Rate0;
      else if (wk == "hier-geometric")
        rc.walk.kind = WalkFamily::Kind::HierGeometric;
      else if (wk == "lattice")
        rc.walk.kind = WalkFamily::Kind::Lattice;
      else
        ck.fail("walk.kind", "expected meanfield | rate0 | hier-geometric | lattice");
      rc.walk.c = ck.number(w, "walk", "c", false, 1.0);
      rc.walk.N = static_cast<int>(ck.integer(w, "walk", "N", false, 2));
      rc.walk.dim = static_cast<int>(ck.integer(w, "walk", "dim", false, 2));
    } else {
      ck.fail("config", "missing required block 'walk'");
    }
    cfg.seedbank_regime = std::move(rc);
  } else if (cfg.kind == "fss") {
    top_keys.insert({"fss"});
    FssExperiment fe;
    if (root.contains("fss") && ck.object(root["fss"], "fss")) {
      const auto& f = root["fss"];
      ck.known_keys(f, "fss", {"model", "c", "d", "theta0", "sizes", "t_grid", "dt", "seedbank",
                               "torus", "green"});
      const std::string mk = ck.text(f, "fss", "model", true, "");
      if (mk == "meanfield-fw")
        fe.model.kind = FssModel::Kind::MeanFieldFW;
      else if (mk == "torus-fw")
        fe.model.kind = FssModel::Kind::TorusFW;
      else if (mk == "meanfield-seedbank")
        fe.model.kind = FssModel::Kind::MeanFieldSeedbank;
      else
        ck.fail("fss.model", "expected meanfield-fw | torus-fw | meanfield-seedbank");
      fe.model.c = ck.number(f, "fss", "c", true, 1.0);
      fe.model.d = ck.number(f, "fss", "d", true, 1.0);
      fe.model.theta0 = ck.number(f, "fss", "theta0", false, 0.5);
      const auto sizes = ck.numbers(f, "fss", "sizes", true);
      for (double s : sizes) {
        if (s < 1 || s != std::floor(s)) ck.fail("fss.sizes", "sizes must be positive integers");
        fe.sizes.push_back(static_cast<std::uint64_t>(s));
      }
      fe.t_grid = ck.numbers(f, "fss", "t_grid", true);
      fe.dt = ck.number(f, "fss", "dt", false, 2e-3);
      if (f.contains("seedbank") && ck.object(f["seedbank"], "fss.seedbank")) {
        ck.known_keys(f["seedbank"], "fss.seedbank", {"e", "K"});
        fe.model.seed_e = ck.numbers(f["seedbank"], "fss.seedbank", "e", true);
        fe.model.seed_K = ck.numbers(f["seedbank"], "fss.seedbank", "K", true);
      }
      if (f.contains("torus") && ck.object(f["torus"], "fss.torus")) {
        ck.known_keys(f["torus"], "fss.torus", {"dim", "steps"});
        fe.model.torus_dim = static_cast<int>(ck.integer(f["torus"], "fss.torus", "dim", true, 2));
        // reuse the geometry step parser via a wrapper object
        json walk = {{"kind", "torus"}, {"d", fe.model.torus_dim}, {"n", 1},
                     {"rate", fe.model.c},  {"steps", f["torus"].contains("steps") ? f["torus"]["steps"] : json::array()}};
        auto parsed = parse_geometry(ck, walk, "fss.torus");
        if (parsed && std::holds_alternative<TorusSpec>(*parsed))
          fe.model.torus_steps = std::get<TorusSpec>(*parsed).steps;
      }
      if (f.contains("green") && ck.object(f["green"], "fss.green")) {
        ck.known_keys(f["green"], "fss.green", {"horizon", "replicas"});
        if (f["green"].contains("horizon"))
          fe.green_horizon = ck.number(f["green"], "fss.green", "horizon", false, 0.0);
        fe.green_replicas = static_cast<std::uint64_t>(
            ck.integer(f["green"], "fss.green", "replicas", false, 4000));
      }
      if (fe.model.kind == FssModel::Kind::MeanFieldSeedbank &&
          (fe.model.seed_e.empty() || fe.model.seed_e.size() != fe.model.seed_K.size()))
        ck.fail("fss.seedbank", "seedbank model needs matching non-empty e/K arrays");
      if (fe.model.kind == FssModel::Kind::TorusFW && fe.model.torus_steps.empty())
        ck.fail("fss.torus", "torus model needs a step law");
      if (fe.t_grid.size() < 2 || (fe.t_grid.size() >= 1 && fe.t_grid.front() != 0.0))
        ck.fail("fss.t_grid", "must start at 0 with at least 2 points");
      if (fe.model.theta0 < 0.0 || fe.model.theta0 > 1.0)
        ck.fail("fss.theta0", "must lie in [0,1]");
    } else {
      ck.fail("config", "missing required block 'fss'");
    }
    cfg.fss = std::move(fe);
  } else if (cfg.kind == "genealogy-stats") {
    top_keys.insert({"stats"});
    GenealogyStatsConfig gc;
    if (root.contains("stats") && ck.object(root["stats"], "stats")) {
      const auto& s = root["stats"];
      ck.known_keys(s, "stats", {"input", "transform", "tmrca", "mean_distance", "h_values"});
      gc.input_path = ck.text(s, "stats", "input", true, "");
      gc.transform = ck.boolean(s, "stats", "transform", false);
      gc.compute_tmrca = ck.boolean(s, "stats", "tmrca", true);
      gc.mean_distance = ck.boolean(s, "stats", "mean_distance", true);
      gc.h_values = ck.numbers(s, "stats", "h_values", false);
      for (double h : gc.h_values)
        if (!(h > 0.0)) ck.fail("stats.h_values", "h must be positive");
    } else {
      ck.fail("config", "missing required block 'stats'");
    }
    cfg.genealogy_stats = std::move(gc);
  }

  ck.known_keys(root, "config", top_keys);
  if (!errs.empty()) throw ConfigError(errs);

  // Canonical form: defaults filled, emitted from the parsed values.
  json canon;
  canon["kind"] = cfg.kind;
  canon["seed"] = cfg.seed;
  canon["replicas"] = cfg.replicas;
  canon["budget"] = {{"max_site_steps", cfg.max_site_steps}, {"max_events", cfg.max_events}};
  if (cfg.geometry) canon["geometry"] = emit_geometry(*cfg.geometry);
  if (cfg.diffusion) {
    const auto& dcc = *cfg.diffusion;
    json dy = {{"K", dcc.fv.K}, {"d", dcc.fv.d}, {"dt", dcc.fv.dt}, {"theta", dcc.theta}};
    if (dcc.fv.m > 0.0) dy["mutation"] = {{"rate", dcc.fv.m}, {"kernel", dcc.fv.mutation}};
    if (dcc.fv.s > 0.0) dy["selection"] = {{"rate", dcc.fv.s}, {"fitness", dcc.fv.fitness}};
    if (dcc.seedbank)
      dy["seedbank"] = {{"e", dcc.seedbank->exchange_rate}, {"K", dcc.seedbank->relative_size}};
    canon["dynamics"] = dy;
    canon["run"] = {{"T", dcc.T},
                    {"record_times", dcc.record_times},
                    {"per_site_output", dcc.per_site_output}};
  }
  if (cfg.cannings) {
    const auto& cc = *cfg.cannings;
    json blocks = json::array();
    for (const auto& b : cc.rates.blocks) blocks.push_back(emit_measure(b));
    canon["cannings"] = {{"M", cc.M},
                         {"d", cc.rates.d},
                         {"eps", cc.rates.eps},
                         {"lambda0", emit_measure(cc.rates.lambda0)},
                         {"blocks", blocks},
                         {"T", cc.T},
                         {"init_theta", cc.init_theta},
                         {"sample_n", cc.sample_n}};
  }
  if (cfg.mckean_vlasov) {
    const auto& mc = *cfg.mckean_vlasov;
    canon["mv"] = {{"K", mc.params.K}, {"c", mc.params.c},   {"d", mc.params.d},
                   {"dt", mc.params.dt}, {"theta", mc.theta}, {"sample_times", mc.sample_times}};
  }
  if (cfg.chain) {
    const auto& ic = *cfg.chain;
    canon["renorm"] = {{"c", ic.params.c}, {"lambda", ic.params.lambda}, {"d0", ic.params.d0}};
    canon["chain"] = {{"theta", ic.theta},
                      {"j", ic.j},
                      {"engine", ic.engine == ChainEngine::BetaEquilibrium ? "beta" : "simulate"},
                      {"burn_in", ic.settings.burn_in},
                      {"dt", ic.settings.dt}};
  }
  if (!cfg.dichotomy_cases.empty()) {
    json cases = json::array();
    for (const auto& c : cfg.dichotomy_cases) {
      if (c.family)
        cases.push_back({{"family",
                          {{"c", c.family->c},
                           {"lambda", c.family->lambda},
                           {"q", c.family->q},
                           {"d0", c.family->d0}}}});
      else
        cases.push_back({{"sequences",
                          {{"c", c.sequences->c},
                           {"lambda", c.sequences->lambda},
                           {"d0", c.sequences->d0}}}});
    }
    canon["cases"] = cases;
  }
  if (cfg.seedbank_tail) {
    canon["tail"] = emit_tail(cfg.seedbank_tail->tail);
    canon["grid"] = cfg.seedbank_tail->t_grid;
    canon["samples"] = cfg.seedbank_tail->samples;
  }
  if (cfg.seedbank_regime) {
    canon["tail"] = emit_tail(cfg.seedbank_regime->tail);
    const char* wk = nullptr;
    switch (cfg.seedbank_regime->walk.kind) {
      case WalkFamily::Kind::MeanField: wk = "meanfield"; break;
      case WalkFamily::Kind::Rate0: wk = "rate0"; break;
      case WalkFamily::Kind::HierGeometric: wk = "hier-geometric"; break;
      case WalkFamily::Kind::Lattice: wk = "lattice"; break;
    }
    canon["walk"] = {{"kind", wk},
                     {"c", cfg.seedbank_regime->walk.c},
                     {"N", cfg.seedbank_regime->walk.N},
                     {"dim", cfg.seedbank_regime->walk.dim}};
  }
  if (cfg.fss) {
    const auto& fe = *cfg.fss;
    const char* mk = nullptr;
    switch (fe.model.kind) {
      case FssModel::Kind::MeanFieldFW: mk = "meanfield-fw"; break;
      case FssModel::Kind::TorusFW: mk = "torus-fw"; break;
      case FssModel::Kind::MeanFieldSeedbank: mk = "meanfield-seedbank"; break;
    }
    json f = {{"model", mk},   {"c", fe.model.c},       {"d", fe.model.d},
              {"theta0", fe.model.theta0}, {"sizes", fe.sizes}, {"t_grid", fe.t_grid},
              {"dt", fe.dt}};
    if (!fe.model.seed_e.empty())
      f["seedbank"] = {{"e", fe.model.seed_e}, {"K", fe.model.seed_K}};
    if (!fe.model.torus_steps.empty()) {
      json steps = json::array();
      for (const auto& st : fe.model.torus_steps)
        steps.push_back({{"offset", st.offset}, {"prob", st.prob}});
      f["torus"] = {{"dim", fe.model.torus_dim}, {"steps", steps}};
    }
    if (fe.green_horizon) f["green"] = {{"horizon", *fe.green_horizon}, {"replicas", fe.green_replicas}};
    canon["fss"] = f;
  }
  if (cfg.genealogy_stats) {
    const auto& gc = *cfg.genealogy_stats;
    canon["stats"] = {{"input", gc.input_path},
                      {"transform", gc.transform},
                      {"tmrca", gc.compute_tmrca},
                      {"mean_distance", gc.mean_distance},
                      {"h_values", gc.h_values}};
  }
  cfg.canonical = std::move(canon);
  return cfg;
}

std::vector<std::string> known_kinds() {
  return {"diffusion-run",  "cannings-run",    "mckean-vlasov", "interaction-chain",
          "dichotomy",      "seedbank-tail",   "seedbank-regime", "fss",
          "genealogy-stats"};
}

std::string describe_kind(const std::string& kind) {
  if (kind == "diffusion-run")
    return "diffusion-run: interacting Fleming-Viot / Fisher-Wright field.\n"
           "  geometry: {kind: hier|torus, ...}\n"
           "  dynamics: {K, d, dt, theta[K], mutation{rate,kernel}?, selection{rate,fitness}?,\n"
           "             seedbank{e[],K[]}?}\n"
           "  run: {T, record_times[], per_site_output?}\n"
           "  outputs: trajectory.csv (replica,time,site,... or aggregated moments)";
  if (kind == "cannings-run")
    return "cannings-run: Moran particle system with Lambda/block resampling.\n"
           "  geometry: {kind: hier, N, L, c[]}\n"
           "  cannings: {M, d?, eps?, lambda0?{kingman,atoms,uniform,beta}, blocks[]?, T,\n"
           "             init_theta?, sample_n?}\n"
           "  outputs: ancestry_<r>.csv (time,child_lineage,parent_lineage,site,level),\n"
           "           frequencies.csv, sample_<r>.csv when sample_n > 0";
  if (kind == "mckean-vlasov")
    return "mckean-vlasov: single-site limit process.\n"
           "  mv: {K?, c, d, dt?, theta[K], sample_times[]}\n"
           "  outputs: trajectory.csv (replica,time,x_0..x_{K-1})";
  if (kind == "interaction-chain")
    return "interaction-chain: level-indexed equilibria sampling.\n"
           "  renorm: {c[], lambda[]?, d0?}\n"
           "  chain: {theta, j, engine: beta|simulate, burn_in?, dt?}\n"
           "  outputs: chains.json (paths indexed k = -(j+1)..0)";
  if (kind == "dichotomy")
    return "dichotomy: clustering vs local coexistence classification.\n"
           "  cases: [{family:{c,lambda,q,d0}} | {sequences:{c[],lambda[],d0}}]\n"
           "  outputs: verdicts.json";
  if (kind == "seedbank-tail")
    return "seedbank-tail: wake-up time tail function and samples.\n"
           "  tail: {A,B,alpha,beta,m_max} (needs alpha < 1 < alpha+beta)\n"
           "  grid: [t...], samples: count\n"
           "  outputs: tail.json, samples.csv";
  if (kind == "seedbank-regime")
    return "seedbank-regime: coexistence/clustering criterion for a walk family.\n"
           "  tail: {A,B,alpha,beta,m_max}\n"
           "  walk: {kind: meanfield|rate0|hier-geometric|lattice, c?, N?, dim?}\n"
           "  outputs: regime.json";
  if (kind == "fss")
    return "fss: finite system scheme ladder.\n"
           "  fss: {model: meanfield-fw|torus-fw|meanfield-seedbank, c, d, theta0?, sizes[],\n"
           "        t_grid[], dt?, seedbank{e[],K[]}?, torus{dim,steps}?, green{horizon,replicas}?}\n"
           "  outputs: fss_report.json";
  if (kind == "genealogy-stats")
    return "genealogy-stats: statistics of a serialized genealogy sample.\n"
           "  stats: {input: sample.csv, transform?, tmrca?, mean_distance?, h_values[]?}\n"
           "  outputs: stats.json";
  return "unknown kind; known kinds: diffusion-run cannings-run mckean-vlasov interaction-chain "
         "dichotomy seedbank-tail seedbank-regime fss genealogy-stats";
}

}  // namespace spop
