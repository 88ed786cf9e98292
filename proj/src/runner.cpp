#include "spop/runner.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spop/errors.hpp"
#include "spop/genealogy.hpp"
#include "spop/stats.hpp"

namespace spop {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : dir_(dir) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    const std::string path = dir_ + "/" + name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << content;
    os.close();
    entries_.push_back({name, content.size(), fnv1a64(content)});
  }

  json manifest_outputs() const {
    json arr = json::array();
    for (const auto& e : entries_)
      arr.push_back({{"path", e.name}, {"bytes", e.bytes}, {"fnv64", hex64(e.hash)}});
    return arr;
  }

  std::vector<std::string> files() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(dir_ + "/" + e.name);
    return out;
  }

 private:
  struct Entry {
    std::string name;
    std::size_t bytes;
    std::uint64_t hash;
  };
  std::string dir_;
  std::vector<Entry> entries_;
};

// ---------------------------------------------------------------------------

struct DiffusionOutputs {
  std::string trajectory;
  std::uint64_t clip_events = 0;
  std::uint64_t replicas_run = 0;
};

DiffusionOutputs run_diffusion(const ExperimentConfig& cfg, std::uint64_t seed,
                               std::uint64_t replicas, bool& partial) {
  const auto& dc = *cfg.diffusion;
  const GeographySpec& geo = *cfg.geometry;
  MigrationOp mig = std::holds_alternative<HierSpec>(geo)
                        ? MigrationOp::hier(std::get<HierSpec>(geo))
                        : MigrationOp::torus(std::get<TorusSpec>(geo));
  const std::uint64_t sites = std::holds_alternative<HierSpec>(geo)
                                  ? std::get<HierSpec>(geo).group().size()
                                  : std::get<TorusSpec>(geo).site_count();

  // Budget: run only the replicas that fit.
  const std::uint64_t steps = static_cast<std::uint64_t>(std::ceil(dc.T / dc.fv.dt));
  const std::uint64_t per_replica = steps * sites;
  std::uint64_t fit = per_replica == 0 ? replicas : cfg.max_site_steps / std::max<std::uint64_t>(per_replica, 1);
  if (fit < replicas) partial = true;
  const std::uint64_t n_rep = std::min(replicas, fit);

  struct Row {
    std::vector<std::string> lines;
    std::uint64_t clips = 0;
  };
  std::vector<Row> rows(n_rep);

  #pragma omp parallel for schedule(dynamic)
  for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(n_rep); ++rep) {
    const std::uint64_t noise_seed = Rng::derive(seed, {1, static_cast<std::uint64_t>(rep)}).next();
    StepDiagnostics diag;
    Row row;
    std::uint64_t step = 0;
    double t = 0.0;
    auto record = [&](double time, auto&& freq_at, int K, bool seedbank_cols,
                      const std::vector<double>* ymeans) {
      if (dc.per_site_output) {
        for (std::uint64_t s = 0; s < sites; ++s) {
          std::string line = std::to_string(rep) + "," + fmt(time) + "," + std::to_string(s);
          for (int u = 0; u < K; ++u) line += "," + fmt(freq_at(s, u));
          row.lines.push_back(std::move(line));
        }
      } else {
        std::string line = std::to_string(rep) + "," + fmt(time);
        double het = 0.0;
        for (int u = 0; u < K; ++u) {
          double mean = 0.0;
          for (std::uint64_t s = 0; s < sites; ++s) mean += freq_at(s, u);
          line += "," + fmt(mean / static_cast<double>(sites));
        }
        for (std::uint64_t s = 0; s < sites; ++s) {
          double simpson = 0.0;
          for (int u = 0; u < K; ++u) simpson += freq_at(s, u) * freq_at(s, u);
          het += 1.0 - simpson;
        }
        line += "," + fmt(het / static_cast<double>(sites));
        if (seedbank_cols && ymeans)
          for (double ym : *ymeans) line += "," + fmt(ym);
        row.lines.push_back(std::move(line));
      }
    };

    if (dc.seedbank) {
      SeedbankParams sp = *dc.seedbank;
      sp.dt = dc.fv.dt;
      SeedbankField field = SeedbankField::constant(sites, static_cast<int>(sp.exchange_rate.size()),
                                                    dc.theta[0], dc.theta[0]);
      for (double target : dc.record_times) {
        while (t < target) {
          const double h = std::min(sp.dt, target - t);
          SeedbankParams hp = sp;
          hp.dt = h;
          step_seedbank(field, hp, mig, step++, noise_seed, diag);
          t += h;
        }
        std::vector<double> ymeans(field.colours, 0.0);
        for (std::uint64_t s = 0; s < sites; ++s)
          for (int m = 0; m < field.colours; ++m) ymeans[m] += field.y[s * field.colours + m];
        for (double& v : ymeans) v /= static_cast<double>(sites);
        record(target, [&](std::uint64_t s, int u) {
          return u == 0 ? field.x[s] : 1.0 - field.x[s];
        }, 2, true, &ymeans);
      }
    } else {
      SimplexField field = SimplexField::constant(sites, dc.theta);
      FvParams fp = dc.fv;
      for (double target : dc.record_times) {
        while (t < target) {
          const double h = std::min(fp.dt, target - t);
          FvParams hp = fp;
          hp.dt = h;
          step_interacting_fv(field, hp, mig, step++, noise_seed, diag);
          t += h;
        }
        record(target, [&](std::uint64_t s, int u) { return field.x[s * field.K + u]; }, field.K,
               false, nullptr);
      }
    }
    row.clips = diag.clip_events;
    rows[rep] = std::move(row);
  }

  DiffusionOutputs out;
  out.replicas_run = n_rep;
  std::string header = "replica,time";
  const int K = dc.fv.K;
  if (dc.per_site_output) {
    header += ",site";
    for (int u = 0; u < K; ++u) header += ",x" + std::to_string(u);
  } else {
    for (int u = 0; u < K; ++u) header += ",mean_x" + std::to_string(u);
    header += ",mean_het";
    if (dc.seedbank)
      for (std::size_t m = 0; m < dc.seedbank->exchange_rate.size(); ++m)
        header += ",mean_y" + std::to_string(m);
  }
  out.trajectory = header + "\n";
  for (auto& r : rows) {
    for (auto& line : r.lines) out.trajectory += line + "\n";
    out.clip_events += r.clips;
  }
  return out;
}

std::string ancestry_csv(std::span<const AncestryRecord> log) {
  std::string out = "time,child_lineage,parent_lineage,site,level\n";
  for (const auto& r : log)
    out += fmt(r.time) + "," + std::to_string(r.child) + "," + std::to_string(r.parent) + "," +
           std::to_string(r.site) + "," + std::to_string(r.level) + "\n";
  return out;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                          std::int64_t seed_override, std::int64_t replica_override, int jobs) {
  const auto t0 = std::chrono::steady_clock::now();
  if (jobs > 0) omp_set_num_threads(jobs);
  const std::uint64_t seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override) : cfg.seed;
  const std::uint64_t replicas =
      replica_override >= 0 ? static_cast<std::uint64_t>(replica_override) : cfg.replicas;

  RunOutcome outcome;
  OutputDir out(out_dir);
  json diagnostics = json::object();
  std::uint64_t replicas_run = replicas;
  bool partial = false;

  try {
    if (cfg.kind == "diffusion-run") {
      const DiffusionOutputs res = run_diffusion(cfg, seed, replicas, partial);
      replicas_run = res.replicas_run;
      out.write("trajectory.csv", res.trajectory);
      diagnostics["clip_events"] = res.clip_events;
      if (cfg.geometry && std::holds_alternative<HierSpec>(*cfg.geometry))
        diagnostics["dropped_migration_rate"] = std::get<HierSpec>(*cfg.geometry).dropped_rate();
    } else if (cfg.kind == "cannings-run") {
      const auto& cc = *cfg.cannings;
      const HierSpec& spec = std::get<HierSpec>(*cfg.geometry);
      struct RepOut {
        std::string ancestry;
        std::string sample;
        std::vector<double> freqs;
        CanningsRunStats stats;
        bool budget_hit = false;
      };
      std::vector<RepOut> reps(replicas);
      #pragma omp parallel for schedule(dynamic)
      for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(replicas); ++rep) {
        Rng rng = Rng::derive(seed, {2, static_cast<std::uint64_t>(rep)});
        ParticleSystem sys(spec.group(), cc.M);
        sys.init_two_types(cc.init_theta, rng);
        RepOut r;
        try {
          r.stats = run_cannings(sys, spec, cc.rates, cc.T, rng, cfg.max_events);
        } catch (const BudgetExceeded&) {
          r.budget_hit = true;
        }
        r.ancestry = ancestry_csv(sys.ancestry());
        for (std::uint64_t s = 0; s < spec.group().size(); ++s)
          r.freqs.push_back(sys.site_frequency(s));
        if (cc.sample_n > 0 && !r.budget_hit) {
          Rng srng = Rng::derive(seed, {3, static_cast<std::uint64_t>(rep)});
          const GenealogySample gs = extract_sample(sys, cc.sample_n, {}, srng);
          r.sample = to_csv(gs);
        }
        reps[rep] = std::move(r);
      }
      std::string freqs = "replica,site,freq_type1\n";
      std::uint64_t total_events = 0, total_moves = 0;
      for (std::uint64_t rep = 0; rep < replicas; ++rep) {
        char name[64];
        std::snprintf(name, sizeof(name), "ancestry_%03llu.csv",
                      static_cast<unsigned long long>(rep));
        out.write(name, reps[rep].ancestry);
        if (!reps[rep].sample.empty()) {
          std::snprintf(name, sizeof(name), "sample_%03llu.csv",
                        static_cast<unsigned long long>(rep));
          out.write(name, reps[rep].sample);
        }
        for (std::size_t s = 0; s < reps[rep].freqs.size(); ++s)
          freqs += std::to_string(rep) + "," + std::to_string(s) + "," + fmt(reps[rep].freqs[s]) + "\n";
        total_events += reps[rep].stats.events_migration + reps[rep].stats.events_kingman +
                        reps[rep].stats.events_lambda_local + reps[rep].stats.events_block;
        total_moves += reps[rep].stats.redistribution_moves;
        if (reps[rep].budget_hit) partial = true;
      }
      out.write("frequencies.csv", freqs);
      diagnostics["total_events"] = total_events;
      diagnostics["redistribution_moves"] = total_moves;
      diagnostics["dropped_pair_rate_local"] = cc.rates.lambda0.mass_below(cc.rates.eps);
      diagnostics["dropped_migration_rate"] = spec.dropped_rate();
    } else if (cfg.kind == "mckean-vlasov") {
      const auto& mc = *cfg.mckean_vlasov;
      std::vector<Trajectory> trajs(replicas);
      #pragma omp parallel for schedule(dynamic)
      for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(replicas); ++rep) {
        Rng rng = Rng::derive(seed, {4, static_cast<std::uint64_t>(rep)});
        trajs[rep] = run_mckean_vlasov(mc.params, mc.theta, mc.sample_times, rng);
      }
      std::string csv = "replica,time";
      for (int u = 0; u < mc.params.K; ++u) csv += ",x" + std::to_string(u);
      csv += "\n";
      for (std::uint64_t rep = 0; rep < replicas; ++rep)
        for (std::size_t i = 0; i < trajs[rep].times.size(); ++i) {
          csv += std::to_string(rep) + "," + fmt(trajs[rep].times[i]);
          for (double v : trajs[rep].states[i]) csv += "," + fmt(v);
          csv += "\n";
        }
      out.write("trajectory.csv", csv);
    } else if (cfg.kind == "interaction-chain") {
      const auto& ic = *cfg.chain;
      const auto dks = dk_recursion({ic.params.c, [&] {
                                       auto l = ic.params.lambda;
                                       l.resize(std::max<std::size_t>(l.size(), ic.j + 1), 0.0);
                                       return l;
                                     }(),
                                     ic.params.d0},
                                    ic.j);
      std::vector<std::vector<double>> paths(replicas);
      #pragma omp parallel for schedule(dynamic)
      for (std::int64_t rep = 0; rep < static_cast<std::int64_t>(replicas); ++rep) {
        Rng rng = Rng::derive(seed, {5, static_cast<std::uint64_t>(rep)});
        paths[rep] = interaction_chain_sample(ic.theta, ic.params, ic.j, ic.engine, ic.settings, rng);
      }
      json report;
      report["theta"] = ic.theta;
      report["j"] = ic.j;
      report["c"] = ic.params.c;
      report["lambda"] = ic.params.lambda;
      report["d0"] = ic.params.d0;
      report["d_k"] = dks;
      report["engine"] = ic.engine == ChainEngine::BetaEquilibrium ? "beta" : "simulate";
      report["levels"] = [&] {
        std::vector<int> ks;
        for (int k = -(ic.j + 1); k <= 0; ++k) ks.push_back(k);
        return ks;
      }();
      report["paths"] = paths;
      out.write("chains.json", report.dump(2) + "\n");
    } else if (cfg.kind == "dichotomy") {
      json verdicts = json::array();
      for (const auto& c : cfg.dichotomy_cases) {
        DichotomyVerdict v = c.family ? classify_dichotomy(*c.family)
                                      : classify_dichotomy(*c.sequences);
        json jc;
        if (c.family)
          jc["family"] = {{"c", c.family->c},
                          {"lambda", c.family->lambda},
                          {"q", c.family->q},
                          {"d0", c.family->d0}};
        else
          jc["sequences"] = {{"c", c.sequences->c},
                             {"lambda", c.sequences->lambda},
                             {"d0", c.sequences->d0}};
        jc["verdict"] = v.verdict == Dichotomy::Clustering        ? "Clustering"
                        : v.verdict == Dichotomy::LocalCoexistence ? "LocalCoexistence"
                                                                    : "Inconclusive";
        jc["rule"] = v.rule;
        jc["detail"] = v.detail;
        jc["partial_sums"] = v.partial_sums;
        verdicts.push_back(jc);
      }
      out.write("verdicts.json", verdicts.dump(2) + "\n");
    } else if (cfg.kind == "seedbank-tail") {
      const auto& tc = *cfg.seedbank_tail;
      json report;
      report["params"] = {{"A", tc.tail.A},
                          {"B", tc.tail.B},
                          {"alpha", tc.tail.alpha},
                          {"beta", tc.tail.beta},
                          {"m_max", tc.tail.m_max}};
      report["gamma"] = tc.tail.gamma();
      report["tail_constant"] = tc.tail.tail_constant();
      report["chi"] = tc.tail.chi();
      report["rho"] = tc.tail.rho();
      report["rho_divergent"] = tc.tail.rho_divergent();
      report["truncation_tail_mass"] = tc.tail.truncation_tail_mass();
      const auto curve = seedbank_tail_curve(tc.tail, tc.t_grid);
      json jc = json::array();
      for (std::size_t i = 0; i < curve.size(); ++i)
        jc.push_back({{"t", tc.t_grid[i]}, {"survival", curve[i]}});
      report["curve"] = jc;
      out.write("tail.json", report.dump(2) + "\n");
      if (tc.samples > 0) {
        const WakeupSampler sampler(tc.tail);
        std::string csv = "tau\n";
        Rng rng = Rng::derive(seed, {6});
        for (std::uint64_t i = 0; i < tc.samples; ++i) csv += fmt(sampler.sample(rng)) + "\n";
        out.write("samples.csv", csv);
      }
    } else if (cfg.kind == "seedbank-regime") {
      const auto& rc = *cfg.seedbank_regime;
      const RegimeVerdict v = seedbank_regime(rc.walk, rc.tail);
      json report;
      report["verdict"] = v.verdict == SeedbankRegime::Coexistence ? "Coexistence"
                          : v.verdict == SeedbankRegime::Clustering ? "Clustering"
                                                                     : "Inconclusive";
      report["rho_finite"] = v.rho_finite;
      report["gamma"] = v.gamma;
      report["criterion"] = v.criterion;
      out.write("regime.json", report.dump(2) + "\n");
    } else if (cfg.kind == "fss") {
      FssExperiment fe = *cfg.fss;
      fe.replicas = replicas;
      fe.max_site_steps = cfg.max_site_steps;
      const FssReport rep = run_fss(fe, seed);
      json report;
      report["model"] = rep.model_name;
      report["t_grid"] = rep.t_grid;
      report["dstar"] = rep.dstar;
      report["dstar_se"] = rep.dstar_se;
      report["kappa"] = rep.kappa;
      report["reference"] = rep.reference;
      json ladder = json::array();
      for (const auto& e : rep.ladder)
        ladder.push_back({{"n", e.n},
                          {"sites", e.sites},
                          {"moment", e.moment},
                          {"moment_se", e.moment_se},
                          {"mean", e.mean},
                          {"mean_se", e.mean_se},
                          {"zscore", e.zscore},
                          {"fitted_rate", e.fitted_rate},
                          {"fitted_rate_se", e.fitted_rate_se}});
      report["ladder"] = ladder;
      out.write("fss_report.json", report.dump(2) + "\n");
    } else if (cfg.kind == "genealogy-stats") {
      const auto& gc = *cfg.genealogy_stats;
      std::ifstream is(gc.input_path, std::ios::binary);
      if (!is) throw std::runtime_error("cannot read sample file " + gc.input_path);
      std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
      GenealogySample sample = sample_from_csv(text);
      if (gc.transform) sample = transform_distances(sample);
      json report;
      report["n"] = sample.n;
      report["t"] = sample.t;
      report["ultrametric_violation"] = ultrametric_violation(sample);
      if (gc.compute_tmrca) {
        const auto tm = tmrca(sample);
        report["tmrca"] = tm ? json(*tm) : json(nullptr);
      }
      if (gc.mean_distance) {
        const PolyResult pr = polynomial_statistic(
            sample, 2, [](std::span<const double> d) { return d[0]; }, nullptr);
        report["mean_pairwise_distance"] = pr.value;
      }
      if (!gc.h_values.empty()) {
        json balls = json::array();
        for (double h : gc.h_values) {
          const BallDecomposition bd = ball_decomposition(sample, h);
          json entry;
          entry["h"] = h;
          entry["classes"] = bd.classes;
          entry["mass"] = bd.mass;
          balls.push_back(entry);
        }
        report["ball_decompositions"] = balls;
      }
      out.write("stats.json", report.dump(2) + "\n");
    } else {
      throw std::runtime_error("run_experiment: unhandled kind " + cfg.kind);
    }
  } catch (const BudgetExceeded& e) {
    partial = true;
    outcome.error = e.what();
  }

  const auto t1 = std::chrono::steady_clock::now();
  json manifest;
  manifest["version"] = kToolVersion;
  manifest["kind"] = cfg.kind;
  manifest["config_hash"] = hex64(cfg.config_hash());
  manifest["seed"] = seed;
  manifest["replicas_requested"] = replicas;
  manifest["replicas_run"] = replicas_run;
  manifest["partial"] = partial;
  manifest["wall_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
  manifest["diagnostics"] = diagnostics;
  manifest["outputs"] = out.manifest_outputs();
  if (!outcome.error.empty()) manifest["error"] = outcome.error;
  out.write("manifest.json", manifest.dump(2) + "\n");

  outcome.partial = partial;
  outcome.exit_code = partial ? 3 : 0;
  outcome.files = out.files();
  return outcome;
}

}  // namespace spop
