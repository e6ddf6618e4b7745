#pragma once

// Subcommands of the spikefluct tool. Each takes the parsed JSON config plus
// command-line overrides, writes its files atomically and returns an exit
// code; errors propagate as exceptions and are mapped by exit_code_for().

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spikefluct/cli/config.hpp"
#include "spikefluct/cli/output.hpp"
#include "spikefluct/ensemble.hpp"
#include "spikefluct/format.hpp"
#include "spikefluct/hetero.hpp"
#include "spikefluct/locallaw.hpp"
#include "spikefluct/noise.hpp"
#include "spikefluct/spectra.hpp"
#include "spikefluct/spikes.hpp"
#include "spikefluct/stats.hpp"
#include "spikefluct/stieltjes.hpp"
#include "spikefluct/version.hpp"

namespace spikefluct::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNumericalError = 2, kVerificationFailure = 3 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<Index> reps;
  std::optional<double> scale;
  std::optional<std::string> out;
  std::optional<unsigned> threads;
  std::optional<Index> kstar, nstar, n, seeds;
  std::optional<int> table, figure;
};

inline void apply_overrides(json& cfg, const Overrides& ov) {
  if (!cfg.is_object()) throw ConfigError("config: expected a JSON object at top level");
  if (ov.seed) cfg["master_seed"] = *ov.seed;
  if (ov.reps) cfg["reps"] = *ov.reps;
  if (ov.scale) cfg["scale"] = *ov.scale;
  if (ov.out) cfg["out"] = *ov.out;
  if (ov.threads) cfg["threads"] = *ov.threads;
  if (ov.kstar) cfg["kstar"] = *ov.kstar;
  if (ov.nstar) cfg["nstar"] = *ov.nstar;
  if (ov.n) cfg["n"] = *ov.n;
  if (ov.seeds) cfg["seeds"] = *ov.seeds;
  if (ov.table) cfg["table"] = *ov.table;
  if (ov.figure) cfg["figure"] = *ov.figure;
}

/// Settings shared by all subcommands.
struct Context {
  std::string command;
  std::uint64_t seed = kDefaultSeed;
  int digits = 10;
  unsigned threads = 0;
  std::filesystem::path out = "out";
  json config;  // effective config without the schedule-only keys
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  std::string num(double x) const { return format_double(x, digits); }

  /// Comment lines heading every CSV file.
  std::string csv_preamble() const {
    std::ostringstream os;
    os << "# spikefluct " << kVersion << ' ' << command << '\n';
    os << "# master_seed=" << seed << '\n';
    os << "# config=" << config.dump() << '\n';
    return os.str();
  }

  std::string sidecar(json results) const {
    json meta;
    meta["command"] = command;
    meta["version"] = kVersion;
    meta["master_seed"] = seed;
    meta["config"] = config;
    meta["threads"] = resolve_threads(threads);
    meta["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    meta["results"] = std::move(results);
    return meta.dump(2) + "\n";
  }
};

inline Context read_context(const std::string& command, const json& cfg, Fields& f) {
  Context c;
  c.command = command;
  c.seed = f.get<std::uint64_t>("master_seed", kDefaultSeed);
  const auto digits = f.get<Index>("digits", 10);
  if (digits < 1 || digits > 17) throw ConfigError("config field 'digits': must lie in 1..17");
  c.digits = static_cast<int>(digits);
  c.threads = f.get<unsigned>("threads", 0u);
  c.out = f.get<std::string>("out", "out");
  c.config = cfg;
  c.config.erase("threads");
  c.config.erase("out");
  c.config["master_seed"] = c.seed;
  return c;
}

inline ensemble::NoiseLaw parse_law(const json& v, const std::string& path) {
  if (v.is_string()) {
    try {
      return ensemble::make_noise_law(v.get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError("config field '" + path + "': " + e.what());
    }
  }
  Fields f(v, path);
  const std::string type = f.require<std::string>("type");
  if (type != "discrete") throw ConfigError("config field '" + path + "': law objects must have type 'discrete'");
  auto law = ensemble::NoiseLaw::discrete(to_doubles(f.raw("atoms"), f.child("atoms")),
                                          to_doubles(f.raw("probs"), f.child("probs")));
  f.finish();
  return law;
}

inline Index positive(Index v, const std::string& key) {
  if (v < 1) throw ConfigError("config field '" + key + "': must be at least 1");
  return v;
}

inline std::vector<double> vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

/// Deterministic quantities for one (Sigma, S, law, N) configuration.
struct Problem {
  Index m = 0, n = 0;
  spectra::CovarianceModel sigma;
  spikes::SignalModel signal;
  ensemble::NoiseLaw law = ensemble::NoiseLaw::gaussian();
  double tau = 0.1;
};

inline Problem read_problem(Fields& f, const Context& ctx, Index m_default, Index n_default,
                            bool signal_required) {
  Problem p;
  p.m = positive(f.get<Index>("m", m_default), "m");
  p.n = positive(f.get<Index>("n", n_default), "n");
  SigmaSpec sig;
  if (f.has("sigma")) sig = parse_sigma(f.raw("sigma"), "sigma");
  SignalSpec sg;
  sg.d2 = {5.25};
  if (signal_required || f.has("signal")) sg = parse_signal(f.raw("signal"), "signal");
  if (f.has("law")) p.law = parse_law(f.raw("law"), "law");
  p.tau = f.get<double>("tau", 0.1);
  if (!(p.tau > 0.0)) throw ConfigError("config field 'tau': must be positive");
  p.sigma = build_sigma(sig, p.m, ctx.seed);
  p.signal = build_signal(sg, p.m, p.n);
  return p;
}

inline json theory_report(const Problem& p) {
  const spikes::DeformedPopulation pop = spikes::deform(p.sigma, p.signal, p.tau);
  json r;
  r["m"] = p.m;
  r["n"] = p.n;
  r["phi"] = pop.phi;
  r["law"] = {{"name", p.law.name()}, {"kappa3", p.law.kappa3()}, {"kappa4", p.law.kappa4()}};
  r["edge"] = {{"w_plus", pop.edge.w_plus},
               {"lambda_plus", pop.edge.lambda_plus},
               {"threshold", pop.threshold},
               {"tracy_widom_scale", stieltjes::tracy_widom_scale(pop.edge)}};
  r["sigma_tilde"] = vec(pop.sigma_tilde);
  r["gaps"] = vec(pop.gaps);
  r["k0"] = pop.k0;
  r["warnings"] = pop.warnings;
  if (pop.k0 == 0) {
    r["advisory"] = "no supercritical spike: only the bulk edge is reported";
    return r;
  }
  const spikes::SpikeTheory th = spikes::asymptotic_quantities(p.sigma, p.signal, pop, p.law);
  json spikes_json = json::array();
  const auto deloc = spikes::delocalization_profile(th);
  for (Index k = 0; k < th.k0(); ++k) {
    const auto& sp = th.spikes[static_cast<std::size_t>(k)];
    spikes_json.push_back({{"sigma_tilde", sp.sigma_tilde},
                           {"theta", sp.theta},
                           {"theta_prime", sp.theta_prime},
                           {"L", sp.shift},
                           {"sqrt_sigma_psi_sup", deloc[static_cast<std::size_t>(k)].sqrt_sigma_psi_sup},
                           {"s_top_psi_sup", deloc[static_cast<std::size_t>(k)].s_top_psi_sup}});
  }
  r["spikes"] = spikes_json;
  r["V010"] = matrix_json(th.v010);
  r["V120"] = matrix_json(th.v120);
  r["V"] = matrix_json(th.v);
  r["W"] = matrix_json(th.w);
  r["theta_covariance"] = matrix_json(th.theta_covariance());
  return r;
}

inline int run_theory(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("theory", cfg, f);
  const Problem p = read_problem(f, ctx, 200, 400, true);
  f.finish();
  json report = theory_report(p);
  log << "lambda_+ = " << ctx.num(report["edge"]["lambda_plus"].get<double>()) << ", K0 = " << report["k0"] << '\n';
  if (report.contains("spikes")) {
    for (const auto& sp : report["spikes"]) log << "theta = " << ctx.num(sp["theta"].get<double>()) << '\n';
  }
  OutputSet out(ctx.out);
  out.add("theory.json", ctx.sidecar(std::move(report)));
  out.commit();
  return kOk;
}

inline ensemble::SpikeModel parse_model(const std::string& s, const std::string& path) {
  if (s == "additive") return ensemble::SpikeModel::additive;
  if (s == "multiplicative") return ensemble::SpikeModel::multiplicative;
  throw ConfigError("config field '" + path + "': model must be 'additive' or 'multiplicative'");
}

inline int run_simulate(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("simulate", cfg, f);
  const Problem p = read_problem(f, ctx, 200, 400, true);
  ensemble::SpikeMcOptions opt;
  opt.reps = positive(f.get<Index>("reps", 2000), "reps");
  opt.master_seed = ctx.seed;
  opt.model = parse_model(f.get<std::string>("model", "additive"), "model");
  opt.couple_theta = f.get<bool>("couple_theta", true);
  opt.eigenvalues = f.get<Index>("eigenvalues", 0);
  opt.tau = p.tau;
  opt.threads = ctx.threads;
  const std::string method = f.get<std::string>("method", "gram");
  if (method == "svd") {
    opt.method = ensemble::EigenMethod::svd;
  } else if (method != "gram") {
    throw ConfigError("config field 'method': must be 'gram' or 'svd'");
  }
  f.finish();

  const ensemble::SpikeSamples samples = ensemble::run_spike_mc(p.sigma, p.signal, p.law, opt);
  json summary = json::array();
  if (samples.k0 > 0 && opt.model == ensemble::SpikeModel::additive) {
    const spikes::DeformedPopulation pop = spikes::deform(p.sigma, p.signal, p.tau);
    const spikes::SpikeTheory th = spikes::asymptotic_quantities(p.sigma, p.signal, pop, p.law);
    const Matrix tcov = th.theta_covariance();
    for (Index k = 0; k < samples.k0; ++k) {
      const auto fl = samples.fluctuations(k);
      const double mean = stats::mean(fl), var = stats::variance(fl);
      const double shift = th.spikes[static_cast<std::size_t>(k)].shift;
      const double var_theory = th.v(k, k) + tcov(k, k);
      summary.push_back({{"spike", k + 1},
                         {"theta", samples.theta[k]},
                         {"mean", mean},
                         {"mean_theory", shift},
                         {"standard_error", std::sqrt(var / static_cast<double>(fl.size()))},
                         {"variance", var},
                         {"variance_theory", var_theory},
                         {"ks_normal_fit", stats::ks_normal_fit(fl)}});
      log << "spike " << k + 1 << ": mean " << ctx.num(mean) << " (theory " << ctx.num(shift) << "), variance "
          << ctx.num(var) << " (theory " << ctx.num(var_theory) << ")\n";
    }
  }
  std::ostringstream csv;
  csv << ctx.csv_preamble();
  samples.write_csv(csv, ctx.digits);
  OutputSet out(ctx.out);
  out.add("simulate.csv", csv.str());
  out.add("simulate.json", ctx.sidecar({{"model", ensemble::to_string(samples.model)},
                                        {"law", samples.law},
                                        {"k0", samples.k0},
                                        {"reps", opt.reps},
                                        {"summary", summary}}));
  out.commit();
  return kOk;
}

/// Paired histograms of lambda_1 under several laws on common bins.
struct NonuniversalityResult {
  std::string csv;
  std::string ks_csv;
  json summary;
};

inline NonuniversalityResult nonuniversality(const Problem& p, const std::vector<std::string>& laws,
                                             const std::vector<ensemble::SpikeModel>& models, Index reps,
                                             const Context& ctx) {
  NonuniversalityResult r;
  std::ostringstream hist, ks;
  hist << ctx.csv_preamble() << "model,law,bin_lo,bin_hi,count,density,normal_fit_density\n";
  ks << ctx.csv_preamble() << "model,law_a,law_b,ks_distance\n";
  r.summary = json::array();
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    std::vector<std::vector<double>> samples;
    for (std::size_t li = 0; li < laws.size(); ++li) {
      ensemble::SpikeMcOptions opt;
      opt.reps = reps;
      opt.master_seed = stream_id({ctx.seed, static_cast<std::uint64_t>(mi), static_cast<std::uint64_t>(li)});
      opt.model = models[mi];
      opt.tau = p.tau;
      opt.threads = ctx.threads;
      opt.eigenvalues = 1;
      const auto s = ensemble::run_spike_mc(p.sigma, p.signal, ensemble::make_noise_law(laws[li]), opt);
      samples.push_back(s.lambdas(0));
    }
    std::vector<double> pooled;
    for (const auto& s : samples) pooled.insert(pooled.end(), s.begin(), s.end());
    const double lo = *std::min_element(pooled.begin(), pooled.end());
    const double hi = *std::max_element(pooled.begin(), pooled.end());
    const std::string model = ensemble::to_string(models[mi]);
    for (std::size_t li = 0; li < laws.size(); ++li) {
      const stats::Histogram h = stats::histogram_fd(samples[li], lo, hi);
      const double mu = stats::mean(samples[li]);
      const double sd = std::sqrt(stats::variance(samples[li]));
      const double total = static_cast<double>(samples[li].size());
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        const double width = h.edges[b + 1] - h.edges[b];
        const double mid = 0.5 * (h.edges[b] + h.edges[b + 1]);
        const double zz = (mid - mu) / sd;
        const double normal = std::exp(-0.5 * zz * zz) / (sd * std::sqrt(2.0 * std::numbers::pi));
        hist << model << ',' << laws[li] << ',' << ctx.num(h.edges[b]) << ',' << ctx.num(h.edges[b + 1]) << ','
             << h.counts[b] << ',' << ctx.num(static_cast<double>(h.counts[b]) / (total * width)) << ','
             << ctx.num(normal) << '\n';
      }
      r.summary.push_back({{"model", model}, {"law", laws[li]}, {"mean", mu}, {"sd", sd}});
      for (std::size_t lj = li + 1; lj < laws.size(); ++lj) {
        ks << model << ',' << laws[li] << ',' << laws[lj] << ','
           << ctx.num(stats::ks_two_sample(samples[li], samples[lj])) << '\n';
      }
    }
  }
  r.csv = hist.str();
  r.ks_csv = ks.str();
  return r;
}

inline int run_nonuniversality(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("nonuniversality", cfg, f);
  const Problem p = read_problem(f, ctx, 200, 400, false);
  const Index reps = positive(f.get<Index>("reps", 2000), "reps");
  std::vector<std::string> laws = {"gaussian", "three-point", "four-point"};
  if (f.has("laws")) laws = f.require<std::vector<std::string>>("laws");
  for (const auto& l : laws) parse_law(json(l), "laws");
  std::vector<ensemble::SpikeModel> models;
  for (const auto& s : f.get<std::vector<std::string>>("models", {"additive", "multiplicative"})) {
    models.push_back(parse_model(s, "models"));
  }
  f.finish();
  const auto r = nonuniversality(p, laws, models, reps, ctx);
  log << r.ks_csv.substr(ctx.csv_preamble().size());
  OutputSet out(ctx.out);
  out.add("nonuniversality.csv", r.csv);
  out.add("nonuniversality_ks.csv", r.ks_csv);
  out.add("nonuniversality.json", ctx.sidecar({{"reps", reps}, {"samples", r.summary}}));
  out.commit();
  return kOk;
}

inline json cv_json(const hetero::CriticalValues& cv) {
  return {{"kstar", cv.kstar}, {"nstar", cv.nstar},   {"reps", cv.reps},    {"quantile", cv.quantile},
          {"master_seed", cv.master_seed}, {"cv_ds", cv.cv_ds}, {"cv_rs", cv.cv_rs}};
}

inline int run_calibrate(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("calibrate", cfg, f);
  const Index kstar = f.get<Index>("kstar", 4);
  const Index nstar = f.get<Index>("nstar", 100);
  const Index reps = f.get<Index>("reps", 30000);
  const double q = f.get<double>("quantile", 0.95);
  f.finish();
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("config field 'quantile': must lie in (0, 1)");
  const auto cv = hetero::calibrate(kstar, nstar, reps, q, ctx.seed, ctx.threads);
  log << "cv_DS = " << ctx.num(cv.cv_ds) << ", cv_RS = " << ctx.num(cv.cv_rs) << '\n';
  std::ostringstream csv;
  csv << ctx.csv_preamble() << "kstar,nstar,reps,quantile,cv_ds,cv_rs\n"
      << kstar << ',' << nstar << ',' << reps << ',' << ctx.num(q) << ',' << ctx.num(cv.cv_ds) << ','
      << ctx.num(cv.cv_rs) << '\n';
  OutputSet out(ctx.out);
  out.add("calibration.csv", csv.str());
  out.add("calibration.json", ctx.sidecar(cv_json(cv)));
  out.commit();
  return kOk;
}

inline Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double x = 0.0;
      const char* b = cell.data();
      while (b < cell.data() + cell.size() && *b == ' ') ++b;
      const auto res = std::from_chars(b, cell.data() + cell.size(), x);
      if (res.ec != std::errc()) {
        throw ConfigError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": row length differs from the first row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("data file '" + path + "' has no rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

/// Either explicit critical values or the parameters of a fresh calibration.
struct CvSpec {
  bool explicit_values = false;
  double cv_ds = 0.0, cv_rs = 0.0;
  Index nstar = 100, reps = 30000;
  double quantile = 0.95;
};

inline CvSpec parse_cv_spec(Fields& f) {
  CvSpec s;
  if (f.has("critical_values")) {
    Fields c(f.raw("critical_values"), "critical_values");
    s.explicit_values = true;
    s.cv_ds = c.require<double>("cv_ds");
    s.cv_rs = c.require<double>("cv_rs");
    c.finish();
  }
  if (f.has("calibration")) {
    Fields c(f.raw("calibration"), "calibration");
    s.nstar = c.get<Index>("nstar", s.nstar);
    s.reps = c.get<Index>("reps", s.reps);
    s.quantile = c.get<double>("quantile", s.quantile);
    c.finish();
  }
  return s;
}

inline hetero::CriticalValues resolve_cv(const CvSpec& s, Index kstar, const Context& ctx) {
  if (s.explicit_values) {
    hetero::CriticalValues cv;
    cv.kstar = kstar;
    cv.reps = 0;
    cv.cv_ds = s.cv_ds;
    cv.cv_rs = s.cv_rs;
    return cv;
  }
  return hetero::calibrate(kstar, s.nstar, s.reps, s.quantile, stream_id({ctx.seed, hetero::kCalibrationTag}),
                           ctx.threads);
}

inline std::vector<hetero::CellSpec> parse_cells(const json& v) {
  if (!v.is_array() || v.empty()) throw ConfigError("config field 'cells': expected a non-empty array");
  std::vector<hetero::CellSpec> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Fields f(v[i], "cells[" + std::to_string(i) + "]");
    hetero::CellSpec c;
    c.sigma = static_cast<int>(f.get<Index>("sigma", 1));
    c.law = f.get<std::string>("law", "gaussian");
    c.n = positive(f.get<Index>("n", 200), "n");
    c.m = positive(f.get<Index>("m", 100), "m");
    c.clusters = positive(f.get<Index>("clusters", 1), "clusters");
    c.center_scale = f.get<double>("center_scale", 1.0);
    if (f.has("center")) {
      const auto cc = to_doubles(f.raw("center"), f.child("center"));
      c.fixed_center = Eigen::Map<const Vector>(cc.data(), static_cast<Index>(cc.size()));
    }
    f.finish();
    hetero::table_recipe(c.sigma);
    ensemble::make_noise_law(c.law);
    if (c.clusters > 4) throw ConfigError("cells: clusters must lie in 1..4");
    out.push_back(std::move(c));
  }
  return out;
}

inline std::string experiment_csv(const hetero::ExperimentReport& rep, const Context& ctx) {
  std::ostringstream os;
  os << ctx.csv_preamble() << "# reps=" << rep.reps << " cv_ds=" << ctx.num(rep.cv.cv_ds)
     << " cv_rs=" << ctx.num(rep.cv.cv_rs) << '\n';
  rep.write_table_csv(os, ctx.digits);
  return os.str();
}

inline json experiment_json(const hetero::ExperimentReport& rep) {
  json cells = json::array();
  for (const auto& c : rep.cells) {
    cells.push_back({{"sigma", c.spec.sigma},
                     {"law", c.spec.law},
                     {"n", c.spec.n},
                     {"m", c.spec.m},
                     {"clusters", c.spec.clusters},
                     {"rate_ds", c.rate_ds()},
                     {"rate_rs", c.rate_rs()}});
  }
  return {{"reps", rep.reps}, {"critical_values", cv_json(rep.cv)}, {"cells", cells}};
}

inline int run_test(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("test", cfg, f);
  const Index kstar = f.get<Index>("kstar", 4);
  if (kstar < 2) throw ConfigError("config field 'kstar': must be at least 2");
  const bool center = f.get<bool>("center", false);
  const bool has_data = f.has("data");
  std::string data_path;
  std::vector<hetero::CellSpec> cells;
  Index reps = 0;
  if (has_data) {
    data_path = f.require<std::string>("data");
  } else {
    cells = parse_cells(f.raw("cells"));
    reps = positive(f.get<Index>("reps", 1000), "reps");
  }
  const CvSpec cv_spec = parse_cv_spec(f);
  f.finish();
  const hetero::CriticalValues cv = resolve_cv(cv_spec, kstar, ctx);

  OutputSet out(ctx.out);
  if (has_data) {
    const Matrix data = read_csv_matrix(data_path);
    const hetero::Decision d = hetero::detect(data, cv, center);
    std::ostringstream csv;
    csv << ctx.csv_preamble() << "statistic,value,critical_value,reject\n"
        << "DS_" << kstar << ',' << ctx.num(d.stats.ds) << ',' << ctx.num(cv.cv_ds) << ',' << d.reject_ds << '\n'
        << "RS_" << kstar << ',' << ctx.num(d.stats.rs) << ',' << ctx.num(cv.cv_rs) << ',' << d.reject_rs << '\n';
    log << csv.str().substr(ctx.csv_preamble().size());
    out.add("test.csv", csv.str());
    out.add("test.json", ctx.sidecar({{"ds", d.stats.ds},
                                      {"rs", d.stats.rs},
                                      {"reject_ds", d.reject_ds},
                                      {"reject_rs", d.reject_rs},
                                      {"critical_values", cv_json(cv)}}));
  } else {
    hetero::ExperimentOptions eo;
    eo.threads = ctx.threads;
    eo.center = center;
    const auto rep = hetero::run_experiment(cells, reps, cv, ctx.seed, eo);
    const std::string csv = experiment_csv(rep, ctx);
    log << csv.substr(ctx.csv_preamble().size());
    out.add("test.csv", csv);
    out.add("test.json", ctx.sidecar(experiment_json(rep)));
  }
  out.commit();
  return kOk;
}

inline Index scaled(Index base, double scale) {
  return std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(base) * scale)));
}

/// Histogram rows "label,statistic,bin_lo,bin_hi,count" on bins shared by
/// the null and alternative samples.
inline void paired_histograms(std::ostream& os, const std::string& label, const std::string& stat,
                              const std::vector<double>& null, const std::vector<double>& alt, const Context& ctx) {
  std::vector<double> pooled = null;
  pooled.insert(pooled.end(), alt.begin(), alt.end());
  const double lo = *std::min_element(pooled.begin(), pooled.end());
  const double hi = *std::max_element(pooled.begin(), pooled.end());
  const stats::Histogram hn = stats::histogram_fd(pooled, lo, hi);
  const auto count = [&](const std::vector<double>& xs) {
    std::vector<std::size_t> c(hn.counts.size(), 0);
    const std::size_t bins = c.size();
    for (const double x : xs) {
      std::size_t b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
      c[std::min(b, bins - 1)]++;
    }
    return c;
  };
  const auto cn = count(null), ca = count(alt);
  for (std::size_t b = 0; b < cn.size(); ++b) {
    os << label << ',' << stat << ',' << ctx.num(hn.edges[b]) << ',' << ctx.num(hn.edges[b + 1]) << ',' << cn[b]
       << ',' << ca[b] << '\n';
  }
}

inline int run_reproduce(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("reproduce", cfg, f);
  const bool has_table = f.has("table"), has_figure = f.has("figure");
  if (has_table == has_figure) throw ConfigError("reproduce needs exactly one of 'table' or 'figure'");
  const int table = static_cast<int>(f.get<Index>("table", 0));
  const int figure = static_cast<int>(f.get<Index>("figure", 0));
  const double scale = f.get<double>("scale", 1.0);
  if (!(scale > 0.0)) throw ConfigError("config field 'scale': must be positive");
  const Index cal_reps = f.get<Index>("calibration_reps", 30000);
  f.finish();

  OutputSet out(ctx.out);
  if (has_table) {
    if (table < 1 || table > 4) throw ConfigError("config field 'table': must be 1, 2, 3 or 4");
    const Index reps = scaled(10000, scale);
    const auto cv = hetero::calibrate(4, 100, cal_reps, 0.95, stream_id({ctx.seed, hetero::kCalibrationTag}),
                                      ctx.threads);
    hetero::ExperimentOptions eo;
    eo.threads = ctx.threads;
    const auto grid = hetero::table_grid(1);
    const auto rep = table == 1 ? hetero::run_size_experiment(grid, reps, cv, ctx.seed, eo)
                                : hetero::run_power_experiment(table, grid, reps, cv, ctx.seed, eo);
    const std::string csv = experiment_csv(rep, ctx);
    log << csv.substr(ctx.csv_preamble().size());
    const std::string name = "table" + std::to_string(table);
    out.add(name + ".csv", csv);
    out.add(name + ".json", ctx.sidecar(experiment_json(rep)));
  } else if (figure == 1) {
    Problem p;
    p.m = 200;
    p.n = 400;
    p.sigma = spectra::make_covariance(spectra::CovarianceRecipe::identity(), p.m, 0);
    p.signal = spikes::SignalModel::localized(p.m, p.n, std::sqrt(5.25));
    const Index reps = scaled(5000, scale);
    const auto r = nonuniversality(p, {"gaussian", "three-point", "four-point"},
                                   {ensemble::SpikeModel::additive, ensemble::SpikeModel::multiplicative}, reps, ctx);
    log << r.ks_csv.substr(ctx.csv_preamble().size());
    out.add("figure1.csv", r.csv);
    out.add("figure1_ks.csv", r.ks_csv);
    out.add("figure1.json", ctx.sidecar({{"reps", reps}, {"samples", r.summary}}));
  } else if (figure == 2) {
    const Index reps = scaled(5000, scale);
    const auto cv = hetero::calibrate(4, 100, cal_reps, 0.95, stream_id({ctx.seed, hetero::kCalibrationTag}),
                                      ctx.threads);
    std::vector<hetero::CellSpec> grid;
    for (const Index m : {100, 200, 400}) {
      for (const Index k : {1, 2}) {
        hetero::CellSpec c;
        c.m = m;
        c.n = 2 * m;
        c.clusters = k;
        c.fixed_center = Vector::Zero(m);
        c.fixed_center[0] = 1.5;
        grid.push_back(c);
      }
    }
    hetero::ExperimentOptions eo;
    eo.threads = ctx.threads;
    eo.keep_statistics = true;
    const auto rep = hetero::run_experiment(grid, reps, cv, ctx.seed, eo);
    std::ostringstream csv;
    csv << ctx.csv_preamble() << "M,statistic,bin_lo,bin_hi,count_null,count_alternative\n";
    for (std::size_t i = 0; i < rep.cells.size(); i += 2) {
      const auto& null = rep.cells[i];
      const auto& alt = rep.cells[i + 1];
      const std::string label = std::to_string(null.spec.m);
      paired_histograms(csv, label, "DS_4", null.ds, alt.ds, ctx);
      paired_histograms(csv, label, "RS_4", null.rs, alt.rs, ctx);
      log << "M=" << label << ": size DS " << ctx.num(null.rate_ds()) << " RS " << ctx.num(null.rate_rs())
          << ", power DS " << ctx.num(alt.rate_ds()) << " RS " << ctx.num(alt.rate_rs()) << '\n';
    }
    out.add("figure2.csv", csv.str());
    out.add("figure2.json", ctx.sidecar(experiment_json(rep)));
  } else {
    throw ConfigError("config field 'figure': must be 1 or 2");
  }
  out.commit();
  return kOk;
}

inline int run_verify(const json& cfg, std::ostream& log) {
  Fields f(cfg, "");
  Context ctx = read_context("verify", cfg, f);
  locallaw::VerificationOptions opt;
  opt.n = f.get<Index>("n", opt.n);
  opt.phi = f.get<double>("phi", opt.phi);
  opt.seeds = positive(f.get<Index>("seeds", opt.seeds), "seeds");
  opt.probes = positive(f.get<Index>("probes", opt.probes), "probes");
  if (f.has("sigma")) opt.recipe = parse_sigma(f.raw("sigma"), "sigma").recipe;
  if (f.has("d2")) opt.d2 = to_doubles(f.raw("d2"), "d2");
  opt.factor_lower = f.get<double>("factor_lower", opt.factor_lower);
  opt.factor_upper = f.get<double>("factor_upper", opt.factor_upper);
  f.finish();
  opt.master_seed = ctx.seed;
  opt.threads = ctx.threads;
  const auto rep = locallaw::run_verification(opt);

  std::ostringstream csv;
  csv << ctx.csv_preamble() << "check,value,lower,upper,pass,detail\n";
  json checks = json::array();
  for (const auto& c : rep.checks) {
    csv << csv_field(c.name) << ',' << ctx.num(c.value) << ',' << ctx.num(c.lower) << ',' << ctx.num(c.upper) << ','
        << (c.pass ? "PASS" : "FAIL") << ',' << csv_field(c.detail) << '\n';
    log << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << ctx.num(c.value) << '\n';
    checks.push_back({{"check", c.name}, {"value", c.value}, {"pass", c.pass}});
  }
  OutputSet out(ctx.out);
  out.add("verify.csv", csv.str());
  out.add("verify.json", ctx.sidecar({{"n_small", rep.n_small},
                                      {"n_large", rep.n_large},
                                      {"seeds", rep.seeds},
                                      {"skipped", rep.skipped},
                                      {"all_pass", rep.all_pass()},
                                      {"checks", checks}}));
  out.commit();
  return rep.all_pass() ? kOk : kVerificationFailure;
}

/// Runs one subcommand on a config already merged with the overrides.
inline int run_command(const std::string& command, const json& cfg, std::ostream& log) {
  if (command == "theory") return run_theory(cfg, log);
  if (command == "simulate") return run_simulate(cfg, log);
  if (command == "nonuniversality") return run_nonuniversality(cfg, log);
  if (command == "calibrate") return run_calibrate(cfg, log);
  if (command == "test") return run_test(cfg, log);
  if (command == "reproduce") return run_reproduce(cfg, log);
  if (command == "verify") return run_verify(cfg, log);
  throw ConfigError("unknown subcommand '" + command + "'");
}

/// Maps an exception from run_command to an exit code.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const CapabilityError*>(&e)) {
    return kConfigError;
  }
  return kNumericalError;
}

}  // namespace spikefluct::cli
