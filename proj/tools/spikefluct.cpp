// spikefluct: command-line front end.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "spikefluct/cli/commands.hpp"

namespace {

using spikefluct::cli::Overrides;

struct Flags {
  std::string config;
  Overrides ov;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help, Flags& flags) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", flags.config, "JSON configuration file")->check(CLI::ExistingFile);
  sub->add_option("--seed", flags.ov.seed, "master seed");
  sub->add_option("--out", flags.ov.out, "output directory");
  sub->add_option("--threads", flags.ov.threads, "worker threads (0 = hardware concurrency)");
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiked eigenvalue fluctuations and mean-heterogeneity tests"};
  app.require_subcommand(1);
  app.set_version_flag("--version", spikefluct::kVersion);
  Flags flags;

  add_command(app, "theory", "edge, thresholds, theta_k and L/V/W for a configuration", flags);
  add_command(app, "simulate", "Monte-Carlo spike eigenvalues", flags)
      ->add_option("--reps", flags.ov.reps, "replications");
  add_command(app, "nonuniversality", "paired histograms under moment-matched laws", flags)
      ->add_option("--reps", flags.ov.reps, "replications");
  auto* cal = add_command(app, "calibrate", "critical values of DS and RS", flags);
  cal->add_option("--reps", flags.ov.reps, "replications");
  cal->add_option("--kstar", flags.ov.kstar, "largest number of clusters under H1");
  cal->add_option("--nstar", flags.ov.nstar, "size of the square Gaussian calibration matrix");
  auto* test = add_command(app, "test", "size and power of DS and RS, or a test on a data matrix", flags);
  test->add_option("--reps", flags.ov.reps, "replications per cell");
  test->add_option("--kstar", flags.ov.kstar, "largest number of clusters under H1");
  auto* rep = add_command(app, "reproduce", "regenerate a published table or figure", flags);
  rep->add_option("--table", flags.ov.table, "table 1 (size) or 2-4 (power for K = 2, 3, 4)");
  rep->add_option("--figure", flags.ov.figure, "figure 1 (nonuniversality) or 2 (DS/RS distributions)");
  rep->add_option("--scale", flags.ov.scale, "fraction of the published replication count");
  auto* ver = add_command(app, "verify", "local-law and master-matrix checks", flags);
  ver->add_option("--n", flags.ov.n, "smaller sample size N; the larger is 4N");
  ver->add_option("--seeds", flags.ov.seeds, "seeds per size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : spikefluct::cli::kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    spikefluct::cli::json cfg = flags.config.empty() ? spikefluct::cli::json::object()
                                                     : spikefluct::cli::load_json_file(flags.config);
    spikefluct::cli::apply_overrides(cfg, flags.ov);
    return spikefluct::cli::run_command(command, cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "spikefluct " << command << ": " << e.what() << '\n';
    return spikefluct::cli::exit_code_for(e);
  }
}
