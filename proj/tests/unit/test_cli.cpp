#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "spikefluct/cli/commands.hpp"

using namespace spikefluct;
using cli::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spikefluct_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& cmd, json cfg, std::string* log = nullptr) {
  std::ostringstream os;
  const int code = cli::run_command(cmd, cfg, os);
  if (log) *log = os.str();
  return code;
}

}  // namespace

TEST(Config, ParseErrorReportsLineAndColumn) {
  try {
    cli::parse_json("{\n  \"m\": 200,\n  \"n\": ,\n}", "cfg.json");
    FAIL() << "expected ConfigError";
  } catch (const cli::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cfg.json:3:"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeysAreRejected) {
  const json cfg = {{"m", 20}, {"n", 40}, {"signal", {{"type", "localized"}, {"d2", {5.25}}}}, {"bogus", 1}};
  EXPECT_THROW(run("theory", cfg), cli::ConfigError);
  const json nested = {{"signal", {{"type", "localized"}, {"d2", {5.25}}, {"extra", true}}}};
  EXPECT_THROW(run("theory", nested), cli::ConfigError);
}

TEST(Config, TypeErrorsAreConfigErrors) {
  EXPECT_THROW(run("theory", json{{"m", "200"}, {"signal", {{"type", "localized"}, {"d2", {5.25}}}}}),
               cli::ConfigError);
  EXPECT_THROW(run("theory", json{{"m", -3}, {"signal", {{"type", "localized"}, {"d2", {5.25}}}}}),
               cli::ConfigError);
  EXPECT_THROW(run("calibrate", json{{"quantile", 1.5}}), cli::ConfigError);
}

TEST(Config, ExitCodeMapping) {
  EXPECT_EQ(cli::exit_code_for(cli::ConfigError("x")), cli::kConfigError);
  EXPECT_EQ(cli::exit_code_for(InvalidArgument("x")), cli::kConfigError);
  EXPECT_EQ(cli::exit_code_for(NumericalError("x")), cli::kNumericalError);
  EXPECT_EQ(cli::exit_code_for(DomainError("x")), cli::kNumericalError);
}

TEST(Theory, LocalizedIdentityReport) {
  const fs::path out = scratch("theory");
  const json cfg = {{"m", 200},
                    {"n", 400},
                    {"sigma", {{"type", "identity"}}},
                    {"signal", {{"type", "localized"}, {"d2", {5.25}}}},
                    {"out", out.string()}};
  ASSERT_EQ(run("theory", cfg), cli::kOk);
  const json rep = json::parse(slurp(out / "theory.json"));
  EXPECT_NEAR(rep["results"]["edge"]["lambda_plus"].get<double>(), 2.9142135624, 1e-9);
  EXPECT_NEAR(rep["results"]["spikes"][0]["theta"].get<double>(), 6.8452380952, 1e-9);
  EXPECT_EQ(rep["master_seed"].get<std::uint64_t>(), cli::kDefaultSeed);
  EXPECT_EQ(rep["config"]["m"].get<int>(), 200);
  fs::remove_all(out);
}

TEST(Theory, SubcriticalGivesAdvisory) {
  const fs::path out = scratch("subcritical");
  const json cfg = {{"m", 50}, {"n", 100}, {"signal", {{"type", "localized"}, {"d2", {0.3}}}}, {"out", out.string()}};
  ASSERT_EQ(run("theory", cfg), cli::kOk);
  const json rep = json::parse(slurp(out / "theory.json"));
  EXPECT_EQ(rep["results"]["k0"].get<int>(), 0);
  EXPECT_TRUE(rep["results"].contains("advisory"));
  fs::remove_all(out);
}

TEST(Simulate, CsvIsThreadInvariantAndEmbedsConfig) {
  std::string first;
  for (const unsigned threads : {1u, 3u}) {
    const fs::path out = scratch("simulate" + std::to_string(threads));
    const json cfg = {{"m", 30},
                      {"n", 60},
                      {"signal", {{"type", "localized"}, {"d2", {5.25}}}},
                      {"law", "three-point"},
                      {"reps", 40},
                      {"master_seed", 99},
                      {"threads", threads},
                      {"out", out.string()}};
    ASSERT_EQ(run("simulate", cfg), cli::kOk);
    const std::string csv = slurp(out / "simulate.csv");
    EXPECT_NE(csv.find("# master_seed=99"), std::string::npos);
    EXPECT_NE(csv.find("\"law\":\"three-point\""), std::string::npos);
    if (first.empty()) {
      first = csv;
    } else {
      EXPECT_EQ(csv, first);
    }
    fs::remove_all(out);
  }
}

TEST(Calibrate, WritesCsvAndSidecar) {
  const fs::path out = scratch("calibrate");
  const json cfg = {{"kstar", 4}, {"nstar", 30}, {"reps", 200}, {"out", out.string()}};
  ASSERT_EQ(run("calibrate", cfg), cli::kOk);
  EXPECT_TRUE(fs::exists(out / "calibration.csv"));
  const json meta = json::parse(slurp(out / "calibration.json"));
  EXPECT_GT(meta["results"]["cv_rs"].get<double>(), meta["results"]["cv_ds"].get<double>());
  fs::remove_all(out);
}

TEST(Test, DataFileAndFailureLeavesNoOutput) {
  const fs::path out = scratch("test_data");
  const fs::path data = fs::temp_directory_path() / "spikefluct_cli_test_data.csv";
  {
    std::ofstream f(data);
    Stream s(3, 0);
    for (int i = 0; i < 30; ++i) {
      for (int j = 0; j < 60; ++j) f << (j ? "," : "") << s.normal() + (i == 0 ? (j < 30 ? 3.0 : -3.0) : 0.0);
      f << '\n';
    }
  }
  const json cfg = {{"data", data.string()},
                    {"critical_values", {{"cv_ds", 3.0}, {"cv_rs", 19.0}}},
                    {"out", out.string()}};
  ASSERT_EQ(run("test", cfg), cli::kOk);
  const std::string csv = slurp(out / "test.csv");
  EXPECT_NE(csv.find("DS_4,"), std::string::npos);
  fs::remove_all(out);

  const json bad = {{"data", "/nonexistent/file.csv"},
                    {"critical_values", {{"cv_ds", 3.0}, {"cv_rs", 19.0}}},
                    {"out", out.string()}};
  EXPECT_THROW(run("test", bad), cli::ConfigError);
  EXPECT_FALSE(fs::exists(out / "test.csv"));
  fs::remove(data);
}

TEST(Reproduce, NeedsExactlyOneTarget) {
  EXPECT_THROW(run("reproduce", json::object()), cli::ConfigError);
  EXPECT_THROW(run("reproduce", json{{"table", 1}, {"figure", 2}}), cli::ConfigError);
  EXPECT_THROW(run("reproduce", json{{"table", 7}}), cli::ConfigError);
}

TEST(Verify, SmallRunWritesChecks) {
  const fs::path out = scratch("verify");
  const json cfg = {{"n", 40}, {"seeds", 2}, {"probes", 1}, {"out", out.string()}};
  const int code = run("verify", cfg);
  EXPECT_TRUE(code == cli::kOk || code == cli::kVerificationFailure);
  const std::string csv = slurp(out / "verify.csv");
  EXPECT_NE(csv.find("check,value,lower,upper,pass,detail"), std::string::npos);
  fs::remove_all(out);
}

TEST(Output, CsvFieldQuoting) {
  EXPECT_EQ(cli::csv_field("plain"), "plain");
  EXPECT_EQ(cli::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(cli::csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}
