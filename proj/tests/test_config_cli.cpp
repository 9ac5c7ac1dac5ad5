#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "stepscale/config.hpp"
#include "stepscale/errors.hpp"
#include "stepscale/records.hpp"

namespace stepscale {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stepscale_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kSmokeWorkload = R"({
  "workload": {
    "id": "smoke",
    "goal_error": 0.2,
    "eval_interval": 16,
    "max_steps": 1500,
    "data": {"kind": "synth", "seed": 3, "classes": 3, "dims": 6, "per_class": 120, "separation": 4.0},
    "model": {"architecture": "simple-mlp", "widths": [6, 12, 3]},
    "optimizer": {"algorithm": "sgd"},
    "search_space": [{"name": "learning_rate", "scale": "log10", "lower": 0.01, "upper": 1.0}]
  }
})";

fs::path smoke_config(const fs::path& dir) {
  write(dir / "workloads" / "smoke.json", kSmokeWorkload);
  write(dir / "study.json", R"({
    "include": "workloads/smoke.json",
    "budget": 3,
    "seed": 2,
    "grid": {"batch_sizes": [8, 16, 32], "sparsities": [0.0]},
    "lipschitz": {"stride": 10, "steps": 30, "batch_size": 8, "sparsities": [0.0, 0.9]}
  })");
  return dir / "study.json";
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// ---- config ----

TEST(Config, IncludedBlocksAreOverriddenByIncluder) {
  const fs::path dir = scratch_dir("include");
  const auto path = smoke_config(dir);
  write(dir / "override.json", R"({"include": ["study.json"], "workload": {"goal_error": 0.05}})");
  const StudyConfig c = load_study_config(dir / "override.json");
  EXPECT_EQ(c.workload.goal_error, 0.05);
  EXPECT_EQ(c.workload.eval_interval, 16);
  EXPECT_EQ(c.budget, 3u);
  EXPECT_EQ(c.batch_sizes, (std::vector<std::size_t>{8, 16, 32}));
  EXPECT_EQ(load_study_config(path).workload.goal_error, 0.2);
}

TEST(Config, IncludeCycleIsConfigError) {
  const fs::path dir = scratch_dir("cycle");
  write(dir / "a.json", R"({"include": "b.json"})");
  write(dir / "b.json", R"({"include": "a.json"})");
  EXPECT_THROW(load_config_json(dir / "a.json"), ConfigError);
}

TEST(Config, MissingFileIsIoErrorAndBadJsonIsConfigError) {
  const fs::path dir = scratch_dir("bad");
  EXPECT_THROW(load_config_json(dir / "none.json"), IoError);
  write(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_config_json(dir / "bad.json"), ConfigError);
  write(dir / "partial.json", R"({"workload": {"goal_error": 0.1}})");
  EXPECT_THROW(load_study_config(dir / "partial.json"), ConfigError);
}

TEST(Config, EchoRoundTrips) {
  const fs::path dir = scratch_dir("echo");
  const StudyConfig c = load_study_config(smoke_config(dir));
  const StudyConfig back = study_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, GridOverride) {
  const fs::path dir = scratch_dir("grid");
  StudyConfig c = load_study_config(smoke_config(dir));
  apply_grid_override(c, "B=2,4;s=0,0.5,0.9");
  EXPECT_EQ(c.batch_sizes, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(c.sparsities, (std::vector<double>{0.0, 0.5, 0.9}));
  apply_grid_override(c, "B=64");
  EXPECT_EQ(c.batch_sizes, (std::vector<std::size_t>{64}));
  EXPECT_EQ(c.sparsities.size(), 3u);
  EXPECT_THROW(apply_grid_override(c, "lr=0.1"), ConfigError);
  EXPECT_THROW(apply_grid_override(c, "B=two"), ConfigError);
  EXPECT_THROW(apply_grid_override(c, "B"), ConfigError);
}

// ---- cli ----

TEST(Cli, DryRunEchoesResolvedConfig) {
  const fs::path dir = scratch_dir("dry");
  const auto r = cli({"run", "--config", smoke_config(dir).string(), "--dry-run", "--budget", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("schema"), "stepscale.config/1");
  EXPECT_EQ(j.at("budget"), 7);
  EXPECT_EQ(j.at("workload").at("goal_error"), 0.2);
}

TEST(Cli, RunWritesSummaryAndRerunIsIdempotent) {
  const fs::path dir = scratch_dir("run");
  const auto cfg = smoke_config(dir).string();
  const auto out = (dir / "results").string();
  const auto first = cli({"run", "--config", cfg, "--out", out});
  ASSERT_EQ(first.code, 0) << first.out << first.err;
  EXPECT_NE(first.out.find("executed 9 trials"), std::string::npos);
  EXPECT_EQ(read_summary_csv(fs::path(out) / "summary.csv").rows.size(), 3u);
  EXPECT_EQ(slurp(fs::path(out) / "summary.csv").rfind("# stepscale.summary/1", 0), 0u);
  const auto summary = slurp(fs::path(out) / "summary.csv");

  const auto second = cli({"run", "--config", cfg, "--out", out});
  ASSERT_EQ(second.code, 0);
  EXPECT_NE(second.out.find("executed 0 trials, reused 9"), std::string::npos);
  EXPECT_EQ(slurp(fs::path(out) / "summary.csv"), summary);
}

TEST(Cli, UnreachableGoalIsPartial) {
  const fs::path dir = scratch_dir("partial");
  smoke_config(dir);
  write(dir / "hard.json", R"({"include": "study.json", "budget": 1, "workload": {"goal_error": 0.0, "max_steps": 32,
                               "data": {"noise": 8.0}},
                               "grid": {"batch_sizes": [8], "sparsities": [0.0]}})");
  const auto r = cli({"run", "--config", (dir / "hard.json").string(), "--out", (dir / "res").string()});
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, ConfigAndIoErrorsHaveDistinctCodes) {
  const fs::path dir = scratch_dir("codes");
  EXPECT_EQ(cli({"run", "--config", (dir / "missing.json").string()}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  write(dir / "bad.json", R"({"workload": {"goal_error": 2.0}})");
  EXPECT_EQ(cli({"run", "--config", (dir / "bad.json").string(), "--out", dir.string()}).code, 2);

  smoke_config(dir);
  write(dir / "idx.json", R"({"include": "study.json",
      "workload": {"data": {"kind": "idx", "images": "no-such-images", "labels": "no-such-labels"}}})");
  const auto r = cli({"run", "--config", (dir / "idx.json").string(), "--out", (dir / "res").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("STEPSCALE_DATA_ROOT"), std::string::npos);
}

void write_exact_summary(const fs::path& dir) {
  StudyTable t;
  for (double s : {0.0, 0.9}) {
    const double c1 = s > 0 ? 4000 : 2000, c2 = s > 0 ? 120 : 100;
    for (std::size_t b : {2, 4, 8, 16}) {
      StudyRow r;
      r.batch_size = b;
      r.sparsity = s;
      r.k_star = static_cast<std::int64_t>(c1 / b + c2);
      r.n_complete = 1;
      t.rows.push_back(r);
    }
  }
  write_summary_csv(dir / "summary.csv", t);
}

TEST(Cli, FitOnExactFixtureHasZeroResidual) {
  const fs::path dir = scratch_dir("fit");
  write_exact_summary(dir);
  const auto r = cli({"fit", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const CsvTable fits = read_csv(dir / "fits.csv");
  ASSERT_EQ(fits.rows.size(), 2u);
  EXPECT_EQ(std::stod(fits.rows[0][fits.column("c1")]), 2000.0);
  EXPECT_EQ(std::stod(fits.rows[0][fits.column("c2")]), 100.0);
  EXPECT_LT(std::stod(fits.rows[0][fits.column("residual")]), 1e-9);
  EXPECT_EQ(read_csv(dir / "fit_curve.csv").rows.size(), 8u);
  EXPECT_EQ(slurp(dir / "fits.csv").rfind("# stepscale.fits/1", 0), 0u);
}

TEST(Cli, DecayFormChangesLabelsOnly) {
  const fs::path dir = scratch_dir("fit_decay");
  write_exact_summary(dir);
  ASSERT_EQ(cli({"fit", "--out", dir.string(), "--form", "fixed"}).code, 0);
  const CsvTable fixed = read_csv(dir / "fits.csv");
  ASSERT_EQ(cli({"fit", "--out", dir.string(), "--form", "decay"}).code, 0);
  const CsvTable decay = read_csv(dir / "fits.csv");
  EXPECT_EQ(fixed.rows[0][fixed.column("c1")], decay.rows[0][decay.column("c1")]);
  EXPECT_EQ(decay.rows[0][decay.column("form")], "decaying-lr");
  EXPECT_EQ(decay.rows[0][decay.column("c1_symbol")], "c~1");
  EXPECT_EQ(fixed.rows[0][fixed.column("c1_symbol")], "c1");
}

TEST(Cli, FitHoldoutIsPredictedNotFitted) {
  const fs::path dir = scratch_dir("fit_holdout");
  write_exact_summary(dir);
  ASSERT_EQ(cli({"fit", "--out", dir.string(), "--holdout", "16"}).code, 0);
  const CsvTable fits = read_csv(dir / "fits.csv");
  EXPECT_EQ(fits.rows[0][fits.column("n_points")], "3");
  const CsvTable curve = read_csv(dir / "fit_curve.csv");
  int held = 0;
  for (const auto& row : curve.rows) held += row[curve.column("held_out")] == "1";
  EXPECT_EQ(held, 2);
}

TEST(Cli, FitSkipsSparsityWithTooFewRows) {
  const fs::path dir = scratch_dir("fit_skip");
  StudyTable t;
  StudyRow r;
  r.batch_size = 8;
  r.sparsity = 0.5;
  r.k_star = 100;
  t.rows.push_back(r);
  write_summary_csv(dir / "summary.csv", t);
  const auto res = cli({"fit", "--out", dir.string()});
  EXPECT_EQ(res.code, 3);
  EXPECT_NE(res.err.find("skipping sparsity 0.5"), std::string::npos);
}

TEST(Cli, EmptyDirectoryReportListsMissingInputs) {
  const fs::path dir = scratch_dir("report_empty");
  const std::string text = cli::render_report(dir);
  EXPECT_NE(text.find("Sections rendered: 0"), std::string::npos);
  for (const char* f : {"summary.csv", "fits.csv", "lipschitz_summary.csv", "ratios.csv"}) {
    EXPECT_NE(text.find(std::string("- ") + f), std::string::npos) << f;
  }
}

TEST(Cli, ReportNormalizesToSmallestBatch) {
  const fs::path dir = scratch_dir("report_norm");
  write_exact_summary(dir);
  ASSERT_EQ(cli({"report", "--out", dir.string()}).code, 0);
  const std::string text = slurp(dir / "report.md");
  EXPECT_NE(text.find("| 0 | 2 | 1100 | 1 |"), std::string::npos) << text;
  EXPECT_NE(text.find("| 0.9 | 2 | 2120 | 1 |"), std::string::npos);
}

TEST(Cli, LipschitzRatiosAndReportChain) {
  const fs::path dir = scratch_dir("chain");
  const auto cfg = smoke_config(dir).string();
  const auto out = (dir / "res").string();
  const auto lip = cli({"lipschitz", "--config", cfg, "--out", out});
  ASSERT_EQ(lip.code, 0) << lip.err;
  const CsvTable trace = read_csv(fs::path(out) / "lipschitz_trace.csv");
  EXPECT_EQ(trace.rows.size(), 6u);  // 30 steps / stride 10, two sparsities
  write_exact_summary(out);
  ASSERT_EQ(cli({"fit", "--out", out}).code, 0);
  const auto rat = cli({"ratios", "--out", out});
  ASSERT_EQ(rat.code, 0) << rat.err;
  const CsvTable ratios = read_csv(fs::path(out) / "ratios.csv");
  ASSERT_EQ(ratios.rows.size(), 1u);
  EXPECT_EQ(ratios.rows[0][ratios.column("fitted_c1_ratio")], "2");
  ASSERT_EQ(cli({"report", "--out", out}).code, 0);
  const std::string text = slurp(fs::path(out) / "report.md");
  EXPECT_NE(text.find("All inputs present."), std::string::npos);
  const auto& row = ratios.rows[0];
  EXPECT_NE(text.find("| " + row[ratios.column("c1_ratio")] + " |"), std::string::npos);
}

}  // namespace
}  // namespace stepscale
