#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stepscale/analysis.hpp"
#include "stepscale/config.hpp"
#include "stepscale/errors.hpp"
#include "stepscale/records.hpp"

namespace stepscale::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kConfigSchema = "stepscale.config/1";
constexpr const char* kFitsSchema = "stepscale.fits/1";
constexpr const char* kCurveSchema = "stepscale.fit_curve/1";
constexpr const char* kTraceSchema = "stepscale.lipschitz_trace/1";
constexpr const char* kLipSummarySchema = "stepscale.lipschitz_summary/1";
constexpr const char* kRatiosSchema = "stepscale.ratios/1";
constexpr const char* kReportSchema = "stepscale.report/1";

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

bool same(double a, double b) { return std::abs(a - b) < 1e-9; }

fs::path data_root() {
  const char* env = std::getenv(kDataRootEnv);
  return env ? fs::path(env) : fs::path();
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget;
  std::string grid_override;
};

StudyConfig resolve_config(const Common& c) {
  StudyConfig config = study_config_from_json(load_config_json(c.config));
  if (!c.grid_override.empty()) apply_grid_override(config, c.grid_override);
  if (c.seed) config.seed = *c.seed;
  if (c.budget) config.budget = *c.budget;
  if (c.workers) config.workers = *c.workers;
  config.validate();
  return config;
}

nlohmann::json config_echo(const StudyConfig& config) {
  nlohmann::json j = to_json(config);
  j["schema"] = kConfigSchema;
  return j;
}

int cmd_run(const Common& c, bool dry_run, std::ostream& out) {
  const StudyConfig config = resolve_config(c);
  if (dry_run) {
    out << config_echo(config).dump(2) << "\n";
    return kOk;
  }
  if (c.out.empty()) throw ConfigError("run needs --out");
  const fs::path dir = c.out;
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", config_echo(config).dump(2) + "\n");

  StudyOptions options;
  options.out_dir = dir;
  options.workers = config.workers;
  options.data_root = data_root();
  const StudyOutcome outcome = run_study(config, options);

  out << "executed " << outcome.executed << " trials, reused " << outcome.reused << "\n";
  bool all_complete = true;
  for (const auto& r : outcome.table.rows) {
    out << "B=" << r.batch_size << " s=" << num(r.sparsity) << " K*="
        << (r.k_star ? std::to_string(*r.k_star) : std::string("-")) << " complete=" << r.n_complete
        << " incomplete=" << r.n_incomplete << " infeasible=" << r.n_infeasible << "\n";
    all_complete &= r.k_star.has_value();
  }
  if (!all_complete) {
    out << "partial: some study points have no complete trial\n";
    return kPartial;
  }
  return kOk;
}

int cmd_fit(const std::string& out_dir, std::string summary, const std::string& form_name,
            const std::vector<std::size_t>& holdout, std::ostream& out, std::ostream& err) {
  if (out_dir.empty()) throw ConfigError("fit needs --out");
  const fs::path dir = out_dir;
  if (summary.empty()) summary = (dir / "summary.csv").string();
  const ScalingForm form = parse_scaling_form(form_name);
  const StudyTable table = read_summary_csv(summary);
  const bool decaying = form == ScalingForm::decaying_lr;

  std::ostringstream fits, curve;
  fits << "# " << kFitsSchema << "\n";
  fits << "sparsity,form,c1_symbol,c2_symbol,c1,c2,residual,n_points\n";
  curve << "# " << kCurveSchema << "\n";
  curve << "sparsity,B,K_star,K_hat,form,c1,c2,residual,held_out\n";

  int fitted = 0;
  for (double s : table.sparsities()) {
    std::vector<ScalingPoint> points;
    for (const auto& r : table.rows) {
      if (!same(r.sparsity, s) || !r.k_star) continue;
      if (std::find(holdout.begin(), holdout.end(), r.batch_size) != holdout.end()) continue;
      points.push_back({static_cast<double>(r.batch_size), static_cast<double>(*r.k_star)});
    }
    ScalingFit fit;
    try {
      fit = fit_scaling(points, form);
    } catch (const InsufficientData&) {
      err << "skipping sparsity " << num(s) << ": fewer than two batch sizes with a measured K*\n";
      continue;
    }
    ++fitted;
    fits << num(s) << ',' << to_string(form) << ',' << (decaying ? "c~1,c~2" : "c1,c2") << ',' << num(fit.c1)
         << ',' << num(fit.c2) << ',' << num(fit.residual) << ',' << fit.n_points << "\n";
    for (const auto& r : table.rows) {
      if (!same(r.sparsity, s)) continue;
      const bool held = std::find(holdout.begin(), holdout.end(), r.batch_size) != holdout.end();
      curve << num(s) << ',' << r.batch_size << ',' << (r.k_star ? std::to_string(*r.k_star) : std::string()) << ','
            << num(predict_steps(fit, static_cast<double>(r.batch_size))) << ',' << to_string(form) << ','
            << num(fit.c1) << ',' << num(fit.c2) << ',' << num(fit.residual) << ',' << (held ? 1 : 0) << "\n";
    }
    out << "s=" << num(s) << " " << to_string(form) << " c1=" << num(fit.c1) << " c2=" << num(fit.c2)
        << " residual=" << num(fit.residual) << " points=" << fit.n_points << "\n";
  }
  write_file_atomic(dir / "fits.csv", fits.str());
  write_file_atomic(dir / "fit_curve.csv", curve.str());
  return fitted > 0 ? kOk : kPartial;
}

int cmd_lipschitz(const Common& c, std::optional<std::int64_t> stride, std::optional<std::int64_t> steps,
                  std::ostream& out) {
  StudyConfig config = resolve_config(c);
  if (c.out.empty()) throw ConfigError("lipschitz needs --out");
  if (stride) config.lipschitz.stride = *stride;
  if (steps) config.lipschitz.steps = *steps;
  config.validate();
  const LipschitzSettings& ls = config.lipschitz;
  const fs::path dir = c.out;
  fs::create_directories(dir);

  const SplitDataset data = load_workload_data(config.workload, data_root());
  TraceOptions opts;
  opts.stride = ls.stride;
  opts.steps = ls.steps;
  opts.delta = ls.delta;

  std::ostringstream trace_csv, summary_csv;
  trace_csv << "# " << kTraceSchema << "\n";
  trace_csv << "sparsity,step,lipschitz_hat,train_loss\n";
  summary_csv << "# " << kLipSummarySchema << "\n";
  summary_csv << "sparsity,L_avg,beta,delta,samples,diverged\n";

  const std::uint64_t seed = c.seed ? *c.seed : ls.seed;
  bool any_diverged = false;
  for (double s : ls.sparsities) {
    const SmoothnessTrace trace =
        trace_smoothness(config.workload, data, {ls.batch_size, s}, ls.metaparams, seed, opts);
    for (const auto& p : trace.points) {
      trace_csv << num(s) << ',' << p.step << ',' << (p.lipschitz ? num(*p.lipschitz) : std::string()) << ','
                << num(p.train_loss) << "\n";
    }
    const TheoryParams tp = theory_params_from_trace(trace);
    summary_csv << num(s) << ',' << num(tp.L) << ',' << num(tp.beta) << ',' << num(tp.delta) << ','
                << trace.points.size() << ',' << (trace.diverged ? 1 : 0) << "\n";
    out << "s=" << num(s) << " L_avg=" << num(tp.L) << " beta=" << num(tp.beta) << " delta=" << num(tp.delta)
        << (trace.diverged ? " (diverged)" : "") << "\n";
    any_diverged |= trace.diverged;
  }
  write_file_atomic(dir / "lipschitz_trace.csv", trace_csv.str());
  write_file_atomic(dir / "lipschitz_summary.csv", summary_csv.str());
  return any_diverged ? kPartial : kOk;
}

std::map<double, TheoryParams> read_lipschitz_summary(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto cs = t.column("sparsity"), cl = t.column("L_avg"), cb = t.column("beta"), cd = t.column("delta");
  std::map<double, TheoryParams> out;
  for (const auto& row : t.rows) {
    TheoryParams p;
    p.L = std::stod(row[cl]);
    p.beta = std::stod(row[cb]);
    p.delta = std::stod(row[cd]);
    out[std::stod(row[cs])] = p;
  }
  return out;
}

std::map<double, ScalingFit> read_fits(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const auto cs = t.column("sparsity"), c1 = t.column("c1"), c2 = t.column("c2"), cr = t.column("residual"),
             cf = t.column("form"), cn = t.column("n_points");
  std::map<double, ScalingFit> out;
  for (const auto& row : t.rows) {
    ScalingFit f;
    f.form = parse_scaling_form(row[cf]);
    f.c1 = std::stod(row[c1]);
    f.c2 = std::stod(row[c2]);
    f.residual = std::stod(row[cr]);
    f.n_points = std::stoull(row[cn]);
    out[std::stod(row[cs])] = f;
  }
  return out;
}

template <class Map>
auto find_level(const Map& m, double s) {
  for (auto it = m.begin(); it != m.end(); ++it) {
    if (same(it->first, s)) return it;
  }
  return m.end();
}

int cmd_ratios(const std::string& out_dir, double dense_s, std::optional<double> sparse_s, std::ostream& out) {
  if (out_dir.empty()) throw ConfigError("ratios needs --out");
  const fs::path dir = out_dir;
  const auto params = read_lipschitz_summary(dir / "lipschitz_summary.csv");
  if (params.empty()) throw InsufficientData("lipschitz_summary.csv has no rows");
  const double s_sparse = sparse_s ? *sparse_s : params.rbegin()->first;
  const auto d = find_level(params, dense_s);
  const auto s = find_level(params, s_sparse);
  if (d == params.end() || s == params.end()) throw ConfigError("requested sparsity levels missing from the trace summary");
  const RatioReport r = ratio_report(s->second, d->second);

  std::string fitted;
  if (fs::exists(dir / "fits.csv")) {
    const auto fits = read_fits(dir / "fits.csv");
    const auto fd = find_level(fits, dense_s), fsparse = find_level(fits, s_sparse);
    if (fd != fits.end() && fsparse != fits.end() && fd->second.c1 > 0.0) fitted = num(fsparse->second.c1 / fd->second.c1);
  }

  std::ostringstream os;
  os << "# " << kRatiosSchema << "\n";
  os << "sparse,dense,delta_ratio,beta_ratio,L_ratio,c1_ratio,slowdown_explained,fitted_c1_ratio\n";
  os << num(s_sparse) << ',' << num(dense_s) << ',' << num(r.delta_ratio) << ',' << num(r.beta_ratio) << ','
     << num(r.L_ratio) << ',' << num(r.c1_ratio) << ',' << (r.slowdown_explained ? 1 : 0) << ',' << fitted << "\n";
  write_file_atomic(dir / "ratios.csv", os.str());
  out << "c1 ratio " << num(r.c1_ratio) << " = " << num(r.delta_ratio) << " x " << num(r.beta_ratio) << " x "
      << num(r.L_ratio) << (fitted.empty() ? "" : " (fitted " + fitted + ")") << "\n";
  return kOk;
}

void markdown_table(std::ostringstream& os, const CsvTable& t) {
  os << "|";
  for (const auto& h : t.header) os << ' ' << h << " |";
  os << "\n|";
  for (std::size_t i = 0; i < t.header.size(); ++i) os << " --- |";
  os << "\n";
  for (const auto& row : t.rows) {
    os << "|";
    for (const auto& cell : row) os << ' ' << (cell.empty() ? "-" : cell) << " |";
    os << "\n";
  }
  os << "\n";
}

}  // namespace

std::string render_report(const fs::path& dir) {
  std::ostringstream os;
  std::vector<std::string> missing;
  int sections = 0;
  os << "<!-- " << kReportSchema << " -->\n# Step-scaling report\n\n";

  if (fs::exists(dir / "summary.csv")) {
    const StudyTable table = read_summary_csv(dir / "summary.csv");
    os << "## Steps to result\n\n";
    markdown_table(os, read_csv(dir / "summary.csv"));
    os << "## Normalized steps to result\n\nEach curve is divided by its value at the smallest measured batch size.\n\n";
    os << "| s | B | K_star | normalized |\n| --- | --- | --- | --- |\n";
    for (double s : table.sparsities()) {
      std::optional<double> base;
      for (const auto& r : table.rows) {
        if (!same(r.sparsity, s) || !r.k_star) continue;
        if (!base) base = static_cast<double>(*r.k_star);
        os << "| " << num(s) << " | " << r.batch_size << " | " << *r.k_star << " | "
           << num(static_cast<double>(*r.k_star) / *base) << " |\n";
      }
    }
    os << "\n";
    sections += 2;
  } else {
    missing.push_back("summary.csv");
  }

  if (fs::exists(dir / "fits.csv")) {
    os << "## Scaling fits\n\n";
    markdown_table(os, read_csv(dir / "fits.csv"));
    ++sections;
  } else {
    missing.push_back("fits.csv");
  }

  if (fs::exists(dir / "lipschitz_summary.csv")) {
    os << "## Smoothness\n\n";
    markdown_table(os, read_csv(dir / "lipschitz_summary.csv"));
    ++sections;
  } else {
    missing.push_back("lipschitz_summary.csv");
  }

  if (fs::exists(dir / "ratios.csv")) {
    os << "## Ratio decomposition\n\n";
    markdown_table(os, read_csv(dir / "ratios.csv"));
    ++sections;
  } else {
    missing.push_back("ratios.csv");
  }

  os << "## Inputs\n\nSections rendered: " << sections << "\n\n";
  if (missing.empty()) {
    os << "All inputs present.\n";
  } else {
    os << "Missing inputs:\n\n";
    for (const auto& m : missing) os << "- " << m << "\n";
  }
  return os.str();
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Measure and model steps-to-result across batch sizes and sparsity levels", "stepscale"};
  app.require_subcommand(1);

  Common common;
  bool dry_run = false;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config, "Study config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", common.out, "Results directory");
    sub->add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", common.seed, "Study seed");
    sub->add_option("--budget", common.budget, "Trials per study point")->check(CLI::PositiveNumber);
    sub->add_option("--grid-override", common.grid_override, "Grid override, e.g. \"B=2,4,8;s=0,0.9\"");
  };

  auto* run = app.add_subcommand("run", "Run (or resume) the batch-size x sparsity study");
  add_common(run);
  run->add_flag("--dry-run", dry_run, "Validate and echo the resolved config without training");

  std::string fit_out, summary, form = "fixed";
  std::vector<std::size_t> holdout;
  auto* fit = app.add_subcommand("fit", "Fit K = c1/B + c2 per sparsity level");
  fit->add_option("--out", fit_out, "Results directory")->required();
  fit->add_option("--summary", summary, "Summary CSV (default: <out>/summary.csv)");
  fit->add_option("--form", form, "fixed or decay")->check(CLI::IsMember({"fixed", "decay", "fixed-lr", "decaying-lr"}));
  fit->add_option("--holdout", holdout, "Batch sizes excluded from fitting");

  std::optional<std::int64_t> stride, steps;
  auto* lip = app.add_subcommand("lipschitz", "Trace the local Lipschitz estimate per sparsity level");
  add_common(lip);
  lip->add_option("--stride", stride, "Steps between samples")->check(CLI::PositiveNumber);
  lip->add_option("--steps", steps, "Length of each traced run")->check(CLI::PositiveNumber);

  std::string ratios_out;
  double dense = 0.0;
  std::optional<double> sparse;
  auto* ratios = app.add_subcommand("ratios", "Decompose the sparse/dense c1 ratio");
  ratios->add_option("--out", ratios_out, "Results directory")->required();
  ratios->add_option("--dense", dense, "Reference sparsity level");
  ratios->add_option("--sparse", sparse, "Compared sparsity level (default: the highest traced)");

  std::string report_out;
  auto* report = app.add_subcommand("report", "Render report.md from the results directory");
  report->add_option("--out", report_out, "Results directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "stepscale: " << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(common, dry_run, out);
    if (*fit) return cmd_fit(fit_out, summary, form, holdout, out, err);
    if (*lip) return cmd_lipschitz(common, stride, steps, out);
    if (*ratios) return cmd_ratios(ratios_out, dense, sparse, out);
    if (*report) {
      const fs::path dir = report_out;
      const std::string text = render_report(dir);
      fs::create_directories(dir);
      write_file_atomic(dir / "report.md", text);
      out << "wrote " << (dir / "report.md").string() << "\n";
      return kOk;
    }
  } catch (const IoError& e) {
    err << "stepscale: " << e.what() << "\n";
    return kIoError;
  } catch (const FormatError& e) {
    err << "stepscale: " << e.what() << "\n";
    return kIoError;
  } catch (const fs::filesystem_error& e) {
    err << "stepscale: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    err << "stepscale: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace stepscale::cli
