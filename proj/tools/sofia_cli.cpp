// sofia: streaming robust tensor factorization, command-line front end.
//
//   sofia synth    --out DIR            synthetic corrupted stream as triple files
//   sofia init     --out DIR            initialisation + Holt-Winters fit, saved as state.bin
//   sofia impute   [--config FILE]      full stream run, writes steps.csv / summary.json
//   sofia forecast --horizon H          stream all but the last H slices, score forecasts
//   sofia bench                         per-step cost vs slice size and stream length

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sofia/checkpoint.hpp"
#include "sofia/experiment.hpp"
#include "sofia/ingest.hpp"

namespace {

using sofia::Scenario;

struct CommonFlags {
  std::string config;
  std::string input;
  std::string truth;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rank;
  std::optional<std::size_t> period;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> lambda3;
  std::optional<double> mu;
  std::optional<double> phi;
  std::optional<double> missing;
  std::optional<double> outliers;
  std::optional<double> magnitude;
  std::optional<std::size_t> steps;
  std::vector<std::size_t> shape;
  std::optional<std::size_t> granularity;
  bool log2 = false;
  bool vanilla = false;
  bool no_preclean = false;
  bool no_timing = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "scenario JSON file");
  app->add_option("--input", f.input, "triple file to read instead of a synthetic stream");
  app->add_option("--truth", f.truth, "clean triple file for scoring --input");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seed", f.seed, "random seed (default 0)");
  app->add_option("--rank", f.rank, "CP rank (default 3)");
  app->add_option("--period", f.period, "seasonal period m");
  app->add_option("--lambda1", f.lambda1, "temporal smoothness (default 1e-3)");
  app->add_option("--lambda2", f.lambda2, "seasonal smoothness (default 1e-3)");
  app->add_option("--lambda3", f.lambda3, "outlier sparsity (default 10)");
  app->add_option("--mu", f.mu, "online step size (default 0.1)");
  app->add_option("--phi", f.phi, "error-scale smoothing (default 0.01)");
  app->add_option("--missing", f.missing, "percent of entries removed");
  app->add_option("--outliers", f.outliers, "percent of entries replaced by outliers");
  app->add_option("--magnitude", f.magnitude, "outlier magnitude as a multiple of max(truth)");
  app->add_option("--steps", f.steps, "synthetic stream length");
  app->add_option("--shape", f.shape, "slice shape, e.g. --shape 30 30");
  app->add_option("--granularity", f.granularity, "time units per step for --input");
  app->add_flag("--log2", f.log2, "store log2(x+1) of every --input value");
  app->add_flag("--vanilla-init", f.vanilla, "plain ALS start (ablation)");
  app->add_flag("--no-preclean", f.no_preclean, "disable outlier pre-cleaning (ablation)");
  app->add_flag("--no-timing", f.no_timing, "write step_ms as 0 for reproducible output");
}

Scenario build_scenario(const CommonFlags& f) {
  Scenario sc = f.config.empty() ? Scenario{} : sofia::load_scenario(f.config);
  if (!f.input.empty()) {
    sc.source = sofia::SourceKind::file;
    sc.file.path = f.input;
    sc.file.truth_path = f.truth;
    if (!f.shape.empty()) sc.file.ingest.shape = f.shape;
    const std::size_t modes = f.shape.empty() ? 2 : f.shape.size();
    if (sc.file.ingest.schema.index_columns.empty()) sc.file.ingest.schema = sofia::TripleSchema::positional(modes);
    if (f.granularity) sc.file.ingest.granularity = *f.granularity;
    if (f.log2) sc.file.ingest.log2_transform = true;
  } else if (!f.shape.empty()) {
    sc.synth.slice_shape = f.shape;
  }
  if (f.seed) sc.seed = *f.seed;
  if (f.rank) sc.batch.rank = sc.synth.rank = *f.rank;
  if (f.period) sc.batch.period = sc.synth.period = *f.period;
  if (!f.period && f.config.empty()) sc.batch.period = sc.synth.period;
  if (f.lambda1) sc.batch.lambda1 = sc.online.lambda1 = *f.lambda1;
  if (f.lambda2) sc.batch.lambda2 = sc.online.lambda2 = *f.lambda2;
  if (f.lambda3) sc.batch.lambda3 = sc.online.lambda3 = *f.lambda3;
  if (f.mu) sc.online.mu = *f.mu;
  if (f.phi) sc.online.robust.phi = *f.phi;
  if (f.missing) sc.corruption.missing_pct = *f.missing;
  if (f.outliers) sc.corruption.outlier_pct = *f.outliers;
  if (f.magnitude) sc.corruption.outlier_mag = *f.magnitude;
  if (f.steps) sc.synth.steps = *f.steps;
  if (f.vanilla) sc.vanilla_init = true;
  if (f.no_preclean) sc.online.preclean = false;
  if (f.no_timing) sc.record_timing = false;
  if (!f.out.empty()) sc.output_dir = f.out;
  return sc;
}

void print_report(const sofia::MetricsReport& r) {
  std::printf("seed %llu  steps %zu  RAE %.6g", static_cast<unsigned long long>(r.seed), r.steps.size(), r.rae);
  if (r.afe) std::printf("  AFE %.6g", *r.afe);
  if (r.init_nre) std::printf("  init NRE %.6g", *r.init_nre);
  std::printf("  ART %.3f ms  init %.2f s  recall %.3f\n", r.art_ms, r.init_seconds, r.outlier_recall.recall());
}

void print_nested(const std::exception& e, int depth = 0) {
  std::cerr << std::string(static_cast<std::size_t>(depth) * 2, ' ') << "error: " << e.what() << '\n';
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    print_nested(inner, depth + 1);
  }
}

int cmd_synth(const CommonFlags& f) {
  Scenario sc = build_scenario(f);
  if (sc.output_dir.empty()) throw CLI::ValidationError("--out", "synth needs an output directory");
  sofia::SynthConfig cfg = sc.synth;
  cfg.seed = sofia::derive_seed(sc.seed, 0);
  const sofia::SynthData data = sofia::synth_stream(cfg);
  sofia::CorruptionSpec spec = sc.corruption;
  spec.seed = sofia::derive_seed(sc.seed, 1);
  double truth_max = data.truth.front().max_value();
  for (const auto& s : data.truth) truth_max = std::max(truth_max, s.max_value());
  const sofia::CorruptedStream corrupted = sofia::inject_corruption(data.observed, spec, truth_max);
  std::filesystem::create_directories(sc.output_dir);
  sofia::write_triples(sc.output_dir / "observed.csv", corrupted.slices);
  sofia::write_dense_triples(sc.output_dir / "truth.csv", data.truth);
  std::printf("wrote %zu slices of %zu entries to %s\n", data.truth.size(), data.truth.front().size(),
              sc.output_dir.string().c_str());
  return 0;
}

int cmd_init(const CommonFlags& f) {
  const Scenario sc = build_scenario(f);
  if (sc.output_dir.empty()) throw CLI::ValidationError("--out", "init needs an output directory");
  sofia::MetricsReport report;
  const sofia::StreamState state = sofia::initialize_scenario(sc, &report);
  std::filesystem::create_directories(sc.output_dir);
  sofia::save_state(state, sc.output_dir / "state.bin");
  std::ofstream(sc.output_dir / "scenario.json") << sofia::scenario_to_json(sc) << '\n';
  std::printf("initialised on %zu slices: %zu outer passes, %zu ALS sweeps, %.2f s", report.t_init,
              report.init_outer_passes, report.init_als_sweeps, report.init_seconds);
  if (report.init_nre) std::printf(", NRE %.6g", *report.init_nre);
  std::printf("\n");
  return 0;
}

int cmd_impute(const CommonFlags& f, std::size_t repeats) {
  const Scenario sc = build_scenario(f);
  for (const auto& r : sofia::run_repeated(sc, repeats)) print_report(r);
  return 0;
}

int cmd_forecast(const CommonFlags& f, std::size_t horizon) {
  Scenario sc = build_scenario(f);
  sc.forecast_steps = horizon ? horizon : 5 * sc.batch.period;
  if (sc.source == sofia::SourceKind::synthetic && sc.synth.steps <= sc.forecast_steps)
    throw CLI::ValidationError("--horizon", "horizon must be shorter than the stream");
  print_report(sofia::run_experiment(sc));
  return 0;
}

int cmd_bench(const sofia::BenchConfig& cfg) {
  const sofia::BenchReport r = sofia::run_scalability(cfg);
  std::printf("rows  entries  median_ms\n");
  for (const auto& s : r.sizes) std::printf("%4zu  %7zu  %9.4f\n", s.rows, s.entries, s.median_ms);
  std::printf("log-log slope %.3f\n", r.slope);
  std::printf("long run: median %.4f ms, worst block deviation %.1f%%\n", r.overall_median_ms,
              100.0 * r.max_block_deviation);
  std::printf("final step NRE %.4g\n", r.final_nre);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming robust tensor factorization with seasonal forecasting"};
  app.require_subcommand(1);

  CommonFlags synth_flags, init_flags, impute_flags, forecast_flags;
  auto* synth = app.add_subcommand("synth", "emit a synthetic corrupted stream as triple files");
  add_common(synth, synth_flags);
  auto* init = app.add_subcommand("init", "run the initialisation and save the stream state");
  add_common(init, init_flags);
  auto* impute = app.add_subcommand("impute", "run a full stream and report imputation error");
  add_common(impute, impute_flags);
  std::size_t repeats = 1;
  impute->add_option("--repeats", repeats, "runs with seeds seed, seed+1, ...")->check(CLI::PositiveNumber);
  auto* forecast = app.add_subcommand("forecast", "score forecasts over a held-out tail");
  add_common(forecast, forecast_flags);
  std::size_t horizon = 0;
  forecast->add_option("--horizon", horizon, "held-out slices (default five seasons)");

  sofia::BenchConfig bench_cfg;
  auto* bench = app.add_subcommand("bench", "per-step cost against slice size and stream length");
  bench->add_option("--columns", bench_cfg.columns, "second-mode length");
  bench->add_option("--rows", bench_cfg.row_counts, "first-mode lengths to time");
  bench->add_option("--rank", bench_cfg.rank, "CP rank");
  bench->add_option("--period", bench_cfg.period, "seasonal period");
  bench->add_option("--steps-per-size", bench_cfg.steps_per_size, "timed steps per size");
  bench->add_option("--long-steps", bench_cfg.long_steps, "length of the full-size run");
  bench->add_option("--missing", bench_cfg.corruption.missing_pct, "percent of entries removed");
  bench->add_option("--mu", bench_cfg.mu, "gradient step size");
  bench->add_option("--seed", bench_cfg.seed, "random seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_flags);
    if (*init) return cmd_init(init_flags);
    if (*impute) return cmd_impute(impute_flags, repeats);
    if (*forecast) return cmd_forecast(forecast_flags, horizon);
    if (*bench) return cmd_bench(bench_cfg);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    print_nested(e);
    return 1;
  }
  return 0;
}
