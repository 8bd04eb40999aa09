#include "sofia/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sofia/checkpoint.hpp"
#include "sofia/errors.hpp"
#include "sofia/metrics.hpp"
#include "sofia/robust_hw.hpp"

namespace sofia {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

// ---- scenario <-> json ----------------------------------------------------

void reject_unknown(const json& obj, std::initializer_list<const char*> keys, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <class T>
void read(const json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

void read_path(const json& obj, const char* key, std::filesystem::path& into) {
  if (obj.contains(key)) into = obj.at(key).get<std::string>();
}

json synth_json(const SynthConfig& s) {
  return {{"shape", s.slice_shape}, {"steps", s.steps},         {"rank", s.rank},
          {"period", s.period},     {"amplitude_max", s.amplitude_max}, {"offset_max", s.offset_max},
          {"noise", s.noise}};
}

json batch_json(const BatchConfig& b) {
  return {{"rank", b.rank},       {"period", b.period},   {"lambda1", b.lambda1},
          {"lambda2", b.lambda2}, {"lambda3", b.lambda3}, {"decay", b.decay},
          {"lambda3_floor_divisor", b.lambda3_floor_divisor}, {"tol", b.tol},
          {"max_iter", b.max_iter}, {"max_outer", b.max_outer}};
}

json online_json(const OnlineConfig& o) {
  return {{"mu", o.mu},           {"lambda1", o.lambda1},          {"lambda2", o.lambda2},
          {"lambda3", o.lambda3}, {"huber_k", o.robust.huber_k},   {"biweight_c", o.robust.biweight_c},
          {"phi", o.robust.phi},  {"sigma_floor", o.sigma_floor}};
}

json file_json(const FileSource& f) {
  const TripleSchema& s = f.ingest.schema;
  return {{"path", f.path.string()},
          {"truth_path", f.truth_path.string()},
          {"shape", f.ingest.shape},
          {"granularity", f.ingest.granularity},
          {"log2", f.ingest.log2_transform},
          {"index_columns", s.index_columns},
          {"time_column", s.time_column},
          {"value_column", s.value_column},
          {"delimiter", std::string(1, s.delimiter)},
          {"header", s.header}};
}

// ---- data -----------------------------------------------------------------

struct PreparedData {
  std::vector<MaskedSlice> slices;
  /// What NRE is measured against; full masks when a clean channel exists.
  std::vector<MaskedSlice> reference;
  bool has_truth = false;
  std::vector<std::vector<std::size_t>> outlier_positions;
};

std::vector<MaskedSlice> full_slices(const std::vector<DenseTensor>& tensors) {
  std::vector<MaskedSlice> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) out.push_back({t, ObservationMask::full(t.shape())});
  return out;
}

PreparedData prepare_synthetic(const Scenario& sc) {
  SynthConfig cfg = sc.synth;
  cfg.seed = derive_seed(sc.seed, 0);
  SynthData data = synth_stream(cfg);
  double truth_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : data.truth) truth_max = std::max(truth_max, s.max_value());

  CorruptionSpec spec = sc.corruption;
  spec.seed = derive_seed(sc.seed, 1);
  CorruptedStream corrupted = inject_corruption(data.observed, spec, truth_max);

  PreparedData out;
  out.slices = std::move(corrupted.slices);
  out.outlier_positions = std::move(corrupted.outlier_positions);
  out.reference = full_slices(data.truth);
  out.has_truth = true;
  return out;
}

PreparedData prepare_file(const Scenario& sc) {
  TensorStream stream = ingest_triples(sc.file.path, sc.file.ingest);
  PreparedData out;
  if (!sc.file.truth_path.empty()) {
    IngestOptions opts = sc.file.ingest;
    opts.shape = stream.shape;
    TensorStream truth = ingest_triples(sc.file.truth_path, opts);
    if (truth.steps() != stream.steps()) throw DimensionError("truth file covers a different number of steps");
    for (const auto& s : truth.slices)
      if (s.mask.count() != s.mask.size()) throw InputError("truth file must cover every entry");
    for (auto& s : truth.slices) out.reference.push_back(std::move(s));
    out.has_truth = true;
  } else {
    out.reference = stream.slices;
  }

  const CorruptionSpec& spec = sc.corruption;
  if (spec.missing_pct > 0.0 || spec.outlier_pct > 0.0) {
    std::vector<DenseTensor> values;
    double vmax = -std::numeric_limits<double>::infinity();
    for (const auto& s : stream.slices) {
      values.push_back(s.values);
      for (std::size_t i = 0; i < s.values.size(); ++i)
        if (s.mask.test(i)) vmax = std::max(vmax, s.values[i]);
    }
    if (out.has_truth) {
      vmax = -std::numeric_limits<double>::infinity();
      for (const auto& s : out.reference) vmax = std::max(vmax, s.values.max_value());
    }
    CorruptionSpec seeded = spec;
    seeded.seed = derive_seed(sc.seed, 1);
    CorruptedStream corrupted = inject_corruption(values, seeded, vmax);
    for (std::size_t t = 0; t < stream.slices.size(); ++t) {
      MaskedSlice& c = corrupted.slices[t];
      for (std::size_t i = 0; i < c.mask.size(); ++i)
        if (!stream.slices[t].mask.test(i)) c.mask.set(i, false);
    }
    out.slices = std::move(corrupted.slices);
    out.outlier_positions = std::move(corrupted.outlier_positions);
  } else {
    out.slices = std::move(stream.slices);
    out.outlier_positions.assign(out.slices.size(), {});
  }
  return out;
}

// NaN when the reference has no mass to compare against.
double slice_nre(const DenseTensor& estimate, const MaskedSlice& reference) {
  try {
    return metric_masked_nre(estimate, reference.values, reference.mask);
  } catch (const MetricError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double finite_mean(std::span<const double> xs) {
  std::vector<double> kept;
  for (double x : xs)
    if (!std::isnan(x)) kept.push_back(x);
  return metric_rae(kept);
}

double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  const auto mid = xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2);
  std::nth_element(xs.begin(), mid, xs.end());
  double m = *mid;
  if (xs.size() % 2 == 0) m = 0.5 * (m + *std::max_element(xs.begin(), mid));
  return m;
}

// Rows [0, rows) of the first mode.
StreamState restrict_rows(const StreamState& full, std::size_t rows) {
  StreamState s = full;
  s.nontemporal[0] = full.nontemporal[0].topRows(static_cast<Eigen::Index>(rows));
  Shape shape = s.slice_shape();
  const std::size_t n = shape_size(shape);
  const auto src = full.error_scale.values();
  s.error_scale = DenseTensor(shape, std::vector<double>(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(n)));
  return s;
}

MaskedSlice restrict_rows(const MaskedSlice& full, const Shape& shape) {
  const std::size_t n = shape_size(shape);
  MaskedSlice s{DenseTensor(shape), ObservationMask(shape)};
  for (std::size_t i = 0; i < n; ++i) {
    s.values[i] = full.values[i];
    s.mask.set(i, full.mask.test(i));
  }
  return s;
}

MaskedSlice bench_slice(const SyntheticStream& gen, const CorruptionSpec& spec, std::size_t t) {
  const DenseTensor clean = gen.clean_slice(t);
  CorruptionSpec seeded = spec;
  seeded.seed = derive_seed(spec.seed, t);
  CorruptedStream c = inject_corruption(std::span<const DenseTensor>(&clean, 1), seeded);
  return std::move(c.slices.front());
}

}  // namespace

// ---- scenario -------------------------------------------------------------

void Scenario::validate() const {
  if (source == SourceKind::synthetic) synth.validate();
  else if (file.path.empty()) throw ConfigError("file source needs a path");
  corruption.validate();
  batch.validate();
  online.validate();
  if (source == SourceKind::synthetic && synth.steps <= forecast_steps)
    throw ConfigError("forecast horizon leaves no slices to stream");
}

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"name", "seed", "source", "synth", "file", "corruption", "batch", "online", "init_steps",
                  "vanilla_init", "preclean", "forecast_steps", "output_dir", "write_checkpoint",
                  "record_timing"},
                 "scenario");
  Scenario sc;
  try {
    read(j, "name", sc.name);
    read(j, "seed", sc.seed);
    if (j.contains("source")) {
      const auto kind = j.at("source").get<std::string>();
      if (kind == "synthetic") sc.source = SourceKind::synthetic;
      else if (kind == "file") sc.source = SourceKind::file;
      else throw ConfigError("source must be 'synthetic' or 'file'");
    }
    if (j.contains("synth")) {
      const json& s = j.at("synth");
      reject_unknown(s, {"shape", "steps", "rank", "period", "amplitude_max", "offset_max", "noise"}, "synth");
      read(s, "shape", sc.synth.slice_shape);
      read(s, "steps", sc.synth.steps);
      read(s, "rank", sc.synth.rank);
      read(s, "period", sc.synth.period);
      read(s, "amplitude_max", sc.synth.amplitude_max);
      read(s, "offset_max", sc.synth.offset_max);
      read(s, "noise", sc.synth.noise);
    }
    if (j.contains("file")) {
      const json& f = j.at("file");
      reject_unknown(f,
                     {"path", "truth_path", "shape", "granularity", "log2", "index_columns", "time_column",
                      "value_column", "delimiter", "header"},
                     "file");
      read_path(f, "path", sc.file.path);
      read_path(f, "truth_path", sc.file.truth_path);
      read(f, "shape", sc.file.ingest.shape);
      read(f, "granularity", sc.file.ingest.granularity);
      read(f, "log2", sc.file.ingest.log2_transform);
      TripleSchema& schema = sc.file.ingest.schema;
      if (f.contains("index_columns")) {
        read(f, "index_columns", schema.index_columns);
        read(f, "time_column", schema.time_column);
        read(f, "value_column", schema.value_column);
      } else {
        const std::size_t modes = sc.file.ingest.shape.empty() ? 2 : sc.file.ingest.shape.size();
        const char delimiter = schema.delimiter;
        schema = TripleSchema::positional(modes);
        schema.delimiter = delimiter;
      }
      if (f.contains("delimiter")) {
        const auto d = f.at("delimiter").get<std::string>();
        if (d.size() != 1) throw ConfigError("delimiter must be a single character");
        schema.delimiter = d[0];
      }
      read(f, "header", schema.header);
    }
    if (j.contains("corruption")) {
      const json& c = j.at("corruption");
      reject_unknown(c, {"missing_pct", "outlier_pct", "outlier_mag"}, "corruption");
      read(c, "missing_pct", sc.corruption.missing_pct);
      read(c, "outlier_pct", sc.corruption.outlier_pct);
      read(c, "outlier_mag", sc.corruption.outlier_mag);
    }
    if (j.contains("batch")) {
      const json& b = j.at("batch");
      reject_unknown(b,
                     {"rank", "period", "lambda1", "lambda2", "lambda3", "decay", "lambda3_floor_divisor", "tol",
                      "max_iter", "max_outer"},
                     "batch");
      read(b, "rank", sc.batch.rank);
      read(b, "period", sc.batch.period);
      read(b, "lambda1", sc.batch.lambda1);
      read(b, "lambda2", sc.batch.lambda2);
      read(b, "lambda3", sc.batch.lambda3);
      read(b, "decay", sc.batch.decay);
      read(b, "lambda3_floor_divisor", sc.batch.lambda3_floor_divisor);
      read(b, "tol", sc.batch.tol);
      read(b, "max_iter", sc.batch.max_iter);
      read(b, "max_outer", sc.batch.max_outer);
    }
    if (j.contains("online")) {
      const json& o = j.at("online");
      reject_unknown(o, {"mu", "lambda1", "lambda2", "lambda3", "huber_k", "biweight_c", "phi", "sigma_floor"},
                     "online");
      read(o, "mu", sc.online.mu);
      read(o, "lambda1", sc.online.lambda1);
      read(o, "lambda2", sc.online.lambda2);
      read(o, "lambda3", sc.online.lambda3);
      read(o, "huber_k", sc.online.robust.huber_k);
      read(o, "biweight_c", sc.online.robust.biweight_c);
      read(o, "phi", sc.online.robust.phi);
      read(o, "sigma_floor", sc.online.sigma_floor);
    }
    read(j, "init_steps", sc.init_steps);
    read(j, "vanilla_init", sc.vanilla_init);
    read(j, "preclean", sc.online.preclean);
    read(j, "forecast_steps", sc.forecast_steps);
    read_path(j, "output_dir", sc.output_dir);
    read(j, "write_checkpoint", sc.write_checkpoint);
    read(j, "record_timing", sc.record_timing);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario field has the wrong type: ") + e.what());
  }
  sc.validate();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return scenario_from_json(buffer.str());
}

std::string scenario_to_json(const Scenario& sc) {
  json j = {{"name", sc.name},
            {"seed", sc.seed},
            {"source", sc.source == SourceKind::synthetic ? "synthetic" : "file"},
            {"corruption",
             {{"missing_pct", sc.corruption.missing_pct},
              {"outlier_pct", sc.corruption.outlier_pct},
              {"outlier_mag", sc.corruption.outlier_mag}}},
            {"batch", batch_json(sc.batch)},
            {"online", online_json(sc.online)},
            {"init_steps", sc.init_steps},
            {"vanilla_init", sc.vanilla_init},
            {"preclean", sc.online.preclean},
            {"forecast_steps", sc.forecast_steps},
            {"output_dir", sc.output_dir.string()},
            {"write_checkpoint", sc.write_checkpoint},
            {"record_timing", sc.record_timing}};
  if (sc.source == SourceKind::synthetic) j["synth"] = synth_json(sc.synth);
  else j["file"] = file_json(sc.file);
  return j.dump(2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---- experiment -----------------------------------------------------------

namespace {

PreparedData load_data(const Scenario& scenario) {
  try {
    return scenario.source == SourceKind::synthetic ? prepare_synthetic(scenario) : prepare_file(scenario);
  } catch (...) {
    std::throw_with_nested(std::runtime_error("scenario '" + scenario.name + "': loading the stream failed"));
  }
}

std::size_t init_window(const Scenario& scenario) {
  return scenario.init_steps ? scenario.init_steps : 3 * scenario.batch.period;
}

StreamState start_stream(const Scenario& scenario, const PreparedData& data, MetricsReport& report) {
  const auto stage = [&](const char* what) { return "scenario '" + scenario.name + "': " + what; };
  const std::size_t t_init = init_window(scenario);
  if (data.slices.size() < t_init) throw InsufficientHistoryError(stage("stream shorter than the initialisation window"));

  BatchConfig batch = scenario.batch;
  batch.seed = derive_seed(scenario.seed, 2);
  if (scenario.vanilla_init) {
    batch.lambda1 = 0.0;
    batch.lambda2 = 0.0;
    batch.outlier_loop = false;
  }
  report.seed = scenario.seed;
  report.t_init = t_init;

  auto clock = Clock::now();
  BatchResult init;
  try {
    init = initialize(std::span<const MaskedSlice>(data.slices.data(), t_init), batch);
  } catch (...) {
    std::throw_with_nested(std::runtime_error(stage("initialisation failed")));
  }
  report.init_seconds = elapsed_ms(clock) / 1000.0;
  report.init_outer_passes = init.outer_passes;
  report.init_als_sweeps = init.als_sweeps;
  if (data.has_truth) {
    const MaskedSlice truth = stack_slices(std::span<const MaskedSlice>(data.reference.data(), t_init));
    report.init_nre = metric_nre(init.completed, truth.values);
  }

  clock = Clock::now();
  try {
    const HwFitResult hw = hw_fit(init.factors.matrices.back(), batch.period);
    report.hw_seconds = elapsed_ms(clock) / 1000.0;
    return make_stream_state(init, hw.state, scenario.online);
  } catch (...) {
    std::throw_with_nested(std::runtime_error(stage("Holt-Winters fit failed")));
  }
}

}  // namespace

StreamState initialize_scenario(const Scenario& scenario, MetricsReport* report) {
  scenario.validate();
  MetricsReport local;
  return start_stream(scenario, load_data(scenario), report ? *report : local);
}

MetricsReport run_experiment(const Scenario& scenario) {
  scenario.validate();
  const auto stage = [&](const char* what) { return "scenario '" + scenario.name + "': " + what; };
  const PreparedData data = load_data(scenario);

  const std::size_t m = scenario.batch.period;
  const std::size_t t_init = init_window(scenario);
  const std::size_t total = data.slices.size();
  if (total < scenario.forecast_steps + t_init + 2)
    throw InsufficientHistoryError(stage("stream too short for the initialisation window plus two steps"));
  const std::size_t t_end = total - scenario.forecast_steps;

  MetricsReport report;
  StreamState state = start_stream(scenario, data, report);

  std::vector<double> timings(t_end, 0.0);
  std::vector<double> nre_series;
  const auto stream_clock = Clock::now();
  try {
    for (std::size_t t = t_init; t < t_end; ++t) {
      const MaskedSlice& slice = data.slices[t];
      const auto step_clock = Clock::now();
      const StepOutput out = step(state, slice.values, slice.mask);
      timings[t] = elapsed_ms(step_clock);

      StepRecord rec;
      rec.t = t;
      rec.nre = slice_nre(out.imputed, data.reference[t]);
      rec.step_ms = timings[t];
      rec.observed = out.observed;
      rec.flagged = out.flagged;
      report.steps.push_back(rec);
      nre_series.push_back(rec.nre);

      if (t >= t_init + m) {
        for (std::size_t pos : data.outlier_positions[t]) {
          if (!slice.mask.test(pos)) continue;
          ++report.outlier_recall.injected;
          if (out.outliers[pos] != 0.0) ++report.outlier_recall.detected;
        }
      }
    }
  } catch (...) {
    std::throw_with_nested(std::runtime_error(stage("stream step failed")));
  }
  report.stream_seconds = elapsed_ms(stream_clock) / 1000.0;
  report.rae = finite_mean(nre_series);
  report.art_ms = metric_art(timings, t_init);

  if (scenario.forecast_steps > 0) {
    std::vector<double> errors;
    for (std::size_t h = 1; h <= scenario.forecast_steps; ++h)
      errors.push_back(slice_nre(forecast_h(state, h), data.reference[t_end + h - 1]));
    report.afe = finite_mean(errors);
  }

  if (!scenario.output_dir.empty()) {
    std::filesystem::create_directories(scenario.output_dir);
    write_steps_csv(scenario.output_dir / "steps.csv", report, scenario.record_timing);
    write_summary_json(scenario.output_dir / "summary.json", scenario, report);
    if (scenario.write_checkpoint) save_state(state, scenario.output_dir / "state.bin");
  }
  return report;
}

std::vector<MetricsReport> run_repeated(const Scenario& scenario, std::size_t repeats) {
  std::vector<MetricsReport> reports;
  for (std::size_t k = 0; k < repeats; ++k) {
    Scenario run = scenario;
    run.seed = scenario.seed + k;
    if (!scenario.output_dir.empty()) run.output_dir = scenario.output_dir / ("seed_" + std::to_string(run.seed));
    reports.push_back(run_experiment(run));
  }
  return reports;
}

void write_steps_csv(const std::filesystem::path& path, const MetricsReport& report, bool record_timing) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::fprintf(f, "t,nre,step_ms,n_observed,n_outliers_flagged\n");
  for (const auto& r : report.steps)
    std::fprintf(f, "%zu,%.17g,%.6f,%zu,%zu\n", r.t, r.nre, record_timing ? r.step_ms : 0.0, r.observed, r.flagged);
  std::fclose(f);
}

void write_summary_json(const std::filesystem::path& path, const Scenario& scenario, const MetricsReport& report) {
  const bool timing = scenario.record_timing;
  json j = {{"seed", report.seed},
            {"rae", report.rae},
            {"afe", report.afe ? json(*report.afe) : json(nullptr)},
            {"art", timing ? report.art_ms : 0.0},
            {"t_init", report.t_init},
            {"steps", report.steps.size()},
            {"init_nre", report.init_nre ? json(*report.init_nre) : json(nullptr)},
            {"init_outer_passes", report.init_outer_passes},
            {"init_als_sweeps", report.init_als_sweeps},
            {"outlier_recall",
             {{"injected", report.outlier_recall.injected},
              {"detected", report.outlier_recall.detected},
              {"recall", report.outlier_recall.recall()}}},
            {"timing_s",
             {{"init", timing ? report.init_seconds : 0.0},
              {"hw_fit", timing ? report.hw_seconds : 0.0},
              {"stream", timing ? report.stream_seconds : 0.0}}},
            {"config", json::parse(scenario_to_json(scenario))}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

// ---- scalability ----------------------------------------------------------

BenchReport run_scalability(const BenchConfig& config) {
  if (config.row_counts.empty() || config.blocks == 0 || config.long_steps < config.blocks)
    throw ConfigError("bench needs row counts and at least one step per block");
  const std::size_t max_rows = *std::max_element(config.row_counts.begin(), config.row_counts.end());

  SynthConfig synth;
  synth.slice_shape = {max_rows, config.columns};
  synth.rank = config.rank;
  synth.period = config.period;
  synth.seed = derive_seed(config.seed, 0);
  const SyntheticStream gen(synth);

  CorruptionSpec spec = config.corruption;
  spec.seed = derive_seed(config.seed, 1);

  const std::size_t t_init = 3 * config.period;
  std::vector<MaskedSlice> prefix;
  for (std::size_t t = 0; t < t_init; ++t) prefix.push_back(bench_slice(gen, spec, t));

  BatchConfig batch;
  batch.rank = config.rank;
  batch.period = config.period;
  batch.max_iter = config.init_max_iter;
  batch.max_outer = config.init_max_outer;
  batch.seed = derive_seed(config.seed, 2);
  const BatchResult init = initialize(prefix, batch);
  prefix.clear();
  const HwFitResult hw = hw_fit(init.factors.matrices.back(), config.period);
  OnlineConfig online;
  online.mu = config.mu;
  const StreamState full = make_stream_state(init, hw.state, online);

  BenchReport report;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t rows : config.row_counts) {
    StreamState state = restrict_rows(full, rows);
    const Shape shape = state.slice_shape();
    std::vector<double> times;
    for (std::size_t k = 0; k <= config.steps_per_size; ++k) {
      const MaskedSlice slice = restrict_rows(bench_slice(gen, spec, t_init + k), shape);
      const auto clock = Clock::now();
      step(state, slice.values, slice.mask);
      if (k > 0) times.push_back(elapsed_ms(clock));
    }
    BenchSize size{rows, shape_size(shape), median(times)};
    report.sizes.push_back(size);
    xs.push_back(std::log(static_cast<double>(size.entries)));
    ys.push_back(std::log(size.median_ms));
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    report.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  }

  StreamState state = restrict_rows(full, max_rows);
  std::vector<double> times;
  times.reserve(config.long_steps);
  for (std::size_t k = 0; k < config.long_steps; ++k) {
    const MaskedSlice slice = bench_slice(gen, spec, t_init + k);
    const auto clock = Clock::now();
    const StepOutput out = step(state, slice.values, slice.mask);
    times.push_back(elapsed_ms(clock));
    if (k + 1 == config.long_steps) report.final_nre = metric_nre(out.imputed, gen.clean_slice(t_init + k));
  }
  const std::size_t per_block = config.long_steps / config.blocks;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const auto first = times.begin() + static_cast<std::ptrdiff_t>(b * per_block);
    report.block_median_ms.push_back(median(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(per_block))));
  }
  report.overall_median_ms = median(times);
  for (double bm : report.block_median_ms)
    report.max_block_deviation = std::max(report.max_block_deviation, std::abs(bm / report.overall_median_ms - 1.0));
  return report;
}

}  // namespace sofia
