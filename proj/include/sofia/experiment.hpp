#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sofia/batch.hpp"
#include "sofia/corruption.hpp"
#include "sofia/ingest.hpp"
#include "sofia/online.hpp"
#include "sofia/synth.hpp"

namespace sofia {

enum class SourceKind { synthetic, file };

struct FileSource {
  std::filesystem::path path;
  /// Optional clean channel in the same layout; every entry must be present.
  std::filesystem::path truth_path;
  IngestOptions ingest;
};

struct Scenario {
  std::string name = "scenario";
  SourceKind source = SourceKind::synthetic;
  SynthConfig synth;
  FileSource file;
  CorruptionSpec corruption;
  BatchConfig batch;
  OnlineConfig online;
  /// Slices used by the initialisation; 0 means three seasons.
  std::size_t init_steps = 0;
  /// Ablation: plain masked ALS start (no smoothness, no outlier loop).
  bool vanilla_init = false;
  /// Trailing slices held out and forecast instead of consumed; 0 disables AFE.
  std::size_t forecast_steps = 0;
  std::uint64_t seed = 0;
  /// Empty: no files are written.
  std::filesystem::path output_dir;
  bool write_checkpoint = false;
  /// Off: step_ms is written as 0 so steps.csv depends on the seed alone.
  bool record_timing = true;

  void validate() const;
};

Scenario load_scenario(const std::filesystem::path& path);
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& scenario);

struct StepRecord {
  std::size_t t = 0;
  double nre = 0.0;
  double step_ms = 0.0;
  std::size_t observed = 0;
  std::size_t flagged = 0;
};

struct OutlierRecall {
  std::size_t injected = 0;  // observed entries that carry an injected outlier
  std::size_t detected = 0;  // ... of which the model flagged
  double recall() const noexcept {
    return injected == 0 ? 1.0 : static_cast<double>(detected) / static_cast<double>(injected);
  }
};

struct MetricsReport {
  std::vector<StepRecord> steps;
  double rae = 0.0;
  std::optional<double> afe;
  double art_ms = 0.0;
  double init_seconds = 0.0;
  double hw_seconds = 0.0;
  double stream_seconds = 0.0;
  std::size_t t_init = 0;
  std::size_t init_outer_passes = 0;
  std::size_t init_als_sweeps = 0;
  /// NRE of the initial completed tensor against the truth of the same slices.
  std::optional<double> init_nre;
  /// Scored from one season after the initialisation window onward.
  OutlierRecall outlier_recall;
  std::uint64_t seed = 0;
};

/// Sub-seeds for the generator, the corruption draw and the factor start.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Loads the stream and runs the initialisation and Holt-Winters fit; returns the online
/// state after the initialisation window. `report`, if given, receives the init fields.
StreamState initialize_scenario(const Scenario& scenario, MetricsReport* report = nullptr);

/// initialize -> hw_fit -> step loop (-> forecast_h over the held-out tail). Writes
/// steps.csv, summary.json and optionally state.bin into `output_dir`.
MetricsReport run_experiment(const Scenario& scenario);

/// Runs the scenario with seeds seed, seed+1, ... and returns every report.
std::vector<MetricsReport> run_repeated(const Scenario& scenario, std::size_t repeats = 5);

void write_steps_csv(const std::filesystem::path& path, const MetricsReport& report, bool record_timing);
void write_summary_json(const std::filesystem::path& path, const Scenario& scenario, const MetricsReport& report);

struct BenchConfig {
  std::size_t columns = 500;
  std::vector<std::size_t> row_counts{50, 100, 150, 200, 250, 300, 350, 400, 450, 500};
  std::size_t rank = 5;
  std::size_t period = 10;
  CorruptionSpec corruption{20.0, 0.0, 0.0, 0};
  /// Timed steps per row count.
  std::size_t steps_per_size = 30;
  /// Length of the long run at full size.
  std::size_t long_steps = 5000;
  std::size_t blocks = 10;
  /// Kept short: the step cost does not depend on how well the start converged.
  std::size_t init_max_iter = 10;
  std::size_t init_max_outer = 2;
  /// Step size of the timed runs; small enough to stay stable at 500 x 500.
  double mu = 1e-7;
  std::uint64_t seed = 0;
};

struct BenchSize {
  std::size_t rows = 0;
  std::size_t entries = 0;
  double median_ms = 0.0;
};

struct BenchReport {
  std::vector<BenchSize> sizes;
  /// Least-squares slope of log(time) against log(entries).
  double slope = 0.0;
  std::vector<double> block_median_ms;
  double overall_median_ms = 0.0;
  /// max |block median / overall median - 1|.
  double max_block_deviation = 0.0;
  /// NRE of the last long-run step against the clean slice.
  double final_nre = 0.0;
};

/// Per-step cost against slice size (first-mode rows subsampled from one start) and
/// over a long run at full size.
BenchReport run_scalability(const BenchConfig& config);

}  // namespace sofia
