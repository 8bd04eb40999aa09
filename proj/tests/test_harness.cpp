#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sofia/corruption.hpp"
#include "sofia/errors.hpp"
#include "sofia/experiment.hpp"
#include "sofia/ingest.hpp"
#include "sofia/metrics.hpp"
#include "sofia/synth.hpp"

using namespace sofia;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sofia_harness_tests";
  fs::create_directories(dir);
  return dir / name;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path p = scratch(name);
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

IngestOptions two_mode(Shape shape = {}) {
  IngestOptions o;
  o.schema = TripleSchema::positional(2);
  o.shape = std::move(shape);
  return o;
}

Scenario small_scenario(std::uint64_t seed) {
  Scenario sc;
  sc.name = "small";
  sc.synth.slice_shape = {10, 10};
  sc.synth.rank = 2;
  sc.synth.period = 6;
  sc.synth.steps = 60;
  sc.batch.rank = 2;
  sc.batch.period = 6;
  sc.online.mu = 1e-3;
  sc.seed = seed;
  return sc;
}

}  // namespace

TEST_CASE("metric examples") {
  std::mt19937_64 rng(60);
  const DenseTensor x = oracle::random_tensor(rng, {4, 5});
  CHECK(metric_nre(x, x) == 0.0);
  DenseTensor twice = x;
  for (auto& v : twice.values()) v *= 2.0;
  CHECK(metric_nre(twice, x) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<double> series{0.1, 0.3};
  CHECK(metric_rae(series) == doctest::Approx(0.2).epsilon(1e-15));

  CHECK_THROWS_AS(metric_nre(x, DenseTensor({4, 5})), MetricError);
  CHECK_THROWS_AS(metric_rae(std::vector<double>{}), MetricError);
  CHECK_THROWS_AS(metric_nre(x, DenseTensor({5, 4})), DimensionError);

  const std::vector<DenseTensor> f{twice, x}, t{x, x};
  CHECK(metric_afe(f, t) == doctest::Approx(0.5));
  CHECK_THROWS_AS(metric_afe(std::vector<DenseTensor>{}, std::vector<DenseTensor>{}), MetricError);

  ObservationMask half({4, 5});
  for (std::size_t i = 0; i < 10; ++i) half.set(i);
  DenseTensor partial = x;
  for (std::size_t i = 10; i < 20; ++i) partial[i] += 100.0;
  CHECK(metric_masked_nre(partial, x, half) == 0.0);
}

TEST_CASE("RAE is the plain mean and ART skips initialisation and warm-up") {
  std::mt19937_64 rng(61);
  std::vector<double> s(37);
  for (auto& v : s) v = std::uniform_real_distribution<double>(0, 1)(rng);
  double sum = 0.0;
  for (double v : s) sum += v;
  CHECK(metric_rae(s) == sum / 37.0);

  std::vector<double> timings(20, 1e9);
  for (std::size_t t = 11; t < 20; ++t) timings[t] = static_cast<double>(t);
  CHECK(metric_art(timings, 10) == doctest::Approx(15.0));
  CHECK_THROWS_AS(metric_art(timings, 19), MetricError);
}

TEST_CASE("corruption examples") {
  std::mt19937_64 rng(62);
  std::vector<DenseTensor> clean;
  for (int t = 0; t < 5; ++t) clean.push_back(oracle::random_tensor(rng, {10, 10}, 0.0, 2.0));
  double top = 0.0;
  for (const auto& s : clean) top = std::max(top, s.max_value());

  const CorruptedStream none = inject_corruption(clean, {0, 0, 3, 1});
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(none.slices[t].values == clean[t]);
    CHECK(none.slices[t].mask.count() == 100);
  }

  const CorruptedStream missing = inject_corruption(clean, {50, 0, 0, 1});
  for (const auto& s : missing.slices) CHECK(s.mask.count() == 50);

  const CorruptedStream all = inject_corruption(clean, {0, 100, 1, 1});
  for (const auto& s : all.slices)
    for (double v : s.values.values()) CHECK(std::abs(v) == top);
  CHECK(all.max_value == top);

  const CorruptedStream some = inject_corruption(clean, {30, 10, 5, 2});
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(some.outlier_positions[t].size() == 10);
    for (std::size_t p : some.outlier_positions[t]) CHECK(std::abs(some.slices[t].values[p]) == 5 * top);
    CHECK(some.slices[t].mask.count() == 70);
  }

  CHECK_THROWS_AS(inject_corruption(clean, {100, 0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(inject_corruption(clean, {0, 101, 0, 0}), ConfigError);
  CHECK_THROWS_AS(inject_corruption(clean, {0, 0, -1, 0}), ConfigError);
}

TEST_CASE("corruption is a pure function of the stream and the spec") {
  std::mt19937_64 rng(63);
  std::vector<DenseTensor> clean;
  for (int t = 0; t < 8; ++t) clean.push_back(oracle::random_tensor(rng, {6, 7}));
  const CorruptionSpec spec{40, 20, 3, 99};
  const CorruptedStream a = inject_corruption(clean, spec);
  const CorruptedStream b = inject_corruption(clean, spec);
  for (std::size_t t = 0; t < 8; ++t) {
    CHECK(a.slices[t].values == b.slices[t].values);
    CHECK(a.slices[t].mask == b.slices[t].mask);
    CHECK(a.outlier_positions[t] == b.outlier_positions[t]);
  }
  // slice t does not depend on how many slices follow it
  const CorruptedStream prefix = inject_corruption(std::span(clean).first(3), spec);
  CHECK(prefix.slices[2].mask == a.slices[2].mask);
  const CorruptedStream other = inject_corruption(clean, {40, 20, 3, 100});
  CHECK_FALSE(other.slices[0].mask == a.slices[0].mask);
}

TEST_CASE("synthetic stream") {
  SynthConfig def;
  const SynthData data = synth_stream(def);
  CHECK(data.truth.size() == 90);
  CHECK(data.truth.front().shape() == Shape{30, 30});
  CHECK(data.factors.rank() == 3);
  CHECK(data.factors.shape() == Shape{30, 30, 90});
  CHECK(def.period == 30);

  const DenseTensor full = kruskal_reconstruct(data.factors);
  for (std::size_t t = 0; t < 90; ++t)
    for (std::size_t i = 0; i < 900; ++i) REQUIRE(data.truth[t][i] == doctest::Approx(full[i * 90 + t]).epsilon(1e-12));
  CHECK(data.observed.front() == data.truth.front());

  SynthConfig flat = def;
  flat.amplitude_max = 0.0;
  flat.steps = 10;
  const SynthData still = synth_stream(flat);
  for (std::size_t t = 1; t < 10; ++t) CHECK(frobenius_distance(still.truth[t], still.truth[0]) < 1e-12);

  SynthConfig noisy = def;
  noisy.noise = 0.1;
  noisy.steps = 5;
  const SyntheticStream s1(noisy), s2(noisy);
  CHECK(s1.noisy_slice(3) == s2.noisy_slice(3));
  CHECK_FALSE(s1.noisy_slice(3) == s1.clean_slice(3));

  for (const auto& u : data.factors.matrices)
    CHECK(u.minCoeff() >= (u.rows() == 90 ? -4.0 : 0.0));
}

TEST_CASE("ingest: empty file and basic bucketing") {
  const TensorStream empty = ingest_triples(write_file("empty.csv", ""), two_mode({2, 2}));
  CHECK(empty.steps() == 0);

  const TensorStream three = ingest_triples(write_file("three.csv", "i,j,t,v\n0,0,0,1.5\n1,0,0,2\n1,1,0,-3\n"), two_mode({2, 2}));
  REQUIRE(three.steps() == 1);
  CHECK(three.slices[0].mask.count() == 3);
  CHECK(three.slices[0].values[3] == -3.0);
  CHECK_FALSE(three.slices[0].mask.test(1));

  const TensorStream inferred = ingest_triples(write_file("infer.csv", "i,j,t,v\n0,2,0,1\n3,0,2,1\n"), two_mode());
  CHECK(inferred.shape == Shape{4, 3});
  CHECK(inferred.steps() == 3);
  CHECK(inferred.slices[1].mask.count() == 0);
}

TEST_CASE("ingest: log2 transform, granularity and duplicates") {
  IngestOptions opt = two_mode({1, 1});
  opt.log2_transform = true;
  const TensorStream lg = ingest_triples(write_file("log.csv", "i,j,t,v\n0,0,0,7\n"), opt);
  CHECK(lg.slices[0].values[0] == 3.0);

  IngestOptions g = two_mode({2, 1});
  g.granularity = 10;
  const TensorStream coarse = ingest_triples(write_file("gran.csv", "i,j,t,v\n0,0,3,1\n1,0,9,2\n0,0,15,4\n"), g);
  CHECK(coarse.steps() == 2);
  CHECK(coarse.slices[0].mask.count() == 2);

  const TensorStream dup = ingest_triples(write_file("dup.csv", "i,j,t,v\n0,0,0,1\n0,0,0,2\n0,0,0,5\n"), two_mode({1, 1}));
  CHECK(dup.duplicates == 2);
  CHECK(dup.slices[0].values[0] == 5.0);
}

TEST_CASE("ingest: malformed rows and out-of-shape indices") {
  try {
    ingest_triples(write_file("bad.csv", "i,j,t,v\n0,0,0,1\n0,1,0\n"), two_mode({2, 2}));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    ingest_triples(write_file("nan.csv", "i,j,t,v\n0,0,0,1\n\n0,1,0,abc\n"), two_mode({2, 2}));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }
  CHECK_THROWS_AS(ingest_triples(write_file("oob.csv", "i,j,t,v\n0,2,0,1\n"), two_mode({2, 2})), BoundsError);
  CHECK_THROWS_AS(ingest_triples(write_file("neg.csv", "i,j,t,v\n-1,0,0,1\n"), two_mode({2, 2})), BoundsError);
}

TEST_CASE("ingest and re-export preserve every observed triple") {
  std::mt19937_64 rng(64);
  std::vector<MaskedSlice> slices;
  for (int t = 0; t < 4; ++t) {
    DenseTensor v = oracle::random_tensor(rng, {3, 5}, -1e3, 1e3);
    slices.push_back({v, oracle::random_mask(rng, {3, 5}, 0.6)});
  }
  slices.back().mask.set(14);  // pins the inferred shape
  const fs::path p = scratch("roundtrip.csv");
  write_triples(p, slices);
  const TensorStream back = ingest_triples(p, two_mode({3, 5}));
  REQUIRE(back.steps() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(back.slices[t].mask == slices[t].mask);
    for (std::size_t i = 0; i < 15; ++i)
      if (slices[t].mask.test(i)) CHECK(back.slices[t].values[i] == slices[t].values[i]);
  }
}

TEST_CASE("scenario JSON round trip and unknown keys") {
  Scenario sc = small_scenario(7);
  sc.corruption = {20, 10, 2, 0};
  sc.online.robust.phi = 0.05;
  sc.vanilla_init = true;
  sc.record_timing = false;
  const Scenario back = scenario_from_json(scenario_to_json(sc));
  CHECK(scenario_to_json(back) == scenario_to_json(sc));
  CHECK(back.online.robust.phi == 0.05);
  CHECK(back.corruption.outlier_pct == 10);
  CHECK_FALSE(back.record_timing);

  CHECK_THROWS_AS(scenario_from_json(R"({"seed": 1, "lamda3": 2})"), ConfigError);
  CHECK_THROWS_AS(scenario_from_json(R"({"batch": {"rank": 2, "ranks": 3}})"), ConfigError);
  CHECK_THROWS_AS(scenario_from_json("{not json"), ConfigError);
  CHECK_FALSE(scenario_from_json(R"({"preclean": false})").online.preclean);
}

TEST_CASE("derived seeds are distinct per stream") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
  CHECK(derive_seed(5, 3) == derive_seed(5, 3));
}

TEST_CASE("clean fully observed scenario is imputed accurately") {
  const MetricsReport r = run_experiment(small_scenario(1));
  CHECK(r.t_init == 18);
  CHECK(r.steps.size() == 42);
  CHECK(r.rae < 0.05);
  CHECK(std::isfinite(r.art_ms));
}

TEST_CASE("outputs are written and steps.csv is reproducible") {
  Scenario sc = small_scenario(3);
  sc.corruption = {30, 5, 3, 0};
  sc.record_timing = false;
  sc.write_checkpoint = true;
  sc.output_dir = scratch("run_a");
  fs::remove_all(sc.output_dir);
  const MetricsReport a = run_experiment(sc);
  sc.output_dir = scratch("run_b");
  fs::remove_all(sc.output_dir);
  run_experiment(sc);
  const std::string first = slurp(scratch("run_a") / "steps.csv");
  CHECK(first.rfind("t,nre,step_ms,n_observed,n_outliers_flagged", 0) == 0);
  CHECK(first == slurp(scratch("run_b") / "steps.csv"));
  CHECK(fs::exists(scratch("run_a") / "summary.json"));
  CHECK(fs::exists(scratch("run_a") / "state.bin"));
  CHECK(a.outlier_recall.injected > 0);
}

TEST_CASE("forecasting scenario reports AFE on the held-out tail") {
  Scenario sc = small_scenario(4);
  sc.synth.steps = 72;
  sc.forecast_steps = 12;
  const MetricsReport r = run_experiment(sc);
  REQUIRE(r.afe.has_value());
  CHECK(*r.afe < 0.2);
  CHECK(r.steps.size() == 72 - 12 - 18);
}

TEST_CASE("file scenario with a truth channel") {
  SynthConfig cfg;
  cfg.slice_shape = {6, 5};
  cfg.rank = 2;
  cfg.period = 4;
  cfg.steps = 30;
  const SynthData data = synth_stream(cfg);
  std::vector<MaskedSlice> slices;
  for (const auto& s : data.truth) slices.push_back({s, ObservationMask::full(s.shape())});
  write_triples(scratch("file_obs.csv"), slices);
  write_dense_triples(scratch("file_truth.csv"), data.truth);

  Scenario sc;
  sc.name = "from-file";
  sc.source = SourceKind::file;
  sc.file.path = scratch("file_obs.csv");
  sc.file.truth_path = scratch("file_truth.csv");
  sc.file.ingest = two_mode({6, 5});
  sc.batch.rank = 2;
  sc.batch.period = 4;
  sc.online.mu = 1e-3;
  const MetricsReport r = run_experiment(sc);
  CHECK(r.steps.size() == 30 - 12);
  CHECK(r.rae < 0.05);
}

TEST_CASE("errors carry the scenario name") {
  Scenario sc;
  sc.name = "missing-file";
  sc.source = SourceKind::file;
  sc.file.path = scratch("does_not_exist.csv");
  sc.file.ingest = two_mode({2, 2});
  try {
    run_experiment(sc);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("missing-file") != std::string::npos);
  }
}

TEST_CASE("run_repeated uses consecutive seeds") {
  Scenario sc = small_scenario(10);
  sc.synth.steps = 30;
  const auto reports = run_repeated(sc, 2);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].seed == 10);
  CHECK(reports[1].seed == 11);
}
