#include "sofia/corruption.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

// k distinct positions out of n, by a partial Fisher-Yates shuffle.
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::size_t count_for(double pct, std::size_t n) {
  return std::min(n, static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(n))));
}

}  // namespace

void CorruptionSpec::validate() const {
  if (!(missing_pct >= 0.0 && missing_pct < 100.0)) throw ConfigError("missing percentage must lie in [0,100)");
  if (!(outlier_pct >= 0.0 && outlier_pct <= 100.0)) throw ConfigError("outlier percentage must lie in [0,100]");
  if (!(outlier_mag >= 0.0)) throw ConfigError("outlier magnitude must be >= 0");
}

CorruptedStream inject_corruption(std::span<const DenseTensor> clean, const CorruptionSpec& spec,
                                  std::optional<double> truth_max) {
  spec.validate();
  CorruptedStream out;
  double max_value = -std::numeric_limits<double>::infinity();
  for (const auto& slice : clean)
    for (double v : slice.values()) max_value = std::max(max_value, v);
  out.max_value = truth_max ? *truth_max : (clean.empty() ? 0.0 : max_value);
  const double magnitude = spec.outlier_mag * out.max_value;

  out.slices.reserve(clean.size());
  out.outlier_positions.reserve(clean.size());
  for (std::size_t t = 0; t < clean.size(); ++t) {
    const DenseTensor& truth = clean[t];
    const std::size_t n = truth.size();
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(t >> 32)};
    std::mt19937_64 rng(seq);

    MaskedSlice slice{truth, ObservationMask::full(truth.shape())};
    for (std::size_t pos : sample_positions(n, count_for(spec.missing_pct, n), rng)) slice.mask.set(pos, false);

    std::vector<std::size_t> outliers = sample_positions(n, count_for(spec.outlier_pct, n), rng);
    std::bernoulli_distribution positive(0.5);
    for (std::size_t pos : outliers) slice.values[pos] = positive(rng) ? magnitude : -magnitude;

    out.slices.push_back(std::move(slice));
    out.outlier_positions.push_back(std::move(outliers));
  }
  return out;
}

}  // namespace sofia
