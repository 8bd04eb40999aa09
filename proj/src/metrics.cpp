#include "sofia/metrics.hpp"

#include <cmath>
#include <numeric>

#include "sofia/errors.hpp"

namespace sofia {

double metric_nre(const DenseTensor& estimate, const DenseTensor& truth) {
  if (estimate.shape() != truth.shape()) throw DimensionError("metric_nre: shape mismatch");
  const double norm = frobenius(truth);
  if (!(norm > 0.0)) throw MetricError("NRE undefined for a zero-norm truth");
  return frobenius_distance(estimate, truth) / norm;
}

double metric_masked_nre(const DenseTensor& estimate, const DenseTensor& truth, const ObservationMask& mask) {
  if (estimate.shape() != truth.shape() || mask.shape() != truth.shape())
    throw DimensionError("metric_masked_nre: shape mismatch");
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!mask.test(i)) continue;
    const double d = estimate[i] - truth[i];
    diff += d * d;
    norm += truth[i] * truth[i];
  }
  if (!(norm > 0.0)) throw MetricError("NRE undefined for a zero-norm truth");
  return std::sqrt(diff / norm);
}

double metric_rae(std::span<const double> nre_series) {
  if (nre_series.empty()) throw MetricError("RAE of an empty series");
  return std::accumulate(nre_series.begin(), nre_series.end(), 0.0) / static_cast<double>(nre_series.size());
}

double metric_afe(std::span<const DenseTensor> forecasts, std::span<const DenseTensor> truths) {
  if (forecasts.size() != truths.size()) throw DimensionError("metric_afe: horizon mismatch");
  if (forecasts.empty()) throw MetricError("AFE over an empty horizon");
  double sum = 0.0;
  for (std::size_t h = 0; h < forecasts.size(); ++h) sum += metric_nre(forecasts[h], truths[h]);
  return sum / static_cast<double>(forecasts.size());
}

double metric_art(std::span<const double> timings, std::size_t t_init) {
  if (timings.size() <= t_init + 1) throw MetricError("ART needs at least one step after the warm-up");
  const auto first = timings.begin() + static_cast<std::ptrdiff_t>(t_init + 1);
  return std::accumulate(first, timings.end(), 0.0) / static_cast<double>(timings.end() - first);
}

}  // namespace sofia
