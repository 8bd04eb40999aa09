#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sofia/tensor.hpp"

namespace sofia {

struct BatchConfig {
  std::size_t rank = 3;
  std::size_t period = 2;
  double lambda1 = 1e-3;  // temporal smoothness
  double lambda2 = 1e-3;  // seasonal smoothness
  double lambda3 = 10.0;  // initial soft-threshold
  double decay = 0.85;
  double lambda3_floor_divisor = 100.0;
  double tol = 1e-4;
  std::size_t max_iter = 300;   // ALS sweeps per call
  std::size_t max_outer = 300;  // soft-thresholding passes
  std::uint64_t seed = 0;
  /// Off: a single ALS call with the outlier tensor held at zero.
  bool outlier_loop = true;

  void validate() const;
};

double soft_threshold(double x, double lambda);

/// Coordinates of the observed entries of a mask, bucketed by row for every mode.
class ObservedEntries {
 public:
  explicit ObservedEntries(const ObservationMask& mask);

  std::size_t count() const noexcept { return flat_.size(); }
  std::size_t order() const noexcept { return shape_.size(); }
  const Shape& shape() const noexcept { return shape_; }

  std::span<const std::size_t> coords(std::size_t entry) const {
    return {coords_.data() + entry * order(), order()};
  }
  std::size_t flat(std::size_t entry) const { return flat_[entry]; }

  /// Entries whose mode-`mode` index equals `row`.
  std::span<const std::size_t> row(std::size_t mode, std::size_t row) const;

  /// Per-entry values y[flat] - o[flat]; `outliers` may be null.
  std::vector<double> gather(const DenseTensor& y, const DenseTensor* outliers) const;

 private:
  Shape shape_;
  std::vector<std::size_t> coords_;
  std::vector<std::size_t> flat_;
  std::vector<std::vector<std::size_t>> row_offsets_;
  std::vector<std::vector<std::size_t>> row_entries_;
};

/// Least-squares update of one non-temporal factor row: B^{-1} c over the observed
/// entries of that row. Returns nullopt when the row has no usable observations.
/// `ystar` holds y - o per observed entry, in ObservedEntries order.
std::optional<Vector> nontemporal_row_update(const ObservedEntries& observed,
                                             std::span<const double> ystar,
                                             const FactorSet& factors, std::size_t mode,
                                             std::size_t row);

/// Smoothness-penalised update of one temporal row. Neighbours at distance 1 and m that
/// exist inside the window enter with weights lambda1 and lambda2; their current values
/// are read from `factors`.
Vector temporal_row_update(const ObservedEntries& observed, std::span<const double> ystar,
                           const FactorSet& factors, std::size_t row, double lambda1,
                           double lambda2, std::size_t period);

/// Moves the norm of every column of non-temporal `mode` into the temporal column.
void normalize_into_temporal(FactorSet& factors, std::size_t mode);

/// |Omega * (Y - O - [[U]])|_F^2 + l1 |L_1 U_N|^2 + l2 |L_m U_N|^2 + l3 |O|_1.
double batch_objective(const DenseTensor& y, const ObservationMask& mask,
                       const DenseTensor& outliers, const FactorSet& factors, double lambda1,
                       double lambda2, double lambda3, std::size_t period);

struct AlsResult {
  DenseTensor completed;
  FactorSet factors;
  std::size_t sweeps = 0;
  double fitness = 0.0;
};

/// Smoothness-regularised masked ALS on Y - O. Gauss-Seidel row sweeps over the
/// non-temporal modes (each followed by column normalisation) and then the temporal
/// mode, until the fitness change drops below config.tol.
AlsResult sofia_als(const DenseTensor& y, const ObservationMask& mask, const DenseTensor& outliers,
                    FactorSet factors, const BatchConfig& config);

struct BatchResult {
  DenseTensor completed;
  FactorSet factors;
  DenseTensor outliers;
  std::size_t outer_passes = 0;
  std::size_t als_sweeps = 0;
  double fitness = 0.0;
  double final_lambda3 = 0.0;
};

/// Stacks slices along a new last (temporal) mode.
MaskedSlice stack_slices(std::span<const MaskedSlice> slices);

/// Uniform [0, 1) factor matrices for the given shape.
FactorSet random_factors(const Shape& shape, std::size_t rank, std::uint64_t seed);

/// Working threshold after `passes` decays: max(l3 * d^passes, l3 / divisor).
double decayed_lambda3(const BatchConfig& config, std::size_t passes);

/// Initialisation phase over the first slices of a stream (at least three seasons):
/// alternates sofia_als and soft-thresholding of the observed residuals with a decaying
/// threshold until the completed tensor stops changing.
BatchResult initialize(std::span<const MaskedSlice> prefix, const BatchConfig& config);

}  // namespace sofia
