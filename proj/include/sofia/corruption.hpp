#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sofia/tensor.hpp"

namespace sofia {

/// (X, Y, Z): X% missing, Y% outliers of magnitude Z * max(truth).
struct CorruptionSpec {
  double missing_pct = 0.0;
  double outlier_pct = 0.0;
  double outlier_mag = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CorruptedStream {
  std::vector<MaskedSlice> slices;
  /// Flat positions that received an outlier, per slice (possibly also missing).
  std::vector<std::vector<std::size_t>> outlier_positions;
  double max_value = 0.0;
};

/// Per slice, exactly round(X% * size) entries are marked missing and, in an independent
/// draw, round(Y% * size) entries are replaced by +-Z * max(clean) with equal sign
/// probability. Sampling depends only on (seed, slice index). max(truth) is taken over
/// `stream` unless `truth_max` is given (for streams that already carry noise).
CorruptedStream inject_corruption(std::span<const DenseTensor> stream, const CorruptionSpec& spec,
                                  std::optional<double> truth_max = std::nullopt);

}  // namespace sofia
