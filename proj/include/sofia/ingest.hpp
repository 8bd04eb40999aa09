#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include "sofia/tensor.hpp"

namespace sofia {

/// Which delimited column carries which role. Columns are 0-based.
struct TripleSchema {
  std::vector<std::size_t> index_columns;
  std::size_t time_column = 0;
  std::size_t value_column = 0;
  char delimiter = ',';
  bool header = true;

  /// index columns 0..n-1, then time, then value.
  static TripleSchema positional(std::size_t index_modes);
};

struct IngestOptions {
  TripleSchema schema;
  /// Non-temporal shape; empty means infer from the largest index seen.
  Shape shape;
  /// Raw time values per step; step = floor(time / granularity).
  std::size_t granularity = 1;
  /// Store log2(x + 1) instead of x.
  bool log2_transform = false;
};

/// A stream materialised slice by slice. Absent (index, t) pairs are missing.
struct TensorStream {
  Shape shape;
  std::size_t period = 0;
  std::vector<MaskedSlice> slices;
  /// Optional clean channel for evaluation, one full slice per step.
  std::optional<std::vector<DenseTensor>> truth;
  /// Records overwritten by a later record for the same (index, step).
  std::size_t duplicates = 0;

  std::size_t steps() const noexcept { return slices.size(); }
};

/// Reads (index..., time, value) records. Throws ParseError with the line number on
/// malformed rows and BoundsError on indices outside `options.shape`.
TensorStream ingest_triples(const std::filesystem::path& path, const IngestOptions& options);

/// Writes the observed entries as "i0,...,i{N-2},t,value" with a header row.
void write_triples(const std::filesystem::path& path, const std::vector<MaskedSlice>& slices);

/// Writes every entry of full slices in the same layout.
void write_dense_triples(const std::filesystem::path& path, const std::vector<DenseTensor>& slices);

}  // namespace sofia
