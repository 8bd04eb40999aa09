#include "sofia/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": shape mismatch");
}

// Rows of the result enumerate the modes in row-major order (last matrix fastest).
Matrix khatri_rao_ascending(std::span<const Matrix> matrices) {
  Matrix out = matrices.front();
  for (std::size_t k = 1; k < matrices.size(); ++k) out = khatri_rao(out, matrices[k]);
  return out;
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape needs at least one mode");
  std::size_t n = 1;
  for (std::size_t len : shape) {
    if (len == 0) throw DimensionError("tensor mode lengths must be positive");
    n *= len;
  }
  return n;
}

DenseTensor::DenseTensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

DenseTensor::DenseTensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_))
    throw DimensionError("tensor values length does not match shape");
}

std::size_t DenseTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("index order does not match tensor order");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < shape_.size(); ++k) {
    if (index[k] >= shape_[k]) throw DimensionError("index out of range");
    flat = flat * shape_[k] + index[k];
  }
  return flat;
}

Index DenseTensor::multi_index(std::size_t flat) const {
  Index index(shape_.size());
  for (std::size_t k = shape_.size(); k-- > 0;) {
    index[k] = flat % shape_[k];
    flat /= shape_[k];
  }
  return index;
}

double DenseTensor::max_value() const {
  if (values_.empty()) return 0.0;
  return *std::max_element(values_.begin(), values_.end());
}

ObservationMask::ObservationMask(Shape shape, bool observed)
    : shape_(std::move(shape)), bits_(shape_size(shape_), observed ? 1 : 0) {}

std::size_t ObservationMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Shape FactorSet::shape() const {
  Shape s;
  s.reserve(matrices.size());
  for (const auto& m : matrices) s.push_back(static_cast<std::size_t>(m.rows()));
  return s;
}

void FactorSet::validate() const {
  if (matrices.empty()) throw DimensionError("factor set has no matrices");
  const auto r = matrices.front().cols();
  if (r <= 0) throw DimensionError("factor rank must be positive");
  for (const auto& m : matrices) {
    if (m.cols() != r) throw DimensionError("factor matrices disagree on rank");
    if (m.rows() <= 0) throw DimensionError("factor matrix with no rows");
  }
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw DimensionError("khatri_rao: column counts differ");
  const auto rows_a = a.rows();
  const auto rows_b = b.rows();
  Matrix out(rows_a * rows_b, a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index i = 0; i < rows_a; ++i) {
      out.col(r).segment(i * rows_b, rows_b) = a(i, r) * b.col(r);
    }
  }
  return out;
}

Matrix khatri_rao_descending(std::span<const Matrix> matrices, std::size_t skip) {
  Matrix out;
  bool first = true;
  for (std::size_t k = matrices.size(); k-- > 0;) {
    if (k == skip) continue;
    if (first) {
      out = matrices[k];
      first = false;
    } else {
      out = khatri_rao(out, matrices[k]);
    }
  }
  if (first) throw DimensionError("khatri_rao_descending: nothing to multiply");
  return out;
}

Matrix mode_unfold(const DenseTensor& tensor, std::size_t mode) {
  const Shape& shape = tensor.shape();
  if (mode >= shape.size()) throw DimensionError("mode_unfold: mode out of range");
  const std::size_t rows = shape[mode];
  const std::size_t cols = tensor.size() / rows;

  // column stride of each mode inside the unfolding (smallest mode fastest)
  std::vector<std::size_t> col_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k == mode) continue;
    col_stride[k] = stride;
    stride *= shape[k];
  }

  Matrix out(rows, cols);
  Index idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < tensor.size(); ++flat) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < shape.size(); ++k) col += idx[k] * col_stride[k];
    out(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col)) = tensor[flat];
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

DenseTensor mode_fold(const Matrix& unfolded, std::size_t mode, const Shape& shape) {
  if (mode >= shape.size()) throw DimensionError("mode_fold: mode out of range");
  const std::size_t total = shape_size(shape);
  if (static_cast<std::size_t>(unfolded.rows()) != shape[mode] ||
      static_cast<std::size_t>(unfolded.size()) != total)
    throw DimensionError("mode_fold: matrix does not fit shape");

  std::vector<std::size_t> col_stride(shape.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k == mode) continue;
    col_stride[k] = stride;
    stride *= shape[k];
  }

  DenseTensor out(shape);
  Index idx(shape.size(), 0);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < shape.size(); ++k) col += idx[k] * col_stride[k];
    out[flat] = unfolded(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(col));
    for (std::size_t k = shape.size(); k-- > 0;) {
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
    }
  }
  return out;
}

DenseTensor kruskal_reconstruct(const FactorSet& factors) {
  factors.validate();
  const Shape shape = factors.shape();
  DenseTensor out(shape);
  const Matrix& last = factors.matrices.back();
  if (factors.order() == 1) {
    const Vector sums = last.rowwise().sum();
    std::copy(sums.data(), sums.data() + sums.size(), out.values().begin());
    return out;
  }
  const Matrix lead = khatri_rao_ascending(
      std::span<const Matrix>(factors.matrices.data(), factors.order() - 1));
  Eigen::Map<RowMajorMatrix> view(out.values().data(), lead.rows(), last.rows());
  view.noalias() = lead * last.transpose();
  return out;
}

DenseTensor kruskal_slice(std::span<const Matrix> nontemporal, const Vector& temporal_row) {
  if (nontemporal.empty()) throw DimensionError("kruskal_slice: no non-temporal matrices");
  Shape shape;
  for (const auto& m : nontemporal) {
    if (m.cols() != temporal_row.size()) throw DimensionError("kruskal_slice: rank mismatch");
    shape.push_back(static_cast<std::size_t>(m.rows()));
  }
  DenseTensor out(shape);
  Eigen::Map<Vector> view(out.values().data(), static_cast<Eigen::Index>(out.size()));
  if (nontemporal.size() == 1) {
    view.noalias() = nontemporal.front() * temporal_row;
  } else {
    view.noalias() = khatri_rao_ascending(nontemporal) * temporal_row;
  }
  return out;
}

double frobenius(const DenseTensor& tensor) {
  double sum = 0.0;
  for (double v : tensor.values()) sum += v * v;
  return std::sqrt(sum);
}

double masked_frobenius(const DenseTensor& tensor, const ObservationMask& mask) {
  require_same_shape(tensor.shape(), mask.shape(), "masked_frobenius");
  double sum = 0.0;
  for (std::size_t i = 0; i < tensor.size(); ++i) {
    if (mask.test(i)) sum += tensor[i] * tensor[i];
  }
  return std::sqrt(sum);
}

double frobenius_distance(const DenseTensor& a, const DenseTensor& b) {
  require_same_shape(a.shape(), b.shape(), "frobenius_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace sofia
