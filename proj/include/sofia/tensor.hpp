#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace sofia {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Shape = std::vector<std::size_t>;
using Index = std::vector<std::size_t>;

/// Product of mode lengths. Throws DimensionError on an empty shape or a zero-length mode.
std::size_t shape_size(const Shape& shape);

/// Dense N-way array, row-major (last index fastest), 0-based indices.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape, double fill = 0.0);
  DenseTensor(Shape shape, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t order() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t flat) { return values_[flat]; }
  double operator[](std::size_t flat) const { return values_[flat]; }

  double& at(std::span<const std::size_t> index) { return values_[flat_index(index)]; }
  double at(std::span<const std::size_t> index) const { return values_[flat_index(index)]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t flat_index(std::span<const std::size_t> index) const;
  Index multi_index(std::size_t flat) const;

  double max_value() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// One flag per entry of a tensor of the same shape; set means observed.
class ObservationMask {
 public:
  ObservationMask() = default;
  explicit ObservationMask(Shape shape, bool observed = false);

  static ObservationMask full(Shape shape) { return ObservationMask(std::move(shape), true); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool test(std::size_t flat) const { return bits_[flat] != 0; }
  void set(std::size_t flat, bool observed = true) { bits_[flat] = observed ? 1 : 0; }

  /// Number of observed entries.
  std::size_t count() const;

  friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> bits_;
};

/// CP factor matrices. Matrix n is I_n x R; the last matrix is the temporal one.
struct FactorSet {
  std::vector<Matrix> matrices;

  std::size_t order() const noexcept { return matrices.size(); }
  std::size_t rank() const noexcept {
    return matrices.empty() ? 0 : static_cast<std::size_t>(matrices.front().cols());
  }
  std::size_t temporal_mode() const noexcept { return matrices.size() - 1; }
  Shape shape() const;

  /// Throws DimensionError unless there is at least one matrix and all share a positive column count.
  void validate() const;
};

/// One time step of a stream: values plus which of them were observed.
struct MaskedSlice {
  DenseTensor values;
  ObservationMask mask;
};

/// Column-wise Kronecker product. Row (i, j) of the result is i * J + j.
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// U(last) ⊙ ... ⊙ U(0) in descending mode order, skipping `skip` (pass matrices.size() to skip none).
/// Row ordering matches the column ordering of mode_unfold.
Matrix khatri_rao_descending(std::span<const Matrix> matrices, std::size_t skip);

/// Mode-n matricization. Column index is sum over k != n of i_k * prod_{l<k, l!=n} I_l,
/// so X_(n) = U(n) * khatri_rao_descending(U, n)^T for a Kruskal tensor.
Matrix mode_unfold(const DenseTensor& tensor, std::size_t mode);

/// Inverse of mode_unfold.
DenseTensor mode_fold(const Matrix& unfolded, std::size_t mode, const Shape& shape);

/// Entry (i_1..i_N) = sum_r prod_n U(n)[i_n, r].
DenseTensor kruskal_reconstruct(const FactorSet& factors);

/// Kruskal reconstruction of a single temporal slice: the temporal matrix replaced by one row.
DenseTensor kruskal_slice(std::span<const Matrix> nontemporal, const Vector& temporal_row);

double frobenius(const DenseTensor& tensor);

/// Frobenius norm over observed entries only.
double masked_frobenius(const DenseTensor& tensor, const ObservationMask& mask);

/// Frobenius norm of (a - b).
double frobenius_distance(const DenseTensor& a, const DenseTensor& b);

}  // namespace sofia
