#include "sofia/batch.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

// Hadamard product of the factor rows of one entry, skipping `mode`.
void entry_hadamard(const FactorSet& factors, std::span<const std::size_t> coords, std::size_t mode,
                    Vector& h) {
  h.setOnes();
  const auto rank = h.size();
  for (std::size_t l = 0; l < factors.order(); ++l) {
    if (l == mode) continue;
    const Matrix& u = factors.matrices[l];
    const auto i = static_cast<Eigen::Index>(coords[l]);
    for (Eigen::Index r = 0; r < rank; ++r) h[r] *= u(i, r);
  }
}

void accumulate_normal_equations(const ObservedEntries& observed, std::span<const double> ystar,
                                 const FactorSet& factors, std::size_t mode, std::size_t row,
                                 Matrix& gram, Vector& rhs) {
  const auto rank = static_cast<Eigen::Index>(factors.rank());
  gram.setZero(rank, rank);
  rhs.setZero(rank);
  Vector h(rank);
  for (std::size_t e : observed.row(mode, row)) {
    entry_hadamard(factors, observed.coords(e), mode, h);
    for (Eigen::Index a = 0; a < rank; ++a) {
      const double ha = h[a];
      for (Eigen::Index b = 0; b <= a; ++b) gram(a, b) += ha * h[b];
    }
    rhs += ystar[e] * h;
  }
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
}

// B^{-1} c, with a small ridge when B is numerically singular.
std::optional<Vector> solve_normal_equations(Matrix gram, const Vector& rhs) {
  const double trace = gram.trace();
  if (!(trace > 0.0)) return std::nullopt;
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-12) return Vector(llt.solve(rhs));
  gram.diagonal().array() += 1e-9 * trace / static_cast<double>(gram.rows());
  return Vector(gram.ldlt().solve(rhs));
}

void require_finite_observed(const DenseTensor& y, const ObservationMask& mask) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask.test(i) && !std::isfinite(y[i])) throw InputError("observed entry is not finite");
  }
}

double model_value(const FactorSet& factors, std::span<const std::size_t> coords) {
  const auto rank = static_cast<Eigen::Index>(factors.rank());
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rank; ++r) {
    double prod = 1.0;
    for (std::size_t l = 0; l < factors.order(); ++l)
      prod *= factors.matrices[l](static_cast<Eigen::Index>(coords[l]), r);
    sum += prod;
  }
  return sum;
}

double fitness(const ObservedEntries& observed, std::span<const double> ystar,
               const FactorSet& factors) {
  double residual = 0.0;
  double norm = 0.0;
  for (std::size_t e = 0; e < observed.count(); ++e) {
    const double d = ystar[e] - model_value(factors, observed.coords(e));
    residual += d * d;
    norm += ystar[e] * ystar[e];
  }
  if (norm == 0.0) return 1.0 - std::sqrt(residual);
  return 1.0 - std::sqrt(residual / norm);
}

}  // namespace

void BatchConfig::validate() const {
  if (rank < 1) throw ConfigError("rank must be at least 1");
  if (period < 2) throw ConfigError("seasonal period must be at least 2");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("smoothness weights must be >= 0");
  if (!(lambda3 > 0.0)) throw ConfigError("lambda3 must be positive");
  if (!(decay > 0.0 && decay < 1.0)) throw ConfigError("decay must lie in (0,1)");
  if (!(lambda3_floor_divisor >= 1.0)) throw ConfigError("lambda3 floor divisor must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("tol must be positive");
  if (max_iter < 1 || max_outer < 1) throw ConfigError("iteration limits must be positive");
}

double soft_threshold(double x, double lambda) {
  const double shrunk = std::abs(x) - lambda;
  if (shrunk <= 0.0) return 0.0;
  return x > 0.0 ? shrunk : -shrunk;
}

ObservedEntries::ObservedEntries(const ObservationMask& mask) : shape_(mask.shape()) {
  const std::size_t n = shape_.size();
  Index idx(n, 0);
  for (std::size_t flat = 0; flat < mask.size(); ++flat) {
    if (mask.test(flat)) {
      flat_.push_back(flat);
      coords_.insert(coords_.end(), idx.begin(), idx.end());
    }
    for (std::size_t k = n; k-- > 0;) {
      if (++idx[k] < shape_[k]) break;
      idx[k] = 0;
    }
  }

  // counting sort of entries by row, per mode
  row_offsets_.resize(n);
  row_entries_.resize(n);
  for (std::size_t mode = 0; mode < n; ++mode) {
    auto& offsets = row_offsets_[mode];
    offsets.assign(shape_[mode] + 1, 0);
    for (std::size_t e = 0; e < count(); ++e) ++offsets[coords_[e * n + mode] + 1];
    for (std::size_t i = 0; i < shape_[mode]; ++i) offsets[i + 1] += offsets[i];
    auto& entries = row_entries_[mode];
    entries.resize(count());
    std::vector<std::size_t> cursor(offsets.begin(), offsets.end() - 1);
    for (std::size_t e = 0; e < count(); ++e) entries[cursor[coords_[e * n + mode]]++] = e;
  }
}

std::span<const std::size_t> ObservedEntries::row(std::size_t mode, std::size_t row) const {
  if (mode >= order() || row >= shape_[mode]) throw DimensionError("row bucket out of range");
  const auto& offsets = row_offsets_[mode];
  return {row_entries_[mode].data() + offsets[row], offsets[row + 1] - offsets[row]};
}

std::vector<double> ObservedEntries::gather(const DenseTensor& y, const DenseTensor* outliers) const {
  if (y.shape() != shape_ || (outliers && outliers->shape() != shape_))
    throw DimensionError("gather: shape mismatch");
  std::vector<double> out(count());
  for (std::size_t e = 0; e < count(); ++e) {
    out[e] = y[flat_[e]] - (outliers ? (*outliers)[flat_[e]] : 0.0);
  }
  return out;
}

std::optional<Vector> nontemporal_row_update(const ObservedEntries& observed,
                                             std::span<const double> ystar,
                                             const FactorSet& factors, std::size_t mode,
                                             std::size_t row) {
  if (factors.shape() != observed.shape()) throw DimensionError("factor shape != tensor shape");
  if (mode >= factors.temporal_mode()) throw DimensionError("mode is not a non-temporal mode");
  if (ystar.size() != observed.count()) throw DimensionError("ystar length != observed count");
  if (observed.row(mode, row).empty()) return std::nullopt;
  Matrix gram;
  Vector rhs;
  accumulate_normal_equations(observed, ystar, factors, mode, row, gram, rhs);
  return solve_normal_equations(std::move(gram), rhs);
}

Vector temporal_row_update(const ObservedEntries& observed, std::span<const double> ystar,
                           const FactorSet& factors, std::size_t row, double lambda1,
                           double lambda2, std::size_t period) {
  if (factors.shape() != observed.shape()) throw DimensionError("factor shape != tensor shape");
  if (ystar.size() != observed.count()) throw DimensionError("ystar length != observed count");
  const std::size_t mode = factors.temporal_mode();
  const Matrix& u = factors.matrices[mode];
  const auto length = static_cast<std::size_t>(u.rows());
  if (row >= length) throw DimensionError("temporal row out of range");

  Matrix gram;
  Vector rhs;
  accumulate_normal_equations(observed, ystar, factors, mode, row, gram, rhs);

  double penalty = 0.0;
  auto pull = [&](std::size_t neighbour, double weight) {
    penalty += weight;
    rhs += weight * u.row(static_cast<Eigen::Index>(neighbour)).transpose();
  };
  if (row >= 1) pull(row - 1, lambda1);
  if (row + 1 < length) pull(row + 1, lambda1);
  if (row >= period) pull(row - period, lambda2);
  if (row + period < length) pull(row + period, lambda2);
  gram.diagonal().array() += penalty;

  auto solved = solve_normal_equations(std::move(gram), rhs);
  if (!solved) return u.row(static_cast<Eigen::Index>(row)).transpose();
  return *solved;
}

void normalize_into_temporal(FactorSet& factors, std::size_t mode) {
  Matrix& temporal = factors.matrices[factors.temporal_mode()];
  Matrix& u = factors.matrices[mode];
  for (Eigen::Index r = 0; r < u.cols(); ++r) {
    const double norm = u.col(r).norm();
    if (!(norm > 0.0)) continue;
    temporal.col(r) *= norm;
    u.col(r) /= norm;
  }
}

double batch_objective(const DenseTensor& y, const ObservationMask& mask,
                       const DenseTensor& outliers, const FactorSet& factors, double lambda1,
                       double lambda2, double lambda3, std::size_t period) {
  const DenseTensor x = kruskal_reconstruct(factors);
  if (x.shape() != y.shape() || mask.shape() != y.shape() || outliers.shape() != y.shape())
    throw DimensionError("batch_objective: shape mismatch");
  double fit = 0.0;
  double l1 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask.test(i)) {
      const double d = y[i] - outliers[i] - x[i];
      fit += d * d;
    }
    l1 += std::abs(outliers[i]);
  }
  const Matrix& u = factors.matrices.back();
  const Eigen::Index len = u.rows();
  double smooth = 0.0;
  for (Eigen::Index i = 0; i + 1 < len; ++i) smooth += (u.row(i) - u.row(i + 1)).squaredNorm();
  double seasonal = 0.0;
  const auto m = static_cast<Eigen::Index>(period);
  for (Eigen::Index i = 0; i + m < len; ++i) seasonal += (u.row(i) - u.row(i + m)).squaredNorm();
  return fit + lambda1 * smooth + lambda2 * seasonal + lambda3 * l1;
}

AlsResult sofia_als(const DenseTensor& y, const ObservationMask& mask, const DenseTensor& outliers,
                    FactorSet factors, const BatchConfig& config) {
  config.validate();
  factors.validate();
  if (factors.order() < 2) throw DimensionError("sofia_als needs a non-temporal and a temporal mode");
  if (y.shape() != mask.shape() || y.shape() != outliers.shape() || y.shape() != factors.shape())
    throw DimensionError("sofia_als: tensor, mask, outliers and factors disagree on shape");
  require_finite_observed(y, mask);
  if (!outliers.values().empty() &&
      !std::all_of(outliers.values().begin(), outliers.values().end(),
                   [](double v) { return std::isfinite(v); }))
    throw InputError("outlier tensor is not finite");

  const ObservedEntries observed(mask);
  const std::vector<double> ystar = observed.gather(y, &outliers);
  const std::size_t temporal = factors.temporal_mode();

  AlsResult result;
  double previous = fitness(observed, ystar, factors);
  for (std::size_t sweep = 0; sweep < config.max_iter; ++sweep) {
    for (std::size_t mode = 0; mode < temporal; ++mode) {
      for (std::size_t row = 0; row < y.shape()[mode]; ++row) {
        if (auto updated = nontemporal_row_update(observed, ystar, factors, mode, row))
          factors.matrices[mode].row(static_cast<Eigen::Index>(row)) = updated->transpose();
      }
      normalize_into_temporal(factors, mode);
    }
    for (std::size_t row = 0; row < y.shape()[temporal]; ++row) {
      const Vector updated = temporal_row_update(observed, ystar, factors, row, config.lambda1,
                                                 config.lambda2, config.period);
      factors.matrices[temporal].row(static_cast<Eigen::Index>(row)) = updated.transpose();
    }
    ++result.sweeps;
    const double current = fitness(observed, ystar, factors);
    result.fitness = current;
    if (std::abs(current - previous) < config.tol) break;
    previous = current;
  }
  result.completed = kruskal_reconstruct(factors);
  result.factors = std::move(factors);
  return result;
}

MaskedSlice stack_slices(std::span<const MaskedSlice> slices) {
  if (slices.empty()) throw InsufficientHistoryError("no slices to stack");
  const Shape& slice_shape = slices.front().values.shape();
  const std::size_t steps = slices.size();
  Shape shape = slice_shape;
  shape.push_back(steps);
  MaskedSlice out{DenseTensor(shape), ObservationMask(shape)};
  for (std::size_t t = 0; t < steps; ++t) {
    const auto& s = slices[t];
    if (s.values.shape() != slice_shape || s.mask.shape() != slice_shape)
      throw DimensionError("slices differ in shape");
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out.values[i * steps + t] = s.values[i];
      out.mask.set(i * steps + t, s.mask.test(i));
    }
  }
  return out;
}

FactorSet random_factors(const Shape& shape, std::size_t rank, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  FactorSet factors;
  for (std::size_t len : shape) {
    Matrix u(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(rank));
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index r = 0; r < u.cols(); ++r) u(i, r) = unit(rng);
    factors.matrices.push_back(std::move(u));
  }
  return factors;
}

double decayed_lambda3(const BatchConfig& config, std::size_t passes) {
  const double floor = config.lambda3 / config.lambda3_floor_divisor;
  return std::max(config.lambda3 * std::pow(config.decay, static_cast<double>(passes)), floor);
}

BatchResult initialize(std::span<const MaskedSlice> prefix, const BatchConfig& config) {
  config.validate();
  if (prefix.size() < 3 * config.period)
    throw InsufficientHistoryError("initialisation needs at least three seasons of slices");

  const MaskedSlice batch = stack_slices(prefix);
  const DenseTensor& y = batch.values;
  const ObservationMask& mask = batch.mask;

  BatchResult result;
  result.factors = random_factors(y.shape(), config.rank, config.seed);
  result.outliers = DenseTensor(y.shape());

  if (!config.outlier_loop) {
    AlsResult als = sofia_als(y, mask, result.outliers, std::move(result.factors), config);
    result.completed = std::move(als.completed);
    result.factors = std::move(als.factors);
    result.als_sweeps = als.sweeps;
    result.fitness = als.fitness;
    result.outer_passes = 1;
    result.final_lambda3 = config.lambda3;
    return result;
  }

  const double floor = config.lambda3 / config.lambda3_floor_divisor;
  double lambda3 = config.lambda3;
  DenseTensor previous;
  for (std::size_t pass = 0; pass < config.max_outer; ++pass) {
    AlsResult als = sofia_als(y, mask, result.outliers, std::move(result.factors), config);
    result.factors = std::move(als.factors);
    result.completed = std::move(als.completed);
    result.als_sweeps += als.sweeps;
    result.fitness = als.fitness;
    ++result.outer_passes;

    for (std::size_t i = 0; i < y.size(); ++i) {
      result.outliers[i] = mask.test(i) ? soft_threshold(y[i] - result.completed[i], lambda3) : 0.0;
    }
    lambda3 = std::max(config.decay * lambda3, floor);

    if (!previous.empty()) {
      const double base = frobenius(previous);
      const double change = frobenius_distance(previous, result.completed);
      if (base > 0.0 ? change / base < config.tol : change == 0.0) break;
    }
    previous = result.completed;
  }
  result.final_lambda3 = lambda3;
  return result;
}

}  // namespace sofia
