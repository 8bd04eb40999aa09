#include "sofia/online.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

void require_shape(const Shape& expected, const Shape& got, const char* what) {
  if (expected != got) throw DimensionError(std::string(what) + ": slice shape mismatch");
}

// Row indices of a flat slice position, last mode fastest.
void unflatten(std::size_t flat, const Shape& shape, std::vector<Eigen::Index>& idx) {
  for (std::size_t k = shape.size(); k-- > 0;) {
    idx[k] = static_cast<Eigen::Index>(flat % shape[k]);
    flat /= shape[k];
  }
}

}  // namespace

void OnlineConfig::validate() const {
  if (!(mu > 0.0)) throw ConfigError("mu must be positive");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("smoothness weights must be >= 0");
  if (!(lambda3 > 0.0)) throw ConfigError("lambda3 must be positive");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
  robust.validate();
}

Shape StreamState::slice_shape() const {
  Shape s;
  for (const auto& u : nontemporal) s.push_back(static_cast<std::size_t>(u.rows()));
  return s;
}

Vector StreamState::temporal(std::size_t lag) const {
  const std::size_t m = period();
  if (lag < 1 || lag > m) throw DimensionError("temporal lag outside the stored season");
  const std::size_t row = (temporal_head + m - lag) % m;
  return temporal_history.row(static_cast<Eigen::Index>(row)).transpose();
}

void StreamState::validate() const {
  config.validate();
  if (nontemporal.empty()) throw DimensionError("stream state has no non-temporal factors");
  const auto r = temporal_history.cols();
  for (const auto& u : nontemporal)
    if (u.cols() != r) throw DimensionError("stream factors disagree on rank");
  if (temporal_history.rows() < 2) throw ConfigError("seasonal period must be at least 2");
  if (temporal_head >= period()) throw ConfigError("temporal ring head out of range");
  hw.validate();
  if (hw.period() != period() || hw.rank() != rank())
    throw DimensionError("Holt-Winters state does not match the factor model");
  require_shape(slice_shape(), error_scale.shape(), "error scale");
  for (double s : error_scale.values())
    if (!(s > 0.0)) throw ConfigError("error scale entries must be positive");
}

StreamState make_stream_state(const BatchResult& init, const HwState& hw, const OnlineConfig& config) {
  config.validate();
  init.factors.validate();
  const std::size_t temporal = init.factors.temporal_mode();
  if (temporal == 0) throw DimensionError("factor model has no non-temporal mode");
  const Matrix& u = init.factors.matrices[temporal];
  const std::size_t m = hw.period();
  if (static_cast<std::size_t>(u.rows()) < m) throw InsufficientHistoryError("temporal factor shorter than one season");

  StreamState state;
  state.nontemporal.assign(init.factors.matrices.begin(), init.factors.matrices.begin() + static_cast<std::ptrdiff_t>(temporal));
  state.temporal_history = u.bottomRows(static_cast<Eigen::Index>(m));
  state.temporal_head = 0;
  state.hw = hw;
  state.error_scale = DenseTensor(state.slice_shape(), std::max(config.lambda3 / 100.0, config.sigma_floor));
  state.config = config;
  state.time = static_cast<std::size_t>(u.rows());
  state.validate();
  return state;
}

SliceForecast forecast_next(const StreamState& state) {
  SliceForecast out;
  out.temporal = hw_forecast(state.hw, 1);
  out.slice = kruskal_slice(state.nontemporal, out.temporal);
  return out;
}

DenseTensor estimate_outliers(const DenseTensor& y, const ObservationMask& mask,
                              const DenseTensor& forecast, const DenseTensor& scale, double huber_k,
                              double sigma_floor) {
  require_shape(y.shape(), mask.shape(), "estimate_outliers");
  require_shape(y.shape(), forecast.shape(), "estimate_outliers");
  require_shape(y.shape(), scale.shape(), "estimate_outliers");
  DenseTensor out(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask.test(i)) continue;
    const double sigma = std::max(scale[i], sigma_floor);
    const double r = y[i] - forecast[i];
    out[i] = r - huber_psi(r / sigma, huber_k) * sigma;
  }
  return out;
}

DenseTensor update_error_scale(const DenseTensor& scale, const DenseTensor& y,
                               const ObservationMask& mask, const DenseTensor& forecast,
                               const RobustConfig& robust, double sigma_floor) {
  require_shape(scale.shape(), y.shape(), "update_error_scale");
  require_shape(scale.shape(), mask.shape(), "update_error_scale");
  require_shape(scale.shape(), forecast.shape(), "update_error_scale");
  DenseTensor out = scale;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask.test(i)) continue;
    const double sigma = std::max(scale[i], sigma_floor);
    const double rho = biweight_rho((y[i] - forecast[i]) / sigma, robust.huber_k, robust.biweight_c);
    const double var = robust.phi * rho * sigma * sigma + (1.0 - robust.phi) * sigma * sigma;
    out[i] = std::max(std::sqrt(var), sigma_floor);
  }
  return out;
}

SliceResidual make_residual(const DenseTensor& y, const ObservationMask& mask,
                            const DenseTensor& outliers, const DenseTensor& forecast) {
  require_shape(y.shape(), mask.shape(), "make_residual");
  require_shape(y.shape(), outliers.shape(), "make_residual");
  require_shape(y.shape(), forecast.shape(), "make_residual");
  SliceResidual res;
  res.shape = y.shape();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask.test(i)) continue;
    res.flat.push_back(i);
    res.value.push_back(y[i] - outliers[i] - forecast[i]);
  }
  return res;
}

std::vector<Matrix> grad_update_nontemporal(std::span<const Matrix> factors,
                                            const SliceResidual& residual, const Vector& u_hat,
                                            double mu) {
  const std::size_t modes = factors.size();
  const auto rank = u_hat.size();
  std::vector<Matrix> updated(factors.begin(), factors.end());
  std::vector<Eigen::Index> idx(modes);
  Vector prod(rank);
  for (std::size_t e = 0; e < residual.flat.size(); ++e) {
    unflatten(residual.flat[e], residual.shape, idx);
    const double scaled = 2.0 * mu * residual.value[e];
    for (std::size_t n = 0; n < modes; ++n) {
      prod = u_hat;
      for (std::size_t l = 0; l < modes; ++l) {
        if (l == n) continue;
        for (Eigen::Index r = 0; r < rank; ++r) prod[r] *= factors[l](idx[l], r);
      }
      updated[n].row(idx[n]) += scaled * prod.transpose();
    }
  }
  return updated;
}

Vector grad_update_temporal(const Vector& u_hat, const SliceResidual& residual,
                            std::span<const Matrix> factors, const Vector& previous,
                            const Vector& season_ago, double mu, double lambda1, double lambda2) {
  const auto rank = u_hat.size();
  const std::size_t modes = factors.size();
  std::vector<Eigen::Index> idx(modes);
  Vector grad = Vector::Zero(rank);
  for (std::size_t e = 0; e < residual.flat.size(); ++e) {
    unflatten(residual.flat[e], residual.shape, idx);
    const double r_val = residual.value[e];
    for (Eigen::Index r = 0; r < rank; ++r) {
      double prod = r_val;
      for (std::size_t l = 0; l < modes; ++l) prod *= factors[l](idx[l], r);
      grad[r] += prod;
    }
  }
  return u_hat + 2.0 * mu * (grad + lambda1 * previous + lambda2 * season_ago - (lambda1 + lambda2) * u_hat);
}

double online_cost(std::span<const Matrix> factors, const Vector& temporal, const DenseTensor& y,
                   const ObservationMask& mask, const DenseTensor& outliers, const Vector& previous,
                   const Vector& season_ago, double lambda1, double lambda2, double lambda3) {
  const DenseTensor x = kruskal_slice(factors, temporal);
  require_shape(x.shape(), y.shape(), "online_cost");
  double fit = 0.0;
  double l1 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (mask.test(i)) {
      const double d = y[i] - outliers[i] - x[i];
      fit += d * d;
    }
    l1 += std::abs(outliers[i]);
  }
  return fit + lambda1 * (previous - temporal).squaredNorm() +
         lambda2 * (season_ago - temporal).squaredNorm() + lambda3 * l1;
}

StepOutput step(StreamState& state, const DenseTensor& y, const ObservationMask& mask) {
  const Shape shape = state.slice_shape();
  if (y.shape() != shape || mask.shape() != shape)
    throw ConfigError("slice shape differs from the shape the stream was initialised with");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (mask.test(i) && !std::isfinite(y[i])) throw InputError("observed entry is not finite");

  const OnlineConfig& cfg = state.config;
  SliceForecast fc = forecast_next(state);

  StepOutput out;
  if (cfg.preclean) {
    out.outliers = estimate_outliers(y, mask, fc.slice, state.error_scale, cfg.robust.huber_k, cfg.sigma_floor);
    state.error_scale = update_error_scale(state.error_scale, y, mask, fc.slice, cfg.robust, cfg.sigma_floor);
  } else {
    out.outliers = DenseTensor(shape);
  }

  const SliceResidual residual = make_residual(y, mask, out.outliers, fc.slice);
  const Vector previous = state.temporal(1);
  const Vector season_ago = state.temporal(state.period());
  std::vector<Matrix> updated = grad_update_nontemporal(state.nontemporal, residual, fc.temporal, cfg.mu);
  const Vector u_t = grad_update_temporal(fc.temporal, residual, state.nontemporal, previous,
                                          season_ago, cfg.mu, cfg.lambda1, cfg.lambda2);
  state.nontemporal = std::move(updated);
  state.hw = hw_update(state.hw, u_t);

  // u_t replaces u_{t-m}, the oldest vector in the ring
  state.temporal_history.row(static_cast<Eigen::Index>(state.temporal_head)) = u_t.transpose();
  state.temporal_head = (state.temporal_head + 1) % state.period();
  ++state.time;

  out.imputed = kruskal_slice(state.nontemporal, u_t);
  out.forecast = std::move(fc.slice);
  out.observed = residual.flat.size();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (mask.test(i) && out.outliers[i] != 0.0) ++out.flagged;
  return out;
}

DenseTensor forecast_h(const StreamState& state, std::size_t h) {
  return kruskal_slice(state.nontemporal, hw_forecast(state.hw, h));
}

}  // namespace sofia
