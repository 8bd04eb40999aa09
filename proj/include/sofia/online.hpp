#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sofia/batch.hpp"
#include "sofia/robust_hw.hpp"
#include "sofia/tensor.hpp"

namespace sofia {

struct OnlineConfig {
  double mu = 0.1;
  double lambda1 = 1e-3;
  double lambda2 = 1e-3;
  /// Only used to seed the error scale at lambda3 / 100.
  double lambda3 = 10.0;
  RobustConfig robust;
  double sigma_floor = 1e-12;
  /// Off: outliers forced to zero and the error scale frozen.
  bool preclean = true;

  void validate() const;
};

/// Everything the dynamic update carries from one step to the next.
struct StreamState {
  std::vector<Matrix> nontemporal;
  /// m x R ring of the latest temporal vectors; row `temporal_head` is the oldest.
  Matrix temporal_history;
  std::size_t temporal_head = 0;
  HwState hw;
  DenseTensor error_scale;
  OnlineConfig config;
  /// Number of slices consumed so far (t).
  std::size_t time = 0;

  Shape slice_shape() const;
  std::size_t rank() const noexcept { return static_cast<std::size_t>(temporal_history.cols()); }
  std::size_t period() const noexcept { return static_cast<std::size_t>(temporal_history.rows()); }

  /// u_{t+1-lag}: lag 1 is the newest temporal vector, lag m the oldest stored.
  Vector temporal(std::size_t lag) const;

  void validate() const;
};

/// Builds the online state from the initialisation result and the Holt-Winters fit of
/// its temporal factor.
StreamState make_stream_state(const BatchResult& init, const HwState& hw, const OnlineConfig& config);

struct SliceForecast {
  Vector temporal;
  DenseTensor slice;
};

/// One-step-ahead Holt-Winters forecast of the temporal vector and the slice it implies.
SliceForecast forecast_next(const StreamState& state);

/// Clipped-away part of the forecast residual: r - psi(r / sigma) * sigma at observed
/// entries, zero elsewhere.
DenseTensor estimate_outliers(const DenseTensor& y, const ObservationMask& mask,
                              const DenseTensor& forecast, const DenseTensor& scale, double huber_k,
                              double sigma_floor = 1e-12);

/// sigma_t^2 = phi * rho(r / sigma) * sigma^2 + (1 - phi) * sigma^2 at observed entries;
/// unobserved entries carried forward. Result floored at sigma_floor.
DenseTensor update_error_scale(const DenseTensor& scale, const DenseTensor& y,
                               const ObservationMask& mask, const DenseTensor& forecast,
                               const RobustConfig& robust, double sigma_floor = 1e-12);

/// Observed entries of Omega * (Y - O - Yhat), in flat order.
struct SliceResidual {
  Shape shape;
  std::vector<std::size_t> flat;
  std::vector<double> value;
};

SliceResidual make_residual(const DenseTensor& y, const ObservationMask& mask,
                            const DenseTensor& outliers, const DenseTensor& forecast);

/// U(n) + 2 mu R_(n) (⊙_{l != n} U(l)) diag(u_hat) for every non-temporal mode, all
/// gradients taken at the incoming factors. Touches only the residual's nonzeros.
std::vector<Matrix> grad_update_nontemporal(std::span<const Matrix> factors,
                                            const SliceResidual& residual, const Vector& u_hat,
                                            double mu);

/// u_hat + 2 mu [ (⊙ U)^T vec(R) + l1 u_{t-1} + l2 u_{t-m} - (l1 + l2) u_hat ].
Vector grad_update_temporal(const Vector& u_hat, const SliceResidual& residual,
                            std::span<const Matrix> factors, const Vector& previous,
                            const Vector& season_ago, double mu, double lambda1, double lambda2);

/// Per-step cost: |Omega (Y - O - [[U; u]])|^2 + l1 |u_{t-1} - u|^2 + l2 |u_{t-m} - u|^2 + l3 |O|_1.
double online_cost(std::span<const Matrix> factors, const Vector& temporal, const DenseTensor& y,
                   const ObservationMask& mask, const DenseTensor& outliers, const Vector& previous,
                   const Vector& season_ago, double lambda1, double lambda2, double lambda3);

struct StepOutput {
  DenseTensor imputed;
  DenseTensor outliers;
  DenseTensor forecast;
  std::size_t observed = 0;
  std::size_t flagged = 0;  // observed entries with a nonzero outlier estimate
};

/// Consumes one slice: forecast, pre-clean, error-scale update, gradient steps,
/// Holt-Winters update, reconstruction.
StepOutput step(StreamState& state, const DenseTensor& y, const ObservationMask& mask);

/// Forecast of the slice h steps after the last consumed one.
DenseTensor forecast_h(const StreamState& state, std::size_t h);

}  // namespace sofia
