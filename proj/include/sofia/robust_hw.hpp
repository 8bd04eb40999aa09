#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sofia/tensor.hpp"

namespace sofia {

/// Per-component smoothing parameters, each entry in [0, 1].
struct HwParams {
  Vector alpha;
  Vector beta;
  Vector gamma;

  void validate() const;
};

/// Additive Holt-Winters state for R parallel series.
///
/// `seasonal` is an m x R ring buffer. Row `head` holds the oldest stored seasonal
/// vector s_{t-m+1}, row (head + j) % m holds s_{t-m+1+j}.
struct HwState {
  Vector level;
  Vector trend;
  Matrix seasonal;
  std::size_t head = 0;
  HwParams params;

  std::size_t period() const noexcept { return static_cast<std::size_t>(seasonal.rows()); }
  std::size_t rank() const noexcept { return static_cast<std::size_t>(level.size()); }

  /// j = 0 is the oldest stored seasonal vector, j = m - 1 the newest.
  Vector season(std::size_t j) const;

  void validate() const;
};

struct RobustConfig {
  double huber_k = 2.0;
  double biweight_c = 2.52;
  double phi = 0.01;

  void validate() const;
};

/// Huber psi: identity on (-k, k), sign(x) * k outside.
double huber_psi(double x, double k);

/// Biweight rho: c * (1 - (1 - (x/k)^2)^3) for |x| <= k, c otherwise.
double biweight_rho(double x, double k, double c);

/// One step of the level / trend / seasonal recursions, componentwise.
HwState hw_update(const HwState& state, const Vector& y);

/// l + h*b + s_{t+h-m(floor((h-1)/m)+1)}.
Vector hw_forecast(const HwState& state, std::size_t h);

/// Initial components of one scalar series: seasonal[j] = s_{j+1-m}, oldest first.
struct HwInitial {
  double level = 0.0;
  double trend = 0.0;
  std::vector<double> seasonal;
};

/// Standard additive start: level = mean of season 1, trend = (mean 2 - mean 1) / m,
/// seasonal = season 1 minus its mean.
HwInitial hw_heuristic_initial(std::span<const double> series, std::size_t m);

/// Sum of squared one-step-ahead errors of a scalar series.
double hw_one_step_sse(std::span<const double> series, double alpha, double beta, double gamma,
                       const HwInitial& initial);

struct HwColumnFit {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
  HwInitial initial;
  double sse = 0.0;
};

struct HwFitOptions {
  std::size_t grid_levels = 4;   // per smoothing parameter, for the start search
  std::size_t local_starts = 4;  // best grid points refined by the box-constrained solver
};

/// Fits one scalar series. Smoothing parameters are searched on [0,1]^3; for each
/// candidate the initial components are the exact least-squares optimum (the errors are
/// affine in them), lightly anchored to hw_heuristic_initial to pin the level/seasonal shift.
HwColumnFit hw_fit_column(std::span<const double> series, std::size_t m,
                          const HwFitOptions& options = {});

struct HwFitResult {
  HwState state;  // advanced to the last row of the series
  std::vector<HwColumnFit> columns;
};

/// Fits every column of a t x R series matrix independently. Needs t >= 3m.
HwFitResult hw_fit(const Matrix& series, std::size_t m, const HwFitOptions& options = {});

}  // namespace sofia
