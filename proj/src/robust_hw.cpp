#include "sofia/robust_hw.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sofia/box_minimize.hpp"
#include "sofia/errors.hpp"

namespace sofia {

namespace {

void require_unit_interval(const Vector& v, const char* name) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0 && v[i] <= 1.0))
      throw ConfigError(std::string("smoothing parameter ") + name + " outside [0,1]");
  }
}

// Scalar additive recursion. Ring holds s_{t-m}..s_{t-1}, `head` at the oldest.
struct ScalarHw {
  double level;
  double trend;
  std::vector<double> ring;
  std::size_t head = 0;

  double forecast() const { return level + trend + ring[head]; }

  void update(double y, double alpha, double beta, double gamma) {
    const double s_old = ring[head];
    const double level_new = alpha * (y - s_old) + (1.0 - alpha) * (level + trend);
    const double trend_new = beta * (level_new - level) + (1.0 - beta) * trend;
    ring[head] = gamma * (y - level - trend) + (1.0 - gamma) * s_old;
    level = level_new;
    trend = trend_new;
    head = (head + 1) % ring.size();
  }
};

// One-step errors e_t = y_t - yhat_t written to `errors`; returns the final state.
ScalarHw run_errors(std::span<const double> y, double alpha, double beta, double gamma,
                    double level, double trend, std::span<const double> seasonal,
                    std::span<double> errors) {
  ScalarHw hw{level, trend, std::vector<double>(seasonal.begin(), seasonal.end()), 0};
  for (std::size_t t = 0; t < y.size(); ++t) {
    errors[t] = y[t] - hw.forecast();
    hw.update(y[t], alpha, beta, gamma);
  }
  return hw;
}

struct Profile {
  double sse;
  Eigen::VectorXd initial;  // [level, trend, s_{1-m} .. s_0]
};

// Initial components enter the errors affinely: e = e_y + J x0. Minimise
// |e_y + J x0|^2 + eps |x0 - x_ref|^2 with eps tiny relative to J^T J.
Profile profile_sse(std::span<const double> y, std::size_t m, double alpha, double beta,
                    double gamma, const Eigen::VectorXd& x_ref) {
  const auto T = static_cast<Eigen::Index>(y.size());
  const auto p = static_cast<Eigen::Index>(m + 2);
  Eigen::VectorXd e_y(T);
  const std::vector<double> zeros_season(m, 0.0);
  run_errors(y, alpha, beta, gamma, 0.0, 0.0, zeros_season, {e_y.data(), y.size()});

  const std::vector<double> zero_series(y.size(), 0.0);
  Eigen::MatrixXd J(T, p);
  std::vector<double> season(m, 0.0);
  for (Eigen::Index k = 0; k < p; ++k) {
    std::fill(season.begin(), season.end(), 0.0);
    const double l0 = k == 0 ? 1.0 : 0.0;
    const double b0 = k == 1 ? 1.0 : 0.0;
    if (k >= 2) season[static_cast<std::size_t>(k - 2)] = 1.0;
    run_errors(zero_series, alpha, beta, gamma, l0, b0, season, {J.col(k).data(), y.size()});
  }

  Eigen::MatrixXd normal = J.transpose() * J;
  const double eps = std::max(1e-10 * normal.trace() / static_cast<double>(p), 1e-300);
  normal.diagonal().array() += eps;
  const Eigen::VectorXd rhs = -(J.transpose() * e_y) + eps * x_ref;
  Eigen::VectorXd x0 = normal.ldlt().solve(rhs);
  return {(e_y + J * x0).squaredNorm(), std::move(x0)};
}

Eigen::VectorXd pack(const HwInitial& init) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(init.seasonal.size() + 2));
  x[0] = init.level;
  x[1] = init.trend;
  for (std::size_t j = 0; j < init.seasonal.size(); ++j) x[static_cast<Eigen::Index>(j + 2)] = init.seasonal[j];
  return x;
}

HwInitial unpack(const Eigen::VectorXd& x) {
  HwInitial init;
  init.level = x[0];
  init.trend = x[1];
  init.seasonal.assign(x.data() + 2, x.data() + x.size());
  return init;
}

void require_history(std::size_t length, std::size_t m) {
  if (m < 2) throw ConfigError("seasonal period must be at least 2");
  if (length < 3 * m)
    throw InsufficientHistoryError("Holt-Winters fitting needs at least three seasons of history");
}

}  // namespace

void HwParams::validate() const {
  if (alpha.size() != beta.size() || alpha.size() != gamma.size())
    throw DimensionError("smoothing parameter vectors differ in length");
  require_unit_interval(alpha, "alpha");
  require_unit_interval(beta, "beta");
  require_unit_interval(gamma, "gamma");
}

Vector HwState::season(std::size_t j) const {
  return seasonal.row(static_cast<Eigen::Index>((head + j) % period())).transpose();
}

void HwState::validate() const {
  if (period() < 2) throw ConfigError("seasonal period must be at least 2");
  const auto r = level.size();
  if (trend.size() != r || seasonal.cols() != r || params.alpha.size() != r)
    throw DimensionError("Holt-Winters state components differ in rank");
  if (head >= period()) throw ConfigError("seasonal ring head out of range");
  params.validate();
}

void RobustConfig::validate() const {
  if (!(huber_k > 0.0)) throw ConfigError("huber_k must be positive");
  if (!(biweight_c > 0.0)) throw ConfigError("biweight_c must be positive");
  if (!(phi >= 0.0 && phi <= 1.0)) throw ConfigError("phi must lie in [0,1]");
}

double huber_psi(double x, double k) {
  if (std::abs(x) < k) return x;
  return x > 0.0 ? k : -k;
}

double biweight_rho(double x, double k, double c) {
  if (std::abs(x) > k) return c;
  const double u = x / k;
  const double w = 1.0 - u * u;
  return c * (1.0 - w * w * w);
}

HwState hw_update(const HwState& state, const Vector& y) {
  if (y.size() != state.level.size()) throw DimensionError("hw_update: observation length != rank");
  HwState next = state;
  const auto oldest = static_cast<Eigen::Index>(state.head);
  const Vector s_old = state.seasonal.row(oldest).transpose();
  const auto& p = state.params;
  const Vector base = state.level + state.trend;
  next.level = p.alpha.cwiseProduct(y - s_old) + (Vector::Ones(y.size()) - p.alpha).cwiseProduct(base);
  next.trend = p.beta.cwiseProduct(next.level - state.level) +
               (Vector::Ones(y.size()) - p.beta).cwiseProduct(state.trend);
  next.seasonal.row(oldest) =
      (p.gamma.cwiseProduct(y - base) + (Vector::Ones(y.size()) - p.gamma).cwiseProduct(s_old))
          .transpose();
  next.head = (state.head + 1) % state.period();
  return next;
}

Vector hw_forecast(const HwState& state, std::size_t h) {
  if (h == 0) throw ConfigError("forecast horizon must be at least 1");
  // s_{t+h-m(floor((h-1)/m)+1)} sits (h-1) mod m places after the oldest stored vector
  return state.level + static_cast<double>(h) * state.trend + state.season((h - 1) % state.period());
}

HwInitial hw_heuristic_initial(std::span<const double> series, std::size_t m) {
  if (m < 2) throw ConfigError("seasonal period must be at least 2");
  if (series.size() < 2 * m) throw InsufficientHistoryError("heuristic start needs two seasons");
  const auto md = static_cast<double>(m);
  const double mean1 = std::accumulate(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(m), 0.0) / md;
  const double mean2 = std::accumulate(series.begin() + static_cast<std::ptrdiff_t>(m),
                                       series.begin() + static_cast<std::ptrdiff_t>(2 * m), 0.0) /
                       md;
  HwInitial init;
  init.level = mean1;
  init.trend = (mean2 - mean1) / md;
  init.seasonal.resize(m);
  for (std::size_t j = 0; j < m; ++j) init.seasonal[j] = series[j] - mean1;
  return init;
}

double hw_one_step_sse(std::span<const double> series, double alpha, double beta, double gamma,
                       const HwInitial& initial) {
  if (initial.seasonal.size() < 2) throw ConfigError("seasonal period must be at least 2");
  std::vector<double> errors(series.size());
  run_errors(series, alpha, beta, gamma, initial.level, initial.trend, initial.seasonal, errors);
  double sse = 0.0;
  for (double e : errors) sse += e * e;
  return sse;
}

HwColumnFit hw_fit_column(std::span<const double> series, std::size_t m, const HwFitOptions& options) {
  require_history(series.size(), m);
  for (double v : series) {
    if (!std::isfinite(v)) throw InputError("Holt-Winters series contains non-finite values");
  }
  const Eigen::VectorXd x_ref = pack(hw_heuristic_initial(series, m));
  auto objective = [&](const Eigen::VectorXd& p) {
    return profile_sse(series, m, p[0], p[1], p[2], x_ref).sse;
  };

  // coarse grid, then refine the best few points
  const std::size_t levels = std::max<std::size_t>(options.grid_levels, 2);
  struct Candidate {
    double value;
    Eigen::Vector3d point;
  };
  std::vector<Candidate> grid;
  grid.reserve(levels * levels * levels);
  for (std::size_t a = 0; a < levels; ++a)
    for (std::size_t b = 0; b < levels; ++b)
      for (std::size_t g = 0; g < levels; ++g) {
        const double step = 1.0 / static_cast<double>(levels - 1);
        Eigen::Vector3d p(a * step, b * step, g * step);
        grid.push_back({objective(p), p});
      }
  std::stable_sort(grid.begin(), grid.end(),
                   [](const Candidate& l, const Candidate& r) { return l.value < r.value; });

  const Eigen::VectorXd lower = Eigen::Vector3d::Zero();
  const Eigen::VectorXd upper = Eigen::Vector3d::Ones();
  Candidate best = grid.front();
  const std::size_t starts = std::min(std::max<std::size_t>(options.local_starts, 1), grid.size());
  for (std::size_t s = 0; s < starts; ++s) {
    const auto local = minimize_box(objective, grid[s].point, lower, upper);
    if (local.value < best.value) best = {local.value, local.x};
  }

  const Profile prof = profile_sse(series, m, best.point[0], best.point[1], best.point[2], x_ref);
  HwColumnFit fit;
  fit.alpha = best.point[0];
  fit.beta = best.point[1];
  fit.gamma = best.point[2];
  fit.initial = unpack(prof.initial);
  fit.sse = hw_one_step_sse(series, fit.alpha, fit.beta, fit.gamma, fit.initial);
  return fit;
}

HwFitResult hw_fit(const Matrix& series, std::size_t m, const HwFitOptions& options) {
  const auto length = static_cast<std::size_t>(series.rows());
  const auto rank = series.cols();
  if (rank <= 0) throw DimensionError("hw_fit: series has no columns");
  require_history(length, m);
  if (!series.allFinite()) throw InputError("Holt-Winters series contains non-finite values");

  HwFitResult result;
  HwState& state = result.state;
  state.level.resize(rank);
  state.trend.resize(rank);
  state.seasonal.resize(static_cast<Eigen::Index>(m), rank);
  state.params.alpha.resize(rank);
  state.params.beta.resize(rank);
  state.params.gamma.resize(rank);
  state.head = length % m;

  std::vector<double> column(length);
  std::vector<double> errors(length);
  for (Eigen::Index r = 0; r < rank; ++r) {
    for (std::size_t t = 0; t < length; ++t) column[t] = series(static_cast<Eigen::Index>(t), r);
    HwColumnFit fit = hw_fit_column(column, m, options);
    const ScalarHw end = run_errors(column, fit.alpha, fit.beta, fit.gamma, fit.initial.level,
                                    fit.initial.trend, fit.initial.seasonal, errors);
    state.level[r] = end.level;
    state.trend[r] = end.trend;
    for (std::size_t j = 0; j < m; ++j) state.seasonal(static_cast<Eigen::Index>(j), r) = end.ring[j];
    state.params.alpha[r] = fit.alpha;
    state.params.beta[r] = fit.beta;
    state.params.gamma[r] = fit.gamma;
    result.columns.push_back(std::move(fit));
  }
  return result;
}

}  // namespace sofia
