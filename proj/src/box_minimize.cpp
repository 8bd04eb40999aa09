#include "sofia/box_minimize.hpp"

#include <cmath>

#include "sofia/errors.hpp"

namespace sofia {

namespace {

using Eigen::VectorXd;

VectorXd project(VectorXd x, const VectorXd& lo, const VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

BoxMinimizeResult minimize_box(const std::function<double(const VectorXd&)>& objective, VectorXd x0,
                               const VectorXd& lower, const VectorXd& upper,
                               const BoxMinimizeOptions& options) {
  const auto n = x0.size();
  if (lower.size() != n || upper.size() != n) throw DimensionError("minimize_box: bound sizes");
  if ((lower.array() > upper.array()).any()) throw DimensionError("minimize_box: empty box");

  BoxMinimizeResult res;
  auto f = [&](const VectorXd& x) {
    ++res.evaluations;
    return objective(x);
  };
  auto gradient = [&](const VectorXd& x) {
    VectorXd g(n);
    VectorXd probe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double h = options.gradient_step;
      probe[i] = x[i] + h;
      const double up = f(probe);
      probe[i] = x[i] - h;
      const double down = f(probe);
      probe[i] = x[i];
      g[i] = (up - down) / (2.0 * h);
    }
    return g;
  };

  VectorXd x = project(std::move(x0), lower, upper);
  double fx = f(x);
  VectorXd g = gradient(x);
  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    // frozen variables: on a bound with the descent direction leaving the box
    Eigen::Array<bool, Eigen::Dynamic, 1> frozen(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      frozen[i] = (x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0);
    }
    VectorXd pg = g;
    for (Eigen::Index i = 0; i < n; ++i)
      if (frozen[i]) pg[i] = 0.0;
    if (pg.lpNorm<Eigen::Infinity>() <= options.pg_tol) break;

    VectorXd d = -(h_inv * pg);
    for (Eigen::Index i = 0; i < n; ++i)
      if (frozen[i]) d[i] = 0.0;
    if (g.dot(d) >= 0.0) {
      h_inv.setIdentity();
      d = -pg;
    }

    double step = 1.0;
    VectorXd x_new;
    double f_new = fx;
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      x_new = project(x + step * d, lower, upper);
      f_new = f(x_new);
      if (f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!h_inv.isIdentity()) {
        h_inv.setIdentity();
        continue;
      }
      break;
    }

    const VectorXd g_new = gradient(x_new);
    const VectorXd s = x_new - x;
    const VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-16 * std::max(1.0, s.squaredNorm())) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }
    const double change = fx - f_new;
    x = x_new;
    g = g_new;
    fx = f_new;
    if (change <= options.f_tol * (1.0 + std::abs(fx))) break;
  }

  res.x = x;
  res.value = fx;
  return res;
}

}  // namespace sofia
