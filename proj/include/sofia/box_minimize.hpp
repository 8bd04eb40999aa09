#pragma once

#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace sofia {

struct BoxMinimizeOptions {
  std::size_t max_iter = 200;
  double gradient_step = 1e-6;  // central-difference step
  double f_tol = 1e-13;         // relative objective change
  double pg_tol = 1e-10;        // projected-gradient infinity norm
};

struct BoxMinimizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
};

/// Projected BFGS on a box with finite-difference gradients.
///
/// Variables sitting on a bound whose gradient points outward are frozen for the
/// iteration; the remaining ones take a quasi-Newton step, projected back onto the
/// box, accepted by an Armijo backtracking search. The objective must be defined
/// slightly outside the box (by gradient_step) since differences are central.
BoxMinimizeResult minimize_box(const std::function<double(const Eigen::VectorXd&)>& objective,
                               Eigen::VectorXd x0, const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper,
                               const BoxMinimizeOptions& options = {});

}  // namespace sofia
