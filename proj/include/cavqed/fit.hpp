#pragma once

// Nonlinear least squares on top of Eigen's Levenberg-Marquardt (MINPACK port).

#include <functional>

#include <Eigen/Dense>

namespace cavqed {

struct FitOptions {
  int max_iterations = 200;
  double ftol = 1e-10;  // relative reduction of the cost
  double gtol = 1e-12;  // scaled gradient norm
  double xtol = 1e-14;
};

struct FitResult {
  Eigen::VectorXd parameters;
  Eigen::VectorXd standard_error;
  Eigen::MatrixXd covariance;  // s^2 (J^T J)^-1 with s^2 = cost / (m - n)
  double cost = 0.0;           // sum of squared residuals
  int iterations = 0;
  int evaluations = 0;
};

/// residuals(p, r) fills r (size m) for parameters p.
using ResidualFunction = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

/// Minimizes |r(p)|^2 with central-difference Jacobians. Throws FitNotConvergedError
/// when the iteration budget runs out or the solver stalls.
FitResult least_squares(const ResidualFunction& residuals, int m, const Eigen::VectorXd& start,
                        const FitOptions& options = {});

}  // namespace cavqed
