#include "cavqed/fit.hpp"

#include <cmath>
#include <string>

#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include "cavqed/errors.hpp"

namespace cavqed {

namespace {

struct Functor : Eigen::DenseFunctor<double> {
  Functor(const ResidualFunction& f, int n, int m) : Eigen::DenseFunctor<double>(n, m), f(f) {}

  int operator()(const InputType& x, ValueType& r) const {
    Eigen::VectorXd out(values());
    f(x, out);
    r = out;
    return 0;
  }

  const ResidualFunction& f;
};

}  // namespace

FitResult least_squares(const ResidualFunction& residuals, int m, const Eigen::VectorXd& start,
                        const FitOptions& options) {
  const int n = static_cast<int>(start.size());
  if (m < n) throw std::invalid_argument("least_squares: fewer residuals than parameters");

  Functor functor(residuals, n, m);
  Eigen::NumericalDiff<Functor, Eigen::Central> diff(functor);
  Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Functor, Eigen::Central>> lm(diff);
  lm.setFtol(options.ftol);
  lm.setGtol(options.gtol);
  lm.setXtol(options.xtol);
  // MINPACK counts function evaluations, one Jacobian costing 2n of them here.
  lm.setMaxfev(options.max_iterations * (2 * n + 1));

  Eigen::VectorXd x = start;
  const auto status = lm.minimize(x);

  Eigen::VectorXd r(m);
  residuals(x, r);
  const double cost = r.squaredNorm();
  using namespace Eigen::LevenbergMarquardtSpace;
  if (status == TooManyFunctionEvaluation || status == ImproperInputParameters || !std::isfinite(cost)) {
    throw FitNotConvergedError("least_squares: no convergence after " + std::to_string(lm.iterations()) +
                                   " iterations, final cost " + std::to_string(cost),
                               cost);
  }

  FitResult out;
  out.parameters = x;
  out.cost = cost;
  out.iterations = static_cast<int>(lm.iterations());
  out.evaluations = static_cast<int>(lm.nfev());

  Eigen::MatrixXd jac(m, n);
  diff.df(x, jac);
  const double s2 = m > n ? cost / (m - n) : 0.0;
  out.covariance = s2 * (jac.transpose() * jac).completeOrthogonalDecomposition().pseudoInverse();
  out.standard_error = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return out;
}

}  // namespace cavqed
