#pragma once

#include <cmath>
#include <optional>

#include "oewt/types.hpp"

namespace oewt {

/// Logistic function exp(eta)/(1+exp(eta)), branch form so large |eta|
/// never overflows.
inline double expit(double eta) {
  if (eta >= 0.0) {
    return 1.0 / (1.0 + std::exp(-eta));
  }
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

/// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  return (eta > 0.0 ? eta : 0.0) + std::log1p(std::exp(-std::abs(eta)));
}

struct FitOptions {
  double tolerance = 1e-8;   // on max-norm of score / (N_B + sum(dA))
  int max_iterations = 50;
  int step_halving_max = 20;
  std::optional<Eigen::VectorXd> initial_theta;  // default: zeros

  void validate() const;
};

/// Pseudo-log-likelihood of theta under the given method's objective:
///   CLW: sum_B log(pi/(1-pi)) + sum_A d log(1-pi)
///   KW:  sum_A d delta log pi + sum_A d (1-delta) log(1-pi)
///   VD:  sum_B log pi + sum_A w* log(1-pi),  w* = d (Nhat-N_B)/Nhat
///   WVL: sum_B log p + sum_A d log(1-p)
///   OE:  sum_B log pi + sum_{A: delta=0} d log(1-pi)
/// with pi (or p for WVL) the logistic function of x'theta.
double pseudo_loglik(Method method, const Eigen::VectorXd& theta,
                     const ReferenceSample& a, const BigSample& b);

/// Exact gradient of pseudo_loglik.
Eigen::VectorXd score(Method method, const Eigen::VectorXd& theta,
                      const ReferenceSample& a, const BigSample& b);

/// Negative Hessian of pseudo_loglik (symmetric p x p).
Eigen::MatrixXd hessian_neg(Method method, const Eigen::VectorXd& theta,
                            const ReferenceSample& a, const BigSample& b);

/// Maximize the pseudo-log-likelihood by Newton-Raphson with step halving.
/// Hitting the iteration limit yields converged=false, not an exception.
/// Fitted propensities are expit(x'theta) for OE/CLW/KW/VD and p/(1-p)
/// for WVL (which may exceed 1; such units are counted, not clamped).
PropensityFit fit(Method method, const ReferenceSample& a, const BigSample& b,
                  const FitOptions& options = {});

/// Absolute residual of the method's intercept stationarity identity, e.g.
/// |sum_B (1-pi) - sum_{A:delta=0} d pi| for OE. Near zero at convergence
/// whenever the model has an intercept column.
double balance_residual(Method method, const PropensityFit& fit,
                        const ReferenceSample& a, const BigSample& b);

}  // namespace oewt
