#pragma once

#include <optional>
#include <utility>

#include <Eigen/Dense>

#include "oewt/errors.hpp"
#include "oewt/types.hpp"

namespace oewt {

enum class DesignVariance { pps_wr, poisson };

struct VarianceOptions {
  VarianceVariant variant = VarianceVariant::standard;
  DesignVariance design = DesignVariance::pps_wr;
  double level = 0.95;

  void validate() const;
};

// The three additive pieces of the plug-in variance of the Hajek mean,
// reported separately so callers can inspect what dominates.
struct VarianceBreakdown {
  double residual_term = 0.0;  // B-side residual sum
  double design_term = 0.0;    // b' V b with V the design variance over A
  double weight_term = 0.0;    // third term (standard or alt form)
  double total = 0.0;
  bool floored = false;  // true when a negative alt-form total was raised to 0
  Eigen::VectorXd b_hat;
};

// Hajek (ratio) inverse-probability-weighted mean of B's outcomes:
// N_hat = sum 1/pi_i, mu_hat = sum(y_i/pi_i) / N_hat. Propensities must be
// strictly positive; values above 1 are used as given.
MeanEstimate ipw_mean(const BigSample& b, const Eigen::VectorXd& pi_hat);

// Unweighted sample mean of B's outcomes.
MeanEstimate naive_mean(const BigSample& b);

// Design-based variance estimate of the weighted total sum_A d_i u_i from a
// single PPS draw, using the with-replacement approximation
//   (n/(n-1)) * sum_i (d_i u_i - t_bar)(d_i u_i - t_bar)'
// with t_bar the mean of the d_i u_i. Rows of u are the per-unit vectors.
Eigen::MatrixXd design_variance_pps(const ReferenceSample& a, const Eigen::MatrixXd& u);

// Poisson-design analogue: sum_A d_i (d_i - 1) u_i u_i'.
Eigen::MatrixXd design_variance_poisson(const ReferenceSample& a, const Eigen::MatrixXd& u);

// Plug-in variance of the Hajek mean under an estimated-propensity fit.
// residual_term: N^-2 sum_B (1-pi_i) [(y_i-mu)/pi_i - b'x_i]^2
// design_term:   b' V b,  V = N^-2 Var_d(sum_A d_i pi_i (1-pi_i) x_i)
// weight_term:   standard: N^-2 sum_B pi_i^2 (1-pi_i)(d^A_i - 1)(b'x_i)^2,
//                which needs the reference-design weight d^A on B's rows;
//                alt: the A-side/B-side difference that avoids d^A on B and
//                can come out negative (total is floored at 0, flagged).
// b' = [sum_B (1/pi_i - 1)(y_i - mu) x_i'] [sum_B (1-pi_i) x_i x_i']^-1.
VarianceBreakdown plug_in_variance(const PropensityFit& fit, const ReferenceSample& a,
                                   const BigSample& b, double mu_hat, double n_population,
                                   const VarianceOptions& options);

// Normal-quantile interval mu_hat +/- z_{(1+level)/2} sqrt(variance).
std::pair<double, double> confidence_interval(double mu_hat, double variance, double level);

// ipw_mean plus, when options are given, the plug-in variance and interval.
MeanEstimate estimate_mean(const PropensityFit& fit, const ReferenceSample& a,
                           const BigSample& b, double n_population,
                           const std::optional<VarianceOptions>& options);

}  // namespace oewt
