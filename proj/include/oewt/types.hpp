#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oewt/errors.hpp"

namespace oewt {

/// Pseudo-likelihood families supported by the propensity fitter.
enum class Method { OE, CLW, KW, VD, WVL };

std::string method_name(Method m);
Method parse_method(const std::string& name);

/// Finite population of N units. The design matrix carries an explicit
/// leading 1-column; unit i corresponds to row i and id i+1.
struct Population {
  Eigen::MatrixXd X;  // N x p, first column identically 1
  Eigen::VectorXd y;  // length N
  std::optional<Eigen::VectorXd> pi_b_true;  // strictly in (0,1) when present

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  void validate() const;
};

/// Probability sample A with known design weights.
struct ReferenceSample {
  std::vector<std::int64_t> ids;                     // unique, length n_A
  Eigen::VectorXd dA;                                // design weights >= 1
  std::optional<std::vector<std::uint8_t>> delta;    // overlap flags, set when known
  Eigen::MatrixXd XA;                                // n_A x p, intercept included

  Eigen::Index n() const { return XA.rows(); }
  Eigen::Index p() const { return XA.cols(); }
  double weight_total() const { return dA.sum(); }
  void validate() const;
};

/// Non-probability ("big") sample B.
struct BigSample {
  std::vector<std::int64_t> ids;  // unique, length N_B
  Eigen::MatrixXd XB;             // N_B x p, intercept included
  Eigen::VectorXd yB;             // outcomes
  std::optional<Eigen::VectorXd> d_ref;  // reference-design weights for B's
                                         // units, when known (variance use)

  Eigen::Index n() const { return XB.rows(); }
  Eigen::Index p() const { return XB.cols(); }
  void validate() const;
};

/// Result of maximizing one of the pseudo-likelihoods.
struct PropensityFit {
  Method method = Method::OE;
  Eigen::VectorXd theta_hat;
  int iterations = 0;
  bool converged = false;
  double score_norm = std::numeric_limits<double>::infinity();  // scaled max-norm
  Eigen::VectorXd pi_hat_B;  // fitted propensities for units in B
  Eigen::VectorXd pi_hat_A;  // fitted propensities evaluated on A's rows
  int pi_above_one = 0;      // WVL only: B units whose p/(1-p) exceeds 1
  std::vector<double> loglik_trace;  // accepted objective values, ascending
};

enum class VarianceVariant { standard, alt };

/// Point estimate of the population mean with optional plug-in variance.
struct MeanEstimate {
  double mu_hat = 0.0;
  double n_b_hat = 0.0;
  std::optional<double> variance;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  VarianceVariant variance_variant = VarianceVariant::standard;
  bool variance_floored = false;  // alt variant went negative, clipped to 0

  void validate() const;
};

/// Overlap flags for A against B: flag i is 1 exactly when a_ids[i] occurs
/// in b_ids. Order-independent in b_ids and idempotent.
std::vector<std::uint8_t> tag_overlap(std::span<const std::int64_t> a_ids,
                                      std::span<const std::int64_t> b_ids);

/// Convenience: compute and store the overlap flags on A.
void tag_overlap(ReferenceSample& a, const BigSample& b);

}  // namespace oewt
