#pragma once

#include <cstdint>

#include "oewt/types.hpp"

namespace oewt {

/// True propensity model for drawing the big sample: logit(pi) =
/// theta0 + slopes' x (slopes over the non-intercept covariates).
struct BigDesignSpec {
  Eigen::VectorXd slopes;      // length p-1
  std::int64_t target_n_b = 0;

  void validate(const Population& pop) const;
};

/// Randomized systematic PPS design for the reference sample, size variable
/// z = c + X(:, size_col) with c chosen so max(z)/min(z) equals `ratio`.
struct PPSDesignSpec {
  std::int64_t n_a = 5000;
  Eigen::Index size_col = 3;  // column of the design matrix (0 = intercept)
  double ratio = 10.0;

  void validate(const Population& pop) const;
};

/// c with (c + max x)/(c + min x) = ratio; requires c + min x > 0.
double solve_ratio_constant(const Eigen::VectorXd& x, double ratio);

/// Intercept theta0 solving sum_i expit(theta0 + slopes' x_i) = target_n_b,
/// by bracketing + bisection to |sum - target| <= 0.5.
double calibrate_intercept(const Population& pop, const Eigen::VectorXd& slopes,
                           std::int64_t target_n_b);

/// expit(theta0 + slopes' x_i) for every population unit.
Eigen::VectorXd true_propensities(const Population& pop, const Eigen::VectorXd& slopes,
                                  double theta0);

/// Poisson sampling: independent Bernoulli(pi_i) inclusion per unit.
/// Accepts pi in (0,1]; values of exactly 1 are clamped just below 1.
BigSample draw_poisson(const Population& pop, const Eigen::VectorXd& pi,
                       std::uint64_t seed);

/// Randomized systematic PPS: units are placed in uniformly random order,
/// the inclusion measures n_a*z_i/sum(z) are cumulated, and a single
/// uniform start u selects the units whose cumulative interval contains
/// u, u+1, ..., u+n_a-1. Always returns exactly n_a units with design
/// weights d_i = sum(z)/(n_a*z_i). Overlap flags are left unset.
ReferenceSample draw_pps_systematic(const Population& pop, const PPSDesignSpec& spec,
                                    std::uint64_t seed);

/// Same design with the size variable supplied directly.
ReferenceSample draw_pps_systematic_z(const Population& pop, const Eigen::VectorXd& z,
                                      std::int64_t n_a, std::uint64_t seed);

/// Reference-design inclusion probabilities n_a*z_i/sum(z) for every unit.
Eigen::VectorXd pps_inclusion_probabilities(const Eigen::VectorXd& z, std::int64_t n_a);

}  // namespace oewt
