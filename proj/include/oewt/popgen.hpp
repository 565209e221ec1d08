#pragma once

#include <cstdint>

#include "oewt/types.hpp"

namespace oewt {

/// Recipe for the synthetic finite population used in the simulation study.
struct PopulationSpec {
  std::int64_t n = 200000;
  double rho = 0.3;         // target correlation between y and x'beta, in (0,1)
  std::uint64_t seed = 1;

  void validate() const;
};

/// Noise scale sigma = sd(xb) * sqrt(1/rho^2 - 1), the value for which
/// y = xb + sigma*eps with unit-variance eps has corr(y, xb) = rho.
/// sd() uses the population (1/N) denominator.
double calibrate_sigma(const Eigen::VectorXd& xb, double rho);

/// Generate the four-covariate population
///   x1 = z1, x2 = z2 + 0.3 x1, x3 = z3 + 0.2(x1+x2), x4 = z4 + 0.1(x1+x2+x3)
///   z1 ~ Bernoulli(0.5), z2 ~ Uniform(0,2), z3 ~ Exp(1), z4 ~ ChiSq(4)
///   y = 2 + x1 + x2 + x3 + x4 + sigma*eps,  eps ~ N(0,1)
/// with sigma calibrated to the spec's rho. Deterministic given the seed;
/// the covariate draws do not depend on rho, so populations generated with
/// the same seed but different rho share X and differ only in y's noise
/// scale.
Population generate_population(const PopulationSpec& spec);

}  // namespace oewt
