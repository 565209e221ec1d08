#include "oewt/popgen.hpp"

#include <cmath>

#include "oewt/rng.hpp"

namespace oewt {

namespace {
constexpr std::uint64_t kPopulationStream = 0x706f7067656eULL;  // "popgen"
}

void PopulationSpec::validate() const {
  if (n < 2) throw ValidationError("population spec: N >= 2 required");
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ValidationError("population spec: rho must lie in (0,1)");
  }
}

double calibrate_sigma(const Eigen::VectorXd& xb, double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw ValidationError("calibrate_sigma: rho must lie in (0,1)");
  }
  const double mean = xb.mean();
  const double var = (xb.array() - mean).square().mean();
  if (!(var > 0.0)) {
    throw ValidationError("calibrate_sigma: degenerate population, xb has zero variance");
  }
  return std::sqrt(var) * std::sqrt(1.0 / (rho * rho) - 1.0);
}

Population generate_population(const PopulationSpec& spec) {
  spec.validate();
  rng::Rng rng(rng::mix(spec.seed, kPopulationStream));

  const auto n = static_cast<Eigen::Index>(spec.n);
  Population pop;
  pop.X.resize(n, 5);
  pop.X.col(0).setOnes();
  Eigen::VectorXd eps(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z1 = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double z2 = rng.uniform(0.0, 2.0);
    const double z3 = rng.exponential();
    const double z4 = rng.chisq4();
    eps[i] = rng.normal();
    const double x1 = z1;
    const double x2 = z2 + 0.3 * x1;
    const double x3 = z3 + 0.2 * (x1 + x2);
    const double x4 = z4 + 0.1 * (x1 + x2 + x3);
    pop.X(i, 1) = x1;
    pop.X(i, 2) = x2;
    pop.X(i, 3) = x3;
    pop.X(i, 4) = x4;
  }
  const Eigen::VectorXd xb = pop.X.rightCols(4).rowwise().sum();
  const double sigma = calibrate_sigma(xb, spec.rho);
  pop.y = (2.0 + xb.array() + sigma * eps.array()).matrix();
  pop.validate();
  return pop;
}

}  // namespace oewt
