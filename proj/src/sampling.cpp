#include "oewt/sampling.hpp"

#include <cmath>
#include <numeric>

#include "oewt/propensity.hpp"
#include "oewt/rng.hpp"

namespace oewt {

namespace {
constexpr std::uint64_t kPoissonStream = 0x706f6973ULL;  // "pois"
constexpr std::uint64_t kPPSStream = 0x707073ULL;        // "pps"
}

void BigDesignSpec::validate(const Population& pop) const {
  if (slopes.size() != pop.p() - 1) {
    throw DimensionError("big design: slope vector length must be p-1");
  }
  if (target_n_b < 1 || target_n_b > pop.n() - 1) {
    throw DesignError("big design: target N_B must lie in [1, N-1]");
  }
}

void PPSDesignSpec::validate(const Population& pop) const {
  if (n_a < 1 || n_a > pop.n()) {
    throw ValidationError("pps design: n_A must lie in [1, N]");
  }
  if (size_col < 1 || size_col >= pop.p()) {
    throw ValidationError("pps design: size column out of range");
  }
  if (!(ratio > 1.0)) throw ValidationError("pps design: ratio must exceed 1");
}

double solve_ratio_constant(const Eigen::VectorXd& x, double ratio) {
  if (!(ratio > 1.0)) throw ValidationError("solve_ratio_constant: ratio must exceed 1");
  if (x.size() < 1) throw ValidationError("solve_ratio_constant: empty size variable");
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  const double c = (hi - ratio * lo) / (ratio - 1.0);
  if (!(c + lo > 0.0)) {
    throw DesignError("solve_ratio_constant: size ratio unattainable, c + min(x) <= 0");
  }
  return c;
}

double calibrate_intercept(const Population& pop, const Eigen::VectorXd& slopes,
                           std::int64_t target_n_b) {
  pop.validate();
  if (slopes.size() != pop.p() - 1) {
    throw DimensionError("calibrate_intercept: slope vector length must be p-1");
  }
  if (target_n_b <= 0 || target_n_b >= pop.n()) {
    throw DesignError("calibrate_intercept: target outside (0, N)");
  }
  const Eigen::VectorXd g = pop.X.rightCols(pop.p() - 1) * slopes;
  const double target = static_cast<double>(target_n_b);
  const auto expected_size = [&](double t) {
    return (g.array() + t).unaryExpr([](double e) { return expit(e); }).sum();
  };

  // The expected size is strictly increasing in theta0; expand a bracket
  // around 0, then bisect.
  double lo = 0.0, hi = 0.0;
  double width = 1.0;
  while (expected_size(lo) > target) lo -= width, width *= 2.0;
  width = 1.0;
  while (expected_size(hi) < target) hi += width, width *= 2.0;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double s = expected_size(mid);
    if (std::abs(s - target) <= 0.5) break;
    (s < target ? lo : hi) = mid;
  }
  return mid;
}

Eigen::VectorXd true_propensities(const Population& pop, const Eigen::VectorXd& slopes,
                                  double theta0) {
  if (slopes.size() != pop.p() - 1) {
    throw DimensionError("true_propensities: slope vector length must be p-1");
  }
  Eigen::VectorXd eta = (pop.X.rightCols(pop.p() - 1) * slopes).array() + theta0;
  return eta.unaryExpr([](double e) { return expit(e); });
}

BigSample draw_poisson(const Population& pop, const Eigen::VectorXd& pi,
                       std::uint64_t seed) {
  if (pi.size() != pop.n()) throw DimensionError("draw_poisson: pi length != N");
  if ((pi.array() <= 0.0).any() || (pi.array() > 1.0).any()) {
    throw ValidationError("draw_poisson: inclusion probabilities must lie in (0,1]");
  }
  const double below_one = std::nextafter(1.0, 0.0);
  rng::Rng rng(rng::mix(seed, kPoissonStream));
  std::vector<Eigen::Index> selected;
  for (Eigen::Index i = 0; i < pop.n(); ++i) {
    if (rng.uniform() < std::min(pi[i], below_one)) selected.push_back(i);
  }
  if (selected.empty()) {
    throw ValidationError("draw_poisson: realized sample is empty");
  }
  BigSample b;
  const auto n_b = static_cast<Eigen::Index>(selected.size());
  b.ids.resize(n_b);
  b.XB.resize(n_b, pop.p());
  b.yB.resize(n_b);
  for (Eigen::Index k = 0; k < n_b; ++k) {
    const auto i = selected[k];
    b.ids[k] = i + 1;
    b.XB.row(k) = pop.X.row(i);
    b.yB[k] = pop.y[i];
  }
  return b;
}

Eigen::VectorXd pps_inclusion_probabilities(const Eigen::VectorXd& z, std::int64_t n_a) {
  if ((z.array() <= 0.0).any()) {
    throw DesignError("pps: size variable must be strictly positive");
  }
  const double total = z.sum();
  Eigen::VectorXd pi = (static_cast<double>(n_a) / total) * z;
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    if (pi[i] > 1.0 + 1e-12) {
      throw DesignError("pps: certainty unit, n_A*z/sum(z) exceeds 1 at unit " +
                        std::to_string(i + 1));
    }
    pi[i] = std::min(pi[i], 1.0);
  }
  return pi;
}

ReferenceSample draw_pps_systematic_z(const Population& pop, const Eigen::VectorXd& z,
                                      std::int64_t n_a, std::uint64_t seed) {
  if (z.size() != pop.n()) throw DimensionError("pps: size variable length != N");
  if (n_a < 1 || n_a > pop.n()) throw ValidationError("pps: n_A must lie in [1, N]");
  const Eigen::VectorXd pi = pps_inclusion_probabilities(z, n_a);

  rng::Rng rng(rng::mix(seed, kPPSStream));
  std::vector<Eigen::Index> order(pop.n());
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rng.shuffle(order.begin(), order.end());
  const double u = rng.uniform();

  // Cumulate n_a*z/sum(z) in permuted order; the points u, u+1, ...,
  // u+n_a-1 each land in exactly one interval because every interval is
  // at most 1 long and the cumulative total is forced to exactly n_a.
  std::vector<double> prefix(order.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    acc += z[order[k]];
    prefix[k] = acc;
  }
  const double scale = static_cast<double>(n_a) / acc;

  std::vector<Eigen::Index> selected;
  selected.reserve(static_cast<std::size_t>(n_a));
  std::int64_t next = 0;
  for (std::size_t k = 0; k < order.size() && next < n_a; ++k) {
    // A second point can only land in the same interval through rounding of
    // a certainty unit; let the neighbour absorb it instead of duplicating.
    while (next < n_a && u + static_cast<double>(next) < prefix[k] * scale &&
           (selected.empty() || selected.back() != order[k])) {
      selected.push_back(order[k]);
      ++next;
    }
  }
  if (static_cast<std::int64_t>(selected.size()) != n_a) {
    throw NumericalError("pps: systematic pass selected " +
                         std::to_string(selected.size()) + " units, expected " +
                         std::to_string(n_a));
  }
  std::sort(selected.begin(), selected.end());

  ReferenceSample a;
  a.ids.resize(n_a);
  a.dA.resize(n_a);
  a.XA.resize(n_a, pop.p());
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(n_a); ++k) {
    const auto i = selected[static_cast<std::size_t>(k)];
    a.ids[k] = i + 1;
    a.dA[k] = 1.0 / pi[i];
    a.XA.row(k) = pop.X.row(i);
  }
  return a;
}

ReferenceSample draw_pps_systematic(const Population& pop, const PPSDesignSpec& spec,
                                    std::uint64_t seed) {
  spec.validate(pop);
  const Eigen::VectorXd x = pop.X.col(spec.size_col);
  const double c = solve_ratio_constant(x, spec.ratio);
  return draw_pps_systematic_z(pop, (x.array() + c).matrix(), spec.n_a, seed);
}

}  // namespace oewt
