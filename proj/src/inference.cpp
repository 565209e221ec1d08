#include "oewt/inference.hpp"

#include <cmath>

#include "oewt/rng.hpp"

namespace oewt {

void VarianceOptions::validate() const {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError("variance options: level must lie in (0,1)");
  }
}

MeanEstimate ipw_mean(const BigSample& b, const Eigen::VectorXd& pi_hat) {
  if (pi_hat.size() != b.n()) {
    throw DimensionError("ipw: propensity vector length " + std::to_string(pi_hat.size()) +
                         " != big sample size " + std::to_string(b.n()));
  }
  if (b.n() < 1) throw ValidationError("ipw: empty big sample");
  if (!(pi_hat.array() > 0.0).all() || !pi_hat.allFinite()) {
    throw ValidationError("ipw: propensities must be finite and strictly positive");
  }
  const Eigen::ArrayXd w = pi_hat.array().inverse();
  MeanEstimate out;
  out.n_b_hat = w.sum();
  out.mu_hat = (w * b.yB.array()).sum() / out.n_b_hat;
  return out;
}

MeanEstimate naive_mean(const BigSample& b) {
  if (b.n() < 1) throw ValidationError("naive mean: empty big sample");
  MeanEstimate out;
  out.n_b_hat = static_cast<double>(b.n());
  out.mu_hat = b.yB.mean();
  return out;
}

Eigen::MatrixXd design_variance_pps(const ReferenceSample& a, const Eigen::MatrixXd& u) {
  const Eigen::Index n = a.n();
  if (u.rows() != n) {
    throw DimensionError("design variance: contribution rows != reference sample size");
  }
  if (n < 2) throw ValidationError("design variance: need at least two reference units");
  const Eigen::MatrixXd t = u.array().colwise() * a.dA.array();
  const Eigen::RowVectorXd t_bar = t.colwise().mean();
  const Eigen::MatrixXd centered = t.rowwise() - t_bar;
  const double scale = static_cast<double>(n) / static_cast<double>(n - 1);
  return scale * (centered.transpose() * centered);
}

Eigen::MatrixXd design_variance_poisson(const ReferenceSample& a, const Eigen::MatrixXd& u) {
  const Eigen::Index n = a.n();
  if (u.rows() != n) {
    throw DimensionError("design variance: contribution rows != reference sample size");
  }
  if (n < 2) throw ValidationError("design variance: need at least two reference units");
  const Eigen::VectorXd w = (a.dA.array() * (a.dA.array() - 1.0)).matrix();
  return u.transpose() * w.asDiagonal() * u;
}

VarianceBreakdown plug_in_variance(const PropensityFit& fit, const ReferenceSample& a,
                                   const BigSample& b, double mu_hat, double n_population,
                                   const VarianceOptions& options) {
  options.validate();
  if (!fit.converged) {
    throw ValidationError("plug-in variance: propensity fit did not converge");
  }
  if (fit.pi_hat_B.size() != b.n() || fit.pi_hat_A.size() != a.n()) {
    throw DimensionError("plug-in variance: fit propensities do not match the samples");
  }
  if (a.p() != b.p()) {
    throw DimensionError("plug-in variance: samples disagree on design columns");
  }
  if (!(n_population >= 1.0)) {
    throw ValidationError("plug-in variance: population size must be at least 1");
  }

  const Eigen::ArrayXd pi_b = fit.pi_hat_B.array();
  const Eigen::ArrayXd pi_a = fit.pi_hat_A.array();
  const Eigen::ArrayXd slack = 1.0 - pi_b;
  const double inv_n2 = 1.0 / (n_population * n_population);

  VarianceBreakdown out;
  out.b_hat = Eigen::VectorXd::Zero(b.p());

  // A census (all propensities exactly 1) zeroes every term; the normal-
  // equation matrix is singular there, so short-circuit before factorizing.
  if ((slack == 0.0).all()) return out;

  const Eigen::MatrixXd m = b.XB.transpose() * slack.matrix().asDiagonal() * b.XB;
  const Eigen::VectorXd c =
      b.XB.transpose() * ((1.0 / pi_b - 1.0) * (b.yB.array() - mu_hat)).matrix();
  // A rank-deficient cross-product leaves the regression coefficient
  // unidentified even when the system happens to be consistent, and the
  // unpivoted Cholesky can report success on exactly singular input.  The
  // pivoted LDLT diagonal is rank-revealing, so gate on its spread.
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  const Eigen::VectorXd piv = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success ||
      piv.minCoeff() <= 1e-12 * piv.maxCoeff()) {
    throw NumericalError("plug-in variance: singular weighted cross-product over B");
  }
  out.b_hat = ldlt.solve(c);

  const Eigen::ArrayXd proj_b = (b.XB * out.b_hat).array();
  out.residual_term =
      inv_n2 * (slack * ((b.yB.array() - mu_hat) / pi_b - proj_b).square()).sum();

  const Eigen::MatrixXd u = (a.XA.array().colwise() * (pi_a * (1.0 - pi_a))).matrix();
  const Eigen::MatrixXd v_design = options.design == DesignVariance::pps_wr
                                       ? design_variance_pps(a, u)
                                       : design_variance_poisson(a, u);
  out.design_term = inv_n2 * out.b_hat.dot(v_design * out.b_hat);

  if (options.variant == VarianceVariant::standard) {
    if (!b.d_ref) {
      throw ConfigError("plug-in variance: standard variant needs the reference-design "
                        "weight d_ref on the big sample");
    }
    out.weight_term =
        inv_n2 *
        (pi_b.square() * slack * (b.d_ref->array() - 1.0) * proj_b.square()).sum();
  } else {
    const Eigen::ArrayXd proj_a = (a.XA * out.b_hat).array();
    const double a_side =
        (a.dA.array().square() * pi_a.cube() * (1.0 - pi_a) * proj_a.square()).sum();
    const double b_side = (pi_b.square() * slack * proj_b.square()).sum();
    out.weight_term = inv_n2 * (a_side - b_side);
  }

  out.total = out.residual_term + out.design_term + out.weight_term;
  if (out.total < 0.0) {
    out.total = 0.0;
    out.floored = true;
  }
  return out;
}

std::pair<double, double> confidence_interval(double mu_hat, double variance, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ValidationError("confidence interval: level must lie in (0,1)");
  }
  if (!(variance >= 0.0)) {
    throw ValidationError("confidence interval: variance must be nonnegative");
  }
  const double half = rng::normal_quantile(0.5 + 0.5 * level) * std::sqrt(variance);
  return {mu_hat - half, mu_hat + half};
}

MeanEstimate estimate_mean(const PropensityFit& fit, const ReferenceSample& a,
                           const BigSample& b, double n_population,
                           const std::optional<VarianceOptions>& options) {
  MeanEstimate est = ipw_mean(b, fit.pi_hat_B);
  if (options) {
    const VarianceBreakdown vb = plug_in_variance(fit, a, b, est.mu_hat, n_population, *options);
    est.variance = vb.total;
    est.variance_variant = options->variant;
    est.variance_floored = vb.floored;
    const auto [lo, hi] = confidence_interval(est.mu_hat, vb.total, options->level);
    est.ci_lower = lo;
    est.ci_upper = hi;
  }
  return est;
}

}  // namespace oewt
