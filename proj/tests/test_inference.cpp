#include <cmath>
#include <utility>

#include "doctest.h"
#include "oewt/inference.hpp"
#include "oewt/propensity.hpp"
#include "oewt/rng.hpp"
#include "testdata.hpp"

using namespace oewt;

namespace {

// Handmade fit with chosen propensities, for driving plug_in_variance
// through specific numeric regimes.
PropensityFit stub_fit(const Eigen::VectorXd& pi_b, const Eigen::VectorXd& pi_a) {
  PropensityFit f;
  f.converged = true;
  f.score_norm = 0.0;
  f.pi_hat_B = pi_b;
  f.pi_hat_A = pi_a;
  return f;
}

BigSample ones_big(const Eigen::VectorXd& y) {
  BigSample b;
  const Eigen::Index n = y.size();
  b.XB = Eigen::MatrixXd::Ones(n, 1);
  b.yB = y;
  b.ids.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) b.ids[i] = i + 1;
  return b;
}

ReferenceSample ones_ref(Eigen::Index n, double d) {
  ReferenceSample a;
  a.XA = Eigen::MatrixXd::Ones(n, 1);
  a.dA = Eigen::VectorXd::Constant(n, d);
  a.ids.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) a.ids[i] = i + 1;
  return a;
}

}  // namespace

TEST_CASE("ipw mean closed forms") {
  Eigen::VectorXd y(2);
  y << 2.0, 4.0;
  const BigSample b = ones_big(y);

  Eigen::VectorXd pi(2);
  pi << 0.5, 0.25;
  const MeanEstimate est = ipw_mean(b, pi);
  CHECK(est.n_b_hat == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(est.mu_hat == doctest::Approx(10.0 / 3.0).epsilon(1e-15));

  // Census: weights one, plain mean.
  const MeanEstimate census = ipw_mean(b, Eigen::VectorXd::Ones(2));
  CHECK(census.mu_hat == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(census.n_b_hat == doctest::Approx(2.0).epsilon(1e-15));

  // Constant propensities cancel in the ratio.
  const MeanEstimate flat = ipw_mean(b, Eigen::VectorXd::Constant(2, 0.3));
  CHECK(flat.mu_hat == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(flat.n_b_hat == doctest::Approx(2.0 / 0.3).epsilon(1e-14));

  // Values above one are legal inputs (the WVL ratio scale).
  const MeanEstimate above = ipw_mean(b, Eigen::VectorXd::Constant(2, 2.0));
  CHECK(above.mu_hat == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(above.n_b_hat == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("ipw mean rejects unusable propensities") {
  Eigen::VectorXd y(2);
  y << 2.0, 4.0;
  const BigSample b = ones_big(y);

  CHECK_THROWS_AS((void)ipw_mean(b, Eigen::VectorXd::Ones(3)), DimensionError);
  Eigen::VectorXd pi(2);
  pi << 0.5, 0.0;
  CHECK_THROWS_AS((void)ipw_mean(b, pi), ValidationError);
  pi << 0.5, -0.1;
  CHECK_THROWS_AS((void)ipw_mean(b, pi), ValidationError);
  pi << 0.5, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)ipw_mean(b, pi), ValidationError);
}

TEST_CASE("naive mean is the unweighted average") {
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, 3.0, 6.0;
  const MeanEstimate est = naive_mean(ones_big(y));
  CHECK(est.mu_hat == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(est.n_b_hat == 4.0);
  CHECK_FALSE(est.variance.has_value());
  CHECK_THROWS_AS((void)naive_mean(BigSample{}), ValidationError);
}

TEST_CASE("pps design variance closed forms") {
  // Constant d*u has no between-draw variability (up to rounding in the mean).
  ReferenceSample a = ones_ref(3, 2.0);
  const Eigen::MatrixXd u = Eigen::MatrixXd::Constant(3, 1, 0.7);
  CHECK(design_variance_pps(a, u).cwiseAbs().maxCoeff() < 1e-28);

  // d*u = (1, 3): mean 2, squared deviations 1+1, times n/(n-1) = 2.
  ReferenceSample a2 = ones_ref(2, 1.0);
  a2.dA << 1.0, 3.0;
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(2, 1);
  const Eigen::MatrixXd v = design_variance_pps(a2, ones);
  CHECK(v(0, 0) == doctest::Approx(4.0).epsilon(1e-14));

  CHECK_THROWS_AS((void)design_variance_pps(ones_ref(1, 2.0),
                                            Eigen::MatrixXd::Ones(1, 1)),
                  ValidationError);
  CHECK_THROWS_AS((void)design_variance_pps(a2, Eigen::MatrixXd::Ones(3, 1)),
                  DimensionError);
}

TEST_CASE("pps design variance is symmetric positive semidefinite") {
  rng::Rng rng(17);
  ReferenceSample a = ones_ref(20, 1.0);
  for (Eigen::Index i = 0; i < 20; ++i) a.dA[i] = rng.uniform(1.0, 9.0);
  Eigen::MatrixXd u(20, 3);
  for (Eigen::Index i = 0; i < 20; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) u(i, j) = rng.normal();
  }
  const Eigen::MatrixXd v = design_variance_pps(a, u);
  CHECK((v - v.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("poisson design variance closed forms") {
  // Self-weighting design (d = 1) has zero estimated variance.
  ReferenceSample a = ones_ref(4, 1.0);
  const Eigen::MatrixXd ones4 = Eigen::MatrixXd::Ones(4, 1);
  CHECK(design_variance_poisson(a, ones4).cwiseAbs().maxCoeff() == 0.0);

  // d = (2, 3), u = 1: sum d(d-1) = 2 + 6 = 8.
  ReferenceSample a2 = ones_ref(2, 1.0);
  a2.dA << 2.0, 3.0;
  const Eigen::MatrixXd v =
      design_variance_poisson(a2, Eigen::MatrixXd::Ones(2, 1));
  CHECK(v(0, 0) == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("plug-in variance matches a term-by-term recomputation") {
  auto s = testdata::make_pair(81, 60, 90);
  rng::Rng rng(82);
  Eigen::VectorXd d_ref(s.b.n());
  for (Eigen::Index i = 0; i < s.b.n(); ++i) d_ref[i] = rng.uniform(1.5, 6.0);
  s.b.d_ref = d_ref;

  const PropensityFit f = fit(Method::OE, s.a, s.b);
  REQUIRE(f.converged);
  const MeanEstimate point = ipw_mean(s.b, f.pi_hat_B);
  const double mu = point.mu_hat;
  const double n_pop = 500.0;
  const Eigen::Index p = s.b.p();

  // Everything below reimplements the estimator with explicit loops.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < s.b.n(); ++i) {
    const double pi = f.pi_hat_B[i];
    m += (1.0 - pi) * s.b.XB.row(i).transpose() * s.b.XB.row(i);
    c += (1.0 / pi - 1.0) * (s.b.yB[i] - mu) * s.b.XB.row(i).transpose();
  }
  const Eigen::VectorXd b_hat = m.ldlt().solve(c);

  double residual = 0.0;
  for (Eigen::Index i = 0; i < s.b.n(); ++i) {
    const double pi = f.pi_hat_B[i];
    const double dev = (s.b.yB[i] - mu) / pi - s.b.XB.row(i).dot(b_hat);
    residual += (1.0 - pi) * dev * dev;
  }
  residual /= n_pop * n_pop;

  Eigen::MatrixXd t(s.a.n(), p);
  for (Eigen::Index i = 0; i < s.a.n(); ++i) {
    const double pi = f.pi_hat_A[i];
    t.row(i) = s.a.dA[i] * pi * (1.0 - pi) * s.a.XA.row(i);
  }
  const Eigen::RowVectorXd t_bar = t.colwise().mean();
  Eigen::MatrixXd v_d = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < s.a.n(); ++i) {
    v_d += (t.row(i) - t_bar).transpose() * (t.row(i) - t_bar);
  }
  v_d *= static_cast<double>(s.a.n()) / static_cast<double>(s.a.n() - 1);
  const double design = b_hat.dot(v_d * b_hat) / (n_pop * n_pop);

  double weight_std = 0.0;
  for (Eigen::Index i = 0; i < s.b.n(); ++i) {
    const double pi = f.pi_hat_B[i];
    const double proj = s.b.XB.row(i).dot(b_hat);
    weight_std += pi * pi * (1.0 - pi) * (d_ref[i] - 1.0) * proj * proj;
  }
  weight_std /= n_pop * n_pop;

  double a_side = 0.0, b_side = 0.0;
  for (Eigen::Index i = 0; i < s.a.n(); ++i) {
    const double pi = f.pi_hat_A[i];
    const double proj = s.a.XA.row(i).dot(b_hat);
    a_side += s.a.dA[i] * s.a.dA[i] * pi * pi * pi * (1.0 - pi) * proj * proj;
  }
  for (Eigen::Index i = 0; i < s.b.n(); ++i) {
    const double pi = f.pi_hat_B[i];
    const double proj = s.b.XB.row(i).dot(b_hat);
    b_side += pi * pi * (1.0 - pi) * proj * proj;
  }
  const double weight_alt = (a_side - b_side) / (n_pop * n_pop);

  VarianceOptions opts;
  const VarianceBreakdown std_out =
      plug_in_variance(f, s.a, s.b, mu, n_pop, opts);
  CHECK((std_out.b_hat - b_hat).lpNorm<Eigen::Infinity>() <
        1e-10 * std::max(1.0, b_hat.lpNorm<Eigen::Infinity>()));
  CHECK(std_out.residual_term == doctest::Approx(residual).epsilon(1e-10));
  CHECK(std_out.design_term == doctest::Approx(design).epsilon(1e-10));
  CHECK(std_out.weight_term == doctest::Approx(weight_std).epsilon(1e-10));
  CHECK(std_out.total == doctest::Approx(residual + design + weight_std)
                             .epsilon(1e-10));
  CHECK_FALSE(std_out.floored);
  CHECK(std_out.total >= 0.0);

  opts.variant = VarianceVariant::alt;
  const VarianceBreakdown alt_out =
      plug_in_variance(f, s.a, s.b, mu, n_pop, opts);
  CHECK(alt_out.weight_term == doctest::Approx(weight_alt).epsilon(1e-10));
  CHECK(alt_out.residual_term == doctest::Approx(residual).epsilon(1e-10));

  // Poisson design option swaps only the middle term.
  opts.variant = VarianceVariant::standard;
  opts.design = DesignVariance::poisson;
  Eigen::MatrixXd v_p = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < s.a.n(); ++i) {
    const double pi = f.pi_hat_A[i];
    const Eigen::RowVectorXd u_i = pi * (1.0 - pi) * s.a.XA.row(i);
    v_p += s.a.dA[i] * (s.a.dA[i] - 1.0) * u_i.transpose() * u_i;
  }
  const VarianceBreakdown poisson_out =
      plug_in_variance(f, s.a, s.b, mu, n_pop, opts);
  CHECK(poisson_out.design_term ==
        doctest::Approx(b_hat.dot(v_p * b_hat) / (n_pop * n_pop)).epsilon(1e-10));
  CHECK(poisson_out.residual_term == doctest::Approx(residual).epsilon(1e-10));
  CHECK(poisson_out.weight_term == doctest::Approx(weight_std).epsilon(1e-10));
}

TEST_CASE("plug-in variance guards its inputs") {
  auto s = testdata::make_pair(83);
  PropensityFit f = fit(Method::OE, s.a, s.b);
  const double mu = ipw_mean(s.b, f.pi_hat_B).mu_hat;
  VarianceOptions opts;

  // Standard variant without d_ref on B is not computable.
  CHECK_THROWS_AS((void)plug_in_variance(f, s.a, s.b, mu, 500.0, opts),
                  ConfigError);
  opts.variant = VarianceVariant::alt;
  CHECK_NOTHROW((void)plug_in_variance(f, s.a, s.b, mu, 500.0, opts));

  PropensityFit bad = f;
  bad.converged = false;
  CHECK_THROWS_AS((void)plug_in_variance(bad, s.a, s.b, mu, 500.0, opts),
                  ValidationError);

  PropensityFit wrong = f;
  wrong.pi_hat_B = Eigen::VectorXd::Constant(3, 0.5);
  CHECK_THROWS_AS((void)plug_in_variance(wrong, s.a, s.b, mu, 500.0, opts),
                  DimensionError);

  CHECK_THROWS_AS((void)plug_in_variance(f, s.a, s.b, mu, 0.0, opts),
                  ValidationError);
  opts.level = 1.0;
  CHECK_THROWS_AS((void)plug_in_variance(f, s.a, s.b, mu, 500.0, opts),
                  ValidationError);
}

TEST_CASE("census propensities short-circuit to zero variance") {
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  const BigSample b = ones_big(y);
  const ReferenceSample a = ones_ref(3, 1.0);
  const PropensityFit f = stub_fit(Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(3));
  const VarianceBreakdown out =
      plug_in_variance(f, a, b, 2.0, 3.0, VarianceOptions{});
  CHECK(out.total == 0.0);
  CHECK(out.residual_term == 0.0);
  CHECK(out.design_term == 0.0);
  CHECK(out.weight_term == 0.0);
  CHECK_FALSE(out.floored);
  CHECK(out.b_hat.isZero());
}

TEST_CASE("singular weighted cross-product is a numerical error") {
  // Two identical columns make sum_B (1-pi) x x' rank deficient.
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, 3.0, 4.0;
  BigSample b = ones_big(y);
  b.XB = Eigen::MatrixXd::Ones(4, 2);
  ReferenceSample a = ones_ref(4, 2.0);
  a.XA = Eigen::MatrixXd::Ones(4, 2);
  const PropensityFit f =
      stub_fit(Eigen::VectorXd::Constant(4, 0.5), Eigen::VectorXd::Constant(4, 0.5));
  VarianceOptions opts;
  opts.variant = VarianceVariant::alt;
  CHECK_THROWS_AS((void)plug_in_variance(f, a, b, 2.5, 10.0, opts),
                  NumericalError);
}

TEST_CASE("negative alt-form totals are floored and flagged") {
  // Engineered so the residual vanishes: with constant pi on B and
  // y - mu = pi * k, the B-side regression fits exactly, leaving the
  // negative alt weight term as the whole total.
  const Eigen::Index n_b = 4;
  BigSample b = ones_big(Eigen::VectorXd::Constant(n_b, 2.0));
  ReferenceSample a = ones_ref(2, 1.0);
  const PropensityFit f = stub_fit(Eigen::VectorXd::Constant(n_b, 2.0 / 3.0),
                                   Eigen::VectorXd::Constant(2, 0.01));
  VarianceOptions opts;
  opts.variant = VarianceVariant::alt;
  const VarianceBreakdown out = plug_in_variance(f, a, b, 0.0, 100.0, opts);
  CHECK(out.residual_term == doctest::Approx(0.0));
  CHECK(out.design_term == doctest::Approx(0.0));
  CHECK(out.weight_term < 0.0);
  CHECK(out.total == 0.0);
  CHECK(out.floored);
}

TEST_CASE("estimates are location equivariant with unchanged variance") {
  auto s = testdata::make_pair(89, 50, 70);
  rng::Rng rng(90);
  Eigen::VectorXd d_ref(s.b.n());
  for (Eigen::Index i = 0; i < s.b.n(); ++i) d_ref[i] = rng.uniform(1.5, 6.0);
  s.b.d_ref = d_ref;
  const PropensityFit f = fit(Method::OE, s.a, s.b);

  const MeanEstimate base = estimate_mean(f, s.a, s.b, 400.0, VarianceOptions{});
  auto shifted = s;
  shifted.b.yB.array() += 17.0;
  const MeanEstimate moved = estimate_mean(f, shifted.a, shifted.b, 400.0,
                                           VarianceOptions{});
  CHECK(moved.mu_hat == doctest::Approx(base.mu_hat + 17.0).epsilon(1e-12));
  CHECK(*moved.variance == doctest::Approx(*base.variance).epsilon(1e-10));
  CHECK(*moved.ci_lower ==
        doctest::Approx(*base.ci_lower + 17.0).epsilon(1e-10));
}

TEST_CASE("confidence interval closed forms") {
  const auto [lo, hi] = confidence_interval(10.0, 4.0, 0.95);
  const double half = 1.959963984540054 * 2.0;
  CHECK(lo == doctest::Approx(10.0 - half).epsilon(1e-12));
  CHECK(hi == doctest::Approx(10.0 + half).epsilon(1e-12));

  const auto [dlo, dhi] = confidence_interval(3.0, 0.0, 0.95);
  CHECK(dlo == 3.0);
  CHECK(dhi == 3.0);

  const auto [nlo, nhi] = confidence_interval(0.0, 1.0, 0.99);
  CHECK(nhi == doctest::Approx(2.5758293035489004).epsilon(1e-12));
  CHECK(nlo == -nhi);
  const auto [wlo, whi] = confidence_interval(0.0, 1.0, 0.95);
  CHECK(whi < nhi);  // higher level, wider interval
  CHECK(wlo == -whi);

  CHECK_THROWS_AS((void)confidence_interval(0.0, -1.0, 0.95), ValidationError);
  CHECK_THROWS_AS((void)confidence_interval(0.0, 1.0, 0.0), ValidationError);
  CHECK_THROWS_AS((void)confidence_interval(0.0, 1.0, 1.0), ValidationError);
}

TEST_CASE("estimate_mean wires the point estimate, variance and interval") {
  auto s = testdata::make_pair(91, 50, 80);
  const PropensityFit f = fit(Method::OE, s.a, s.b);

  const MeanEstimate bare = estimate_mean(f, s.a, s.b, 300.0, std::nullopt);
  CHECK_FALSE(bare.variance.has_value());
  CHECK_FALSE(bare.ci_lower.has_value());
  CHECK(bare.mu_hat ==
        doctest::Approx(ipw_mean(s.b, f.pi_hat_B).mu_hat).epsilon(1e-15));
  CHECK_NOTHROW(bare.validate());

  VarianceOptions opts;
  opts.variant = VarianceVariant::alt;
  opts.level = 0.9;
  const MeanEstimate full = estimate_mean(f, s.a, s.b, 300.0, opts);
  REQUIRE(full.variance.has_value());
  REQUIRE(full.ci_lower.has_value());
  REQUIRE(full.ci_upper.has_value());
  CHECK(full.variance_variant == VarianceVariant::alt);
  CHECK(*full.ci_lower <= full.mu_hat);
  CHECK(full.mu_hat <= *full.ci_upper);
  const double half = *full.ci_upper - full.mu_hat;
  CHECK(half == doctest::Approx(rng::normal_quantile(0.95) *
                                std::sqrt(*full.variance))
                    .epsilon(1e-12));
  CHECK_NOTHROW(full.validate());
}
