#include "oewt/propensity.hpp"

#include <cmath>
#include <limits>

namespace oewt {

void FitOptions::validate() const {
  if (!(tolerance > 0.0)) throw ValidationError("fit options: tolerance must be positive");
  if (max_iterations < 1) throw ValidationError("fit options: max_iterations >= 1 required");
  if (step_halving_max < 0) throw ValidationError("fit options: step_halving_max >= 0 required");
}

namespace {

// Every pseudo-log-likelihood here has the shape
//   l(theta) = sum_k alpha_k log pi_k + beta_k log(1-pi_k)
// over at most two row blocks (B's rows and A's rows), with pi_k the
// logistic function of x_k'theta. With gamma = alpha + beta,
//   l = alpha'eta - gamma'softplus(eta)
//   S = X'(alpha - gamma.*pi)
//   -d2l = X' diag(gamma.*pi.*(1-pi)) X
// Method differences reduce to the coefficient vectors: rows excluded from
// a sum (such as A's overlap rows under OE) simply get zero coefficients.
struct Block {
  const Eigen::MatrixXd* x = nullptr;
  Eigen::VectorXd alpha;
  Eigen::VectorXd gamma;  // alpha + beta
  bool curved = true;     // false when gamma is identically zero
};

struct Objective {
  Block big;   // x == nullptr when the method ignores B (KW)
  Block ref;
  double scale = 1.0;  // N_B + sum(dA), the score-norm normalizer
  Eigen::Index p = 0;
};

const std::vector<std::uint8_t>& require_delta(const ReferenceSample& a, Method m) {
  if (!a.delta) {
    throw ValidationError("method " + method_name(m) +
                          " requires overlap flags on the reference sample");
  }
  return *a.delta;
}

Objective assemble(Method method, const ReferenceSample& a, const BigSample& b) {
  if (a.p() != b.p()) {
    throw DimensionError("reference and big samples disagree on design columns (p=" +
                         std::to_string(a.p()) + " vs p=" + std::to_string(b.p()) + ")");
  }
  if (a.n() < 1 || b.n() < 1) throw ValidationError("fit: empty sample");

  Objective obj;
  obj.p = b.p();
  obj.scale = static_cast<double>(b.n()) + a.dA.sum();

  switch (method) {
    case Method::OE: {
      const auto& delta = require_delta(a, method);
      obj.big = {&b.XB, Eigen::VectorXd::Ones(b.n()), Eigen::VectorXd::Ones(b.n()), true};
      Eigen::VectorXd gamma(a.n());
      for (Eigen::Index i = 0; i < a.n(); ++i) gamma[i] = delta[i] ? 0.0 : a.dA[i];
      if (gamma.sum() <= 0.0) {
        throw DegenerateError("oe: reference sample has no units outside B; "
                              "pseudo-likelihood is unbounded");
      }
      obj.ref = {&a.XA, Eigen::VectorXd::Zero(a.n()), std::move(gamma), true};
      break;
    }
    case Method::CLW: {
      // log(pi/(1-pi)) is linear in theta, so B's block carries no curvature.
      obj.big = {&b.XB, Eigen::VectorXd::Ones(b.n()), Eigen::VectorXd::Zero(b.n()), false};
      obj.ref = {&a.XA, Eigen::VectorXd::Zero(a.n()), a.dA, true};
      break;
    }
    case Method::KW: {
      const auto& delta = require_delta(a, method);
      Eigen::VectorXd alpha(a.n());
      Eigen::Index n_in = 0;
      for (Eigen::Index i = 0; i < a.n(); ++i) {
        alpha[i] = delta[i] ? a.dA[i] : 0.0;
        n_in += delta[i] ? 1 : 0;
      }
      if (n_in == 0 || n_in == a.n()) {
        throw DegenerateError("kw: reference sample needs units both inside and outside B; "
                              "pseudo-likelihood is unbounded");
      }
      obj.ref = {&a.XA, std::move(alpha), a.dA, true};
      break;
    }
    case Method::VD: {
      const double n_hat = a.dA.sum();
      const double n_b = static_cast<double>(b.n());
      if (n_hat <= n_b) {
        throw DegenerateError("vd: estimated population size sum(dA) does not exceed N_B; "
                              "scaled weights are not positive");
      }
      const double shrink = (n_hat - n_b) / n_hat;
      obj.big = {&b.XB, Eigen::VectorXd::Ones(b.n()), Eigen::VectorXd::Ones(b.n()), true};
      obj.ref = {&a.XA, Eigen::VectorXd::Zero(a.n()), (shrink * a.dA.array()).matrix(), true};
      break;
    }
    case Method::WVL: {
      obj.big = {&b.XB, Eigen::VectorXd::Ones(b.n()), Eigen::VectorXd::Ones(b.n()), true};
      obj.ref = {&a.XA, Eigen::VectorXd::Zero(a.n()), a.dA, true};
      break;
    }
  }
  return obj;
}

void check_theta(const Objective& obj, const Eigen::VectorXd& theta) {
  if (theta.size() != obj.p) {
    throw DimensionError("theta length " + std::to_string(theta.size()) +
                         " != design columns " + std::to_string(obj.p));
  }
}

double block_loglik(const Block& blk, const Eigen::VectorXd& theta) {
  if (!blk.x) return 0.0;
  const Eigen::ArrayXd eta = (*blk.x * theta).array();
  const Eigen::ArrayXd sp = eta.max(0.0) + (-eta.abs()).exp().log1p();
  // Accumulate with Neumaier compensation.  Near the optimum a Newton step can
  // improve the objective by less than the plain-sum rounding noise (the value
  // can reach ~1e5 while per-step gains shrink below 1e-9), and the monotone
  // line search would otherwise stall on rounding rather than on the surface.
  double sum = 0.0;
  double comp = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double term = blk.alpha[i] * eta[i] - blk.gamma[i] * sp[i];
    const double next = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - next) + term
                                            : (term - next) + sum;
    sum = next;
  }
  return sum + comp;
}

void block_score(const Block& blk, const Eigen::VectorXd& theta, Eigen::VectorXd& s) {
  if (!blk.x) return;
  const Eigen::ArrayXd eta = (*blk.x * theta).array();
  const Eigen::ArrayXd pi = 0.5 * (1.0 + (0.5 * eta).tanh());
  s.noalias() += blk.x->transpose() * (blk.alpha.array() - blk.gamma.array() * pi).matrix();
}

void block_hessian(const Block& blk, const Eigen::VectorXd& theta, Eigen::MatrixXd& h) {
  if (!blk.x || !blk.curved) return;
  const Eigen::ArrayXd eta = (*blk.x * theta).array();
  const Eigen::ArrayXd pi = 0.5 * (1.0 + (0.5 * eta).tanh());
  const Eigen::VectorXd w = (blk.gamma.array() * pi * (1.0 - pi)).matrix();
  h.noalias() += blk.x->transpose() * w.asDiagonal() * *blk.x;
}

double obj_loglik(const Objective& obj, const Eigen::VectorXd& theta) {
  return block_loglik(obj.big, theta) + block_loglik(obj.ref, theta);
}

Eigen::VectorXd obj_score(const Objective& obj, const Eigen::VectorXd& theta) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(obj.p);
  block_score(obj.big, theta, s);
  block_score(obj.ref, theta, s);
  return s;
}

Eigen::MatrixXd obj_hessian(const Objective& obj, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(obj.p, obj.p);
  block_hessian(obj.big, theta, h);
  block_hessian(obj.ref, theta, h);
  // The matrix products above are symmetric only up to rounding; make it exact.
  h = 0.5 * (h + h.transpose()).eval();
  return h;
}

// The factorization can report success on an exactly rank-deficient matrix
// and then solve to garbage, so trust it only when the solution actually
// satisfies the system.
bool solved_accurately(const Eigen::MatrixXd& m, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& rhs) {
  return (m * x - rhs).norm() <= 1e-8 * (rhs.norm() + m.norm() * x.norm());
}

// Newton direction H^-1 s, with a doubling ridge when the factorization
// fails or the matrix turns out to be numerically singular.
Eigen::VectorXd solve_direction(Eigen::MatrixXd h, const Eigen::VectorXd& s) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() == Eigen::Success) {
    const Eigen::VectorXd direction = llt.solve(s);
    if (solved_accurately(h, direction, s)) return direction;
  }
  const double cap = std::max(1.0, h.diagonal().maxCoeff()) * 1e12;
  for (double lambda = 1e-8; lambda <= cap; lambda *= 2.0) {
    Eigen::MatrixXd ridged = h;
    ridged.diagonal().array() += lambda;
    llt.compute(ridged);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd direction = llt.solve(s);
    if (solved_accurately(ridged, direction, s)) return direction;
  }
  throw NumericalError("newton step: hessian not positive definite after ridge fallback");
}

Eigen::VectorXd clamped_expit(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  const Eigen::ArrayXd eta = (x * theta).array();
  return (0.5 * (1.0 + (0.5 * eta).tanh())).max(lo).min(hi).matrix();
}

Eigen::VectorXd odds(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  // p/(1-p) under the logistic link is exp(eta); capped to avoid inf.
  return ((x * theta).array().min(700.0)).exp().matrix();
}

}  // namespace

double pseudo_loglik(Method method, const Eigen::VectorXd& theta,
                     const ReferenceSample& a, const BigSample& b) {
  const auto obj = assemble(method, a, b);
  check_theta(obj, theta);
  return obj_loglik(obj, theta);
}

Eigen::VectorXd score(Method method, const Eigen::VectorXd& theta,
                      const ReferenceSample& a, const BigSample& b) {
  const auto obj = assemble(method, a, b);
  check_theta(obj, theta);
  return obj_score(obj, theta);
}

Eigen::MatrixXd hessian_neg(Method method, const Eigen::VectorXd& theta,
                            const ReferenceSample& a, const BigSample& b) {
  const auto obj = assemble(method, a, b);
  check_theta(obj, theta);
  return obj_hessian(obj, theta);
}

PropensityFit fit(Method method, const ReferenceSample& a, const BigSample& b,
                  const FitOptions& options) {
  options.validate();
  const auto obj = assemble(method, a, b);

  PropensityFit out;
  out.method = method;
  if (options.initial_theta) {
    check_theta(obj, *options.initial_theta);
    out.theta_hat = *options.initial_theta;
  } else {
    out.theta_hat = Eigen::VectorXd::Zero(obj.p);
  }

  double loglik = obj_loglik(obj, out.theta_hat);
  if (!std::isfinite(loglik)) {
    throw NumericalError("fit: objective not finite at the starting point");
  }
  out.loglik_trace.push_back(loglik);

  Eigen::VectorXd s = obj_score(obj, out.theta_hat);
  out.score_norm = s.lpNorm<Eigen::Infinity>() / obj.scale;

  while (out.score_norm > options.tolerance && out.iterations < options.max_iterations) {
    const Eigen::VectorXd direction = solve_direction(obj_hessian(obj, out.theta_hat), s);
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    double cand_loglik = 0.0;
    for (int h = 0; h <= options.step_halving_max; ++h, step *= 0.5) {
      candidate = out.theta_hat + step * direction;
      cand_loglik = obj_loglik(obj, candidate);
      if (std::isfinite(cand_loglik) && cand_loglik >= loglik) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;  // no ascent step left; report the best point found
    out.theta_hat = std::move(candidate);
    loglik = cand_loglik;
    out.loglik_trace.push_back(loglik);
    ++out.iterations;
    s = obj_score(obj, out.theta_hat);
    out.score_norm = s.lpNorm<Eigen::Infinity>() / obj.scale;
  }
  out.converged = out.score_norm <= options.tolerance;

  if (method == Method::WVL) {
    out.pi_hat_B = odds(b.XB, out.theta_hat);
    out.pi_hat_A = odds(a.XA, out.theta_hat);
    out.pi_above_one = static_cast<int>((out.pi_hat_B.array() > 1.0).count());
  } else {
    out.pi_hat_B = clamped_expit(b.XB, out.theta_hat);
    out.pi_hat_A = clamped_expit(a.XA, out.theta_hat);
  }
  return out;
}

double balance_residual(Method method, const PropensityFit& fit,
                        const ReferenceSample& a, const BigSample& b) {
  if (fit.pi_hat_B.size() != b.n() || fit.pi_hat_A.size() != a.n()) {
    throw DimensionError("balance: fit propensities do not match the samples");
  }
  const auto& pi_b = fit.pi_hat_B;
  const auto& pi_a = fit.pi_hat_A;
  switch (method) {
    case Method::OE: {
      const auto& delta = require_delta(a, method);
      double lhs = (1.0 - pi_b.array()).sum();
      double rhs = 0.0;
      for (Eigen::Index i = 0; i < a.n(); ++i) {
        if (!delta[i]) rhs += a.dA[i] * pi_a[i];
      }
      return std::abs(lhs - rhs);
    }
    case Method::CLW:
      return std::abs(static_cast<double>(b.n()) - a.dA.dot(pi_a));
    case Method::KW: {
      const auto& delta = require_delta(a, method);
      double lhs = 0.0, rhs = 0.0;
      for (Eigen::Index i = 0; i < a.n(); ++i) {
        if (delta[i]) {
          lhs += a.dA[i] * (1.0 - pi_a[i]);
        } else {
          rhs += a.dA[i] * pi_a[i];
        }
      }
      return std::abs(lhs - rhs);
    }
    case Method::VD: {
      const double n_hat = a.dA.sum();
      const double shrink = (n_hat - static_cast<double>(b.n())) / n_hat;
      const double lhs = (1.0 - pi_b.array()).sum();
      const double rhs = shrink * a.dA.dot(pi_a);
      return std::abs(lhs - rhs);
    }
    case Method::WVL: {
      // Recover p = pi/(1+pi) from the stored odds.
      const Eigen::ArrayXd p_b = pi_b.array() / (1.0 + pi_b.array());
      const Eigen::ArrayXd p_a = pi_a.array() / (1.0 + pi_a.array());
      const double lhs = (1.0 - p_b).sum();
      const double rhs = (a.dA.array() * p_a).sum();
      return std::abs(lhs - rhs);
    }
  }
  throw ValidationError("balance: unknown method");
}

}  // namespace oewt
