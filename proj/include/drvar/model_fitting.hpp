#pragma once

// Nuisance models: logistic propensity score by IRLS and per-arm linear
// outcome regressions, plus their per-unit score contributions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "drvar/error.hpp"
#include "drvar/types.hpp"

namespace drvar {

struct IrlsOptions {
  double score_tol = 1e-8;      // sup-norm of sum_i (Z_i - e_i) V_i
  int max_iter = 100;
  double max_abs_coef = 30.0;   // larger |beta_j| is treated as separation
  double max_condition = 1e12;  // of the equilibrated information matrix
  VectorXd start;               // empty: start at zero
};

struct PSFit {
  VectorXd beta;
  VectorXd fitted;
  bool converged = false;
  int iterations = 0;
  double max_score_norm = 0.0;
};

struct ORFit {
  VectorXd alpha;
  VectorXd fitted_all;  // W_i' alpha at every unit, both arms
  int arm = 0;
};

inline VectorXd logistic(const VectorXd& eta) {
  return (1.0 + (-eta.array()).exp()).inverse().matrix();
}

namespace detail {

inline double log_likelihood(const VectorXd& eta, const VectorXd& z) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double t = eta(i);
    ll += z(i) * t - (std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))));
  }
  return ll;
}

inline MatrixXd weighted_gram(const MatrixXd& v, const VectorXd& w) {
  return v.transpose() * (v.array().colwise() * w.array()).matrix();
}

struct NewtonDirection {
  VectorXd step;
  double condition = 0.0;
};

// Solves info * step = score through the eigen-decomposition of the
// Jacobi-equilibrated information matrix; the same decomposition yields a
// scale-free condition estimate.
inline NewtonDirection newton_direction(const MatrixXd& info, const VectorXd& score) {
  const VectorXd d = info.diagonal().cwiseMax(0.0).cwiseSqrt();
  NewtonDirection out;
  if ((d.array() <= 0.0).any()) {
    out.condition = std::numeric_limits<double>::infinity();
    return out;
  }
  const VectorXd dinv = d.cwiseInverse();
  const MatrixXd scaled = dinv.asDiagonal() * info * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(scaled);
  const VectorXd lambda = eig.eigenvalues();
  if (lambda.minCoeff() <= 0.0) {
    out.condition = std::numeric_limits<double>::infinity();
    return out;
  }
  out.condition = lambda.maxCoeff() / lambda.minCoeff();
  const MatrixXd& q = eig.eigenvectors();
  out.step = dinv.asDiagonal() * (q * (lambda.cwiseInverse().asDiagonal() *
                                       (q.transpose() * (dinv.asDiagonal() * score))));
  return out;
}

}  // namespace detail

/// One unguarded Newton-Raphson (IRLS) update from `beta`.
inline VectorXd logistic_newton_step(const DesignMatrix& v, const VectorXd& z,
                                     const VectorXd& beta) {
  const VectorXd e = logistic(v.values * beta);
  const VectorXd score = v.values.transpose() * (z - e);
  const VectorXd w = (e.array() * (1.0 - e.array())).matrix();
  return beta + detail::newton_direction(detail::weighted_gram(v.values, w), score).step;
}

/// Maximum-likelihood logistic regression of z on the columns of v.
/// Throws NonConvergence on the iteration cap or detected separation and
/// SingularInformation when the design itself is (numerically) rank deficient.
inline PSFit fit_logistic(const DesignMatrix& v, const VectorXd& z, const IrlsOptions& opt = {}) {
  validate_design(v);
  validate_treatment(z);
  require_both_arms(z);
  const auto p = v.cols();
  VectorXd beta = opt.start.size() == p ? opt.start : VectorXd::Zero(p);

  for (int iter = 0; iter <= opt.max_iter; ++iter) {
    VectorXd eta = v.values * beta;
    VectorXd e = logistic(eta);
    const VectorXd score = v.values.transpose() * (z - e);
    const double score_norm = score.lpNorm<Eigen::Infinity>();
    if (score_norm <= opt.score_tol) {
      if ((e.array() <= 0.0).any() || (e.array() >= 1.0).any()) {
        throw Error(ErrorCode::NonConvergence, "fitted propensity reached 0 or 1");
      }
      return PSFit{std::move(beta), std::move(e), true, iter, score_norm};
    }
    if (iter == opt.max_iter) break;

    const VectorXd w = (e.array() * (1.0 - e.array())).matrix();
    const auto dir = detail::newton_direction(detail::weighted_gram(v.values, w), score);
    if (!(dir.condition <= opt.max_condition)) {
      if (iter == 0) {
        throw Error(ErrorCode::SingularInformation, "propensity design is rank deficient");
      }
      throw Error(ErrorCode::NonConvergence,
                  "information matrix became ill-conditioned (separation)");
    }

    // Step halving keeps the log-likelihood monotone.
    const double ll = detail::log_likelihood(eta, z);
    VectorXd step = dir.step;
    VectorXd candidate = beta + step;
    for (int half = 0; half < 30; ++half) {
      if (detail::log_likelihood(v.values * candidate, z) >= ll - 1e-12 * std::abs(ll)) break;
      step *= 0.5;
      candidate = beta + step;
    }
    beta = std::move(candidate);
    if (!beta.allFinite() || beta.lpNorm<Eigen::Infinity>() > opt.max_abs_coef) {
      throw Error(ErrorCode::NonConvergence,
                  "coefficient magnitude exceeded " + std::to_string(opt.max_abs_coef) +
                      " (separation)");
    }
  }
  throw Error(ErrorCode::NonConvergence,
              "IRLS hit the iteration cap of " + std::to_string(opt.max_iter));
}

/// Least squares of y on w restricted to rows with arm_mask == 1; the
/// fitted values are evaluated at every unit for imputation.
inline ORFit fit_ols(const DesignMatrix& w, const VectorXd& y, const VectorXd& arm_mask,
                     int arm = 1) {
  const auto n = w.rows();
  const auto q = w.cols();
  Eigen::Index n_arm = 0;
  for (Eigen::Index i = 0; i < n; ++i) n_arm += arm_mask(i) != 0.0 ? 1 : 0;
  if (n_arm <= q) {
    throw Error(ErrorCode::ArmTooSmall, "arm " + std::to_string(arm) + " has " +
                                            std::to_string(n_arm) + " units for " +
                                            std::to_string(q) + " coefficients");
  }
  MatrixXd wa(n_arm, q);
  VectorXd ya(n_arm);
  for (Eigen::Index i = 0, r = 0; i < n; ++i) {
    if (arm_mask(i) == 0.0) continue;
    wa.row(r) = w.values.row(i);
    ya(r) = y(i);
    ++r;
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(n_arm, q);
  qr.setThreshold(1e-10);
  qr.compute(wa);
  if (qr.rank() < q) {
    throw Error(ErrorCode::RankDeficient,
                "outcome design is collinear within arm " + std::to_string(arm));
  }
  ORFit fit;
  fit.alpha = qr.solve(ya);
  fit.fitted_all = w.values * fit.alpha;
  fit.arm = arm;
  return fit;
}

/// Convenience overload: fits arm z in {0, 1} of the treatment vector.
inline ORFit fit_ols_arm(const DesignMatrix& w, const VectorXd& y, const VectorXd& z, int arm) {
  const VectorXd mask = arm == 1 ? z : (1.0 - z.array()).matrix();
  return fit_ols(w, y, mask, arm);
}

/// Rows [Z_i - e_i] V_i'.
inline MatrixXd score_logistic(const PSFit& fit, const DesignMatrix& v, const VectorXd& z) {
  return (v.values.array().colwise() * (z - fit.fitted).array()).matrix();
}

/// Rows mask_i * W_i' (Y_i - W_i' alpha).
inline MatrixXd score_ols(const ORFit& fit, const DesignMatrix& w, const VectorXd& y,
                          const VectorXd& arm_mask) {
  const VectorXd r = (arm_mask.array() * (y - w.values * fit.alpha).array()).matrix();
  return (w.values.array().colwise() * r.array()).matrix();
}

}  // namespace drvar
