#pragma once

// M-estimation sandwich variance for the weighting (WATE) estimator and the
// doubly robust ATT/ATC estimators.
//
// Parameter stacks:
//   WATE    theta = (beta, mu1g, mu0g)
//   DR-ATT  theta = (beta, alpha0, mu1, mu0)
//   DR-ATC  theta = (beta, alpha1, mu1, mu0)

#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "drvar/error.hpp"
#include "drvar/model_fitting.hpp"
#include "drvar/stats.hpp"
#include "drvar/types.hpp"
#include "drvar/weighting.hpp"

namespace drvar {

enum class SandwichMode { wate, dr };

/// Data and designs entering the stacked estimating equations. `w` is only
/// read in dr mode.
struct SandwichProblem {
  Estimand estimand;
  SandwichMode mode = SandwichMode::dr;
  MatrixXd v;
  MatrixXd w;
  VectorXd y;
  VectorXd z;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return v.cols(); }
  Eigen::Index q() const { return mode == SandwichMode::dr ? w.cols() : 0; }
  Eigen::Index dim() const { return p() + q() + 2; }
  Eigen::Index mu1_index() const { return p() + q(); }
  Eigen::Index mu0_index() const { return p() + q() + 1; }
};

inline SandwichProblem make_wate_problem(const Estimand& est, const DesignMatrix& v,
                                         const VectorXd& y, const VectorXd& z) {
  return SandwichProblem{est, SandwichMode::wate, v.values, MatrixXd(), y, z};
}

inline SandwichProblem make_dr_problem(const Estimand& est, const DesignMatrix& v,
                                       const DesignMatrix& w, const VectorXd& y,
                                       const VectorXd& z) {
  if (est.kind == EstimandKind::ATE) {
    throw Error(ErrorCode::InvalidArgument, "doubly robust sandwich is defined for ATT/ATC");
  }
  return SandwichProblem{est, SandwichMode::dr, v.values, w.values, y, z};
}

struct ThetaStack {
  Eigen::Index p = 0;
  Eigen::Index q = 0;
  VectorXd values;
  VectorXd contrast;
};

/// theta-hat at the fitted nuisance parameters and the point estimate's
/// (mu1, mu0) components. `alpha` is the opposite-arm outcome fit (alpha0
/// for ATT, alpha1 for ATC) and is ignored in wate mode.
inline ThetaStack make_theta(const SandwichProblem& prob, const VectorXd& beta,
                             const VectorXd& alpha, double mu1, double mu0) {
  ThetaStack th;
  th.p = prob.p();
  th.q = prob.q();
  th.values.resize(prob.dim());
  th.values.head(th.p) = beta;
  if (th.q > 0) th.values.segment(th.p, th.q) = alpha;
  th.values(prob.mu1_index()) = mu1;
  th.values(prob.mu0_index()) = mu0;
  th.contrast = VectorXd::Zero(prob.dim());
  th.contrast(prob.mu1_index()) = 1.0;
  th.contrast(prob.mu0_index()) = -1.0;
  return th;
}

namespace detail {

// Per-unit treated and control tilts at propensity e, in the same
// cancellation-exact form as compute_weights.
inline void tilts(EstimandKind kind, double z, double e, double& t1, double& t0) {
  const bool treated = z == 1.0;
  switch (kind) {
    case EstimandKind::ATE:
      t1 = treated ? 1.0 / e : 0.0;
      t0 = treated ? 0.0 : 1.0 / (1.0 - e);
      break;
    case EstimandKind::ATT:
      t1 = treated ? 1.0 : 0.0;
      t0 = treated ? 0.0 : e / (1.0 - e);
      break;
    case EstimandKind::ATC:
      t1 = treated ? (1.0 - e) / e : 0.0;
      t0 = treated ? 0.0 : 1.0;
      break;
  }
}

}  // namespace detail

/// N x d matrix whose row i is Psi_theta(X_i, Z_i, Y_i) evaluated at an
/// arbitrary theta.
inline MatrixXd stack_psi(const SandwichProblem& prob, const VectorXd& theta) {
  const auto n = prob.n();
  const auto p = prob.p();
  const auto q = prob.q();
  const VectorXd e = logistic(prob.v * theta.head(p));
  const double mu1 = theta(prob.mu1_index());
  const double mu0 = theta(prob.mu0_index());
  MatrixXd psi(n, prob.dim());
  psi.leftCols(p) = (prob.v.array().colwise() * (prob.z - e).array()).matrix();

  if (prob.mode == SandwichMode::wate) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double t1 = 0.0;
      double t0 = 0.0;
      detail::tilts(prob.estimand.kind, prob.z(i), e(i), t1, t0);
      psi(i, p) = t1 * (prob.y(i) - mu1);
      psi(i, p + 1) = t0 * (prob.y(i) - mu0);
    }
    return psi;
  }

  const bool att = prob.estimand.kind == EstimandKind::ATT;
  const VectorXd m = prob.w * theta.segment(p, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double zi = prob.z(i);
    const double r = prob.y(i) - m(i);
    const double fit_arm = att ? 1.0 - zi : zi;
    psi.row(i).segment(p, q) = fit_arm * r * prob.w.row(i);
    if (att) {
      psi(i, p + q) = zi * (r - mu1);
      psi(i, p + q + 1) = zi == 1.0 ? 0.0 : e(i) / (1.0 - e(i)) * (r - mu0);
    } else {
      psi(i, p + q) = zi == 1.0 ? (1.0 - e(i)) / e(i) * (r - mu1) : 0.0;
      psi(i, p + q + 1) = (1.0 - zi) * (r - mu0);
    }
  }
  return psi;
}

inline MatrixXd stack_psi_wate(const SandwichProblem& prob, const PSFit& ps, double mu1,
                               double mu0) {
  return stack_psi(prob, make_theta(prob, ps.beta, VectorXd(), mu1, mu0).values);
}

inline MatrixXd stack_psi_dr(const SandwichProblem& prob, const PSFit& ps, const ORFit& opposite,
                             double mu1, double mu0) {
  return stack_psi(prob, make_theta(prob, ps.beta, opposite.alpha, mu1, mu0).values);
}

/// A_N = -N^{-1} sum_i dPsi_i/dtheta' from the closed-form blocks.
inline MatrixXd assemble_A_closed_form(const SandwichProblem& prob, const VectorXd& theta) {
  const auto n = prob.n();
  const auto p = prob.p();
  const auto q = prob.q();
  const double inv_n = 1.0 / static_cast<double>(n);
  const VectorXd e = logistic(prob.v * theta.head(p));
  const double mu1 = theta(prob.mu1_index());
  const double mu0 = theta(prob.mu0_index());
  const auto i1 = prob.mu1_index();
  const auto i0 = prob.mu0_index();

  MatrixXd a = MatrixXd::Zero(prob.dim(), prob.dim());
  const VectorXd info_w = (e.array() * (1.0 - e.array())).matrix();
  a.topLeftCorner(p, p) = detail::weighted_gram(prob.v, info_w) * inv_n;

  if (prob.mode == SandwichMode::wate) {
    const SelectionValues sel = selection_g(prob.estimand, e);
    VectorXd c21 = VectorXd::Zero(n);
    VectorXd c31 = VectorXd::Zero(n);
    double a22 = 0.0;
    double a33 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ei = e(i);
      const double g = sel.g(i);
      const double s = sel.derivative_factor(i);
      if (prob.z(i) == 1.0) {
        c21(i) = -(s - (1.0 - ei) * g) / ei * (prob.y(i) - mu1);
        a22 += g / ei;
      } else {
        c31(i) = -(s + ei * g) / (1.0 - ei) * (prob.y(i) - mu0);
        a33 += g / (1.0 - ei);
      }
    }
    a.row(i1).head(p) = (prob.v.transpose() * c21).transpose() * inv_n;
    a.row(i0).head(p) = (prob.v.transpose() * c31).transpose() * inv_n;
    a(i1, i1) = a22 * inv_n;
    a(i0, i0) = a33 * inv_n;
    return a;
  }

  const VectorXd m = prob.w * theta.segment(p, q);
  if (prob.estimand.kind == EstimandKind::ATT) {
    const VectorXd ctrl = (1.0 - prob.z.array()).matrix();
    VectorXd odds = VectorXd::Zero(n);
    VectorXd c41 = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (prob.z(i) == 1.0) continue;
      odds(i) = e(i) / (1.0 - e(i));
      c41(i) = -odds(i) * (prob.y(i) - m(i) - mu0);
    }
    a.block(p, p, q, q) = detail::weighted_gram(prob.w, ctrl) * inv_n;
    a.row(i1).segment(p, q) = (prob.w.transpose() * prob.z).transpose() * inv_n;
    a(i1, i1) = prob.z.sum() * inv_n;
    a.row(i0).head(p) = (prob.v.transpose() * c41).transpose() * inv_n;
    a.row(i0).segment(p, q) = (prob.w.transpose() * odds).transpose() * inv_n;
    a(i0, i0) = odds.sum() * inv_n;
  } else {
    const VectorXd ctrl = (1.0 - prob.z.array()).matrix();
    VectorXd odds = VectorXd::Zero(n);
    VectorXd c31 = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (prob.z(i) != 1.0) continue;
      odds(i) = (1.0 - e(i)) / e(i);
      c31(i) = odds(i) * (prob.y(i) - m(i) - mu1);
    }
    a.block(p, p, q, q) = detail::weighted_gram(prob.w, prob.z) * inv_n;
    a.row(i1).head(p) = (prob.v.transpose() * c31).transpose() * inv_n;
    a.row(i1).segment(p, q) = (prob.w.transpose() * odds).transpose() * inv_n;
    a(i1, i1) = odds.sum() * inv_n;
    a.row(i0).segment(p, q) = (prob.w.transpose() * ctrl).transpose() * inv_n;
    a(i0, i0) = ctrl.sum() * inv_n;
  }
  return a;
}

/// B_N = N^{-1} Psi' Psi.
inline MatrixXd assemble_B(const MatrixXd& psi) {
  MatrixXd b = MatrixXd::Zero(psi.cols(), psi.cols());
  b.selfadjointView<Eigen::Lower>().rankUpdate(psi.transpose());
  b = b.selfadjointView<Eigen::Lower>();
  return b / static_cast<double>(psi.rows());
}

struct SandwichResult {
  double variance = 0.0;
  double se = 0.0;
  double condition = 0.0;
  Interval interval;
};

namespace detail {

// 2-norm condition number of D1 A D2 after Ruiz row/column equilibration, so
// the singularity test does not depend on the units of Y or of the
// covariates.
inline double equilibrated_condition(const MatrixXd& a) {
  MatrixXd s = a;
  for (int it = 0; it < 10; ++it) {
    const VectorXd r = s.rowwise().lpNorm<Eigen::Infinity>();
    const VectorXd c = s.colwise().lpNorm<Eigen::Infinity>().transpose();
    if ((r.array() <= 0.0).any() || (c.array() <= 0.0).any()) {
      return std::numeric_limits<double>::infinity();
    }
    s = r.cwiseSqrt().cwiseInverse().asDiagonal() * s * c.cwiseSqrt().cwiseInverse().asDiagonal();
  }
  const Eigen::JacobiSVD<MatrixXd> svd(s);
  const VectorXd& sv = svd.singularValues();
  return sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                 : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Var(c' theta) = N^{-1} c' A^{-1} B A^{-T} c, solved through a QR of A'
/// (A is never inverted). A is declared singular when its equilibrated
/// condition number exceeds max_condition.
inline SandwichResult sandwich_se(const MatrixXd& a, const MatrixXd& b, const VectorXd& c,
                                  Eigen::Index n, double estimate = 0.0, double alpha = 0.05,
                                  double max_condition = 1e12) {
  SandwichResult out;
  out.condition = a.allFinite() ? detail::equilibrated_condition(a)
                                : std::numeric_limits<double>::infinity();
  if (!(out.condition <= max_condition)) {
    throw Error(ErrorCode::SingularA,
                "A_N condition number " + std::to_string(out.condition) + " exceeds limit");
  }
  const VectorXd u = a.transpose().colPivHouseholderQr().solve(c);
  out.variance = u.dot(b * u) / static_cast<double>(n);
  if (!(out.variance >= 0.0)) {
    throw Error(ErrorCode::NegativeVariance,
                "sandwich variance " + std::to_string(out.variance) + " is negative");
  }
  out.se = std::sqrt(out.variance);
  out.interval = normal_interval(estimate, out.se, alpha);
  return out;
}

/// Full matrices for reporting: Sigma = A^{-1} B A^{-T}.
struct SandwichParts {
  MatrixXd psi;
  MatrixXd a;
  MatrixXd b;
  MatrixXd sigma;
};

inline SandwichParts sandwich_parts(const SandwichProblem& prob, const VectorXd& theta) {
  SandwichParts parts;
  parts.psi = stack_psi(prob, theta);
  parts.a = assemble_A_closed_form(prob, theta);
  parts.b = assemble_B(parts.psi);
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(parts.a);
  const MatrixXd left = qr.solve(parts.b);  // A^{-1} B
  parts.sigma = qr.solve(left.transpose()).transpose();
  return parts;
}

/// End-to-end sandwich SE for a stacked problem at theta-hat.
inline SandwichResult sandwich_variance(const SandwichProblem& prob, const ThetaStack& theta,
                                        double alpha = 0.05) {
  const MatrixXd psi = stack_psi(prob, theta.values);
  const MatrixXd a = assemble_A_closed_form(prob, theta.values);
  return sandwich_se(a, assemble_B(psi), theta.contrast, prob.n(), theta.contrast.dot(theta.values),
                     alpha);
}

}  // namespace drvar
