#pragma once

// Selection function, tilts, normalized (Hajek) weights and the weighting,
// regression-imputation and doubly robust point estimators.

#include <string_view>

#include "drvar/error.hpp"
#include "drvar/types.hpp"

namespace drvar {

/// g(x_i) = a + b e_i and the scalar factor s_i with dg/dbeta = s_i V_i'.
struct SelectionValues {
  VectorXd g;
  VectorXd derivative_factor;
};

inline SelectionValues selection_g(const Estimand& est, const VectorXd& e_hat) {
  SelectionValues out;
  out.g = (static_cast<double>(est.a) + static_cast<double>(est.b) * e_hat.array()).matrix();
  out.derivative_factor =
      (static_cast<double>(est.b) * e_hat.array() * (1.0 - e_hat.array())).matrix();
  return out;
}

/// Raw tilts t(1, Z, x), t(0, Z, x) and their within-arm normalizations.
struct WeightSet {
  VectorXd tilt1;
  VectorXd tilt0;
  VectorXd w1;
  VectorXd w0;
};

/// The tilts Z g/e and (1-Z) g/(1-e), written per estimand so that the
/// g/e = 1 (ATT, treated) and g/(1-e) = 1 (ATC, controls) cancellations are
/// exact in floating point.
inline WeightSet compute_weights(const Estimand& est, const VectorXd& z, const VectorXd& e_hat) {
  require_both_arms(z);
  const auto n = z.size();
  WeightSet ws;
  ws.tilt1.resize(n);
  ws.tilt0.resize(n);
  const bool need_e_pos = est.kind != EstimandKind::ATT;  // treated tilt divides by e
  const bool need_e_lt1 = est.kind != EstimandKind::ATC;  // control tilt divides by 1-e
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = e_hat(i);
    const bool treated = z(i) == 1.0;
    if (treated && need_e_pos && !(e > 0.0)) {
      throw Error(ErrorCode::PositivityViolation,
                  "fitted propensity 0 for treated unit " + std::to_string(i + 1));
    }
    if (!treated && need_e_lt1 && !(e < 1.0)) {
      throw Error(ErrorCode::PositivityViolation,
                  "fitted propensity 1 for control unit " + std::to_string(i + 1));
    }
    switch (est.kind) {
      case EstimandKind::ATE:
        ws.tilt1(i) = treated ? 1.0 / e : 0.0;
        ws.tilt0(i) = treated ? 0.0 : 1.0 / (1.0 - e);
        break;
      case EstimandKind::ATT:
        ws.tilt1(i) = treated ? 1.0 : 0.0;
        ws.tilt0(i) = treated ? 0.0 : e / (1.0 - e);
        break;
      case EstimandKind::ATC:
        ws.tilt1(i) = treated ? (1.0 - e) / e : 0.0;
        ws.tilt0(i) = treated ? 0.0 : 1.0;
        break;
    }
  }
  const double s1 = ws.tilt1.sum();
  const double s0 = ws.tilt0.sum();
  if (!(s1 > 0.0) || !(s0 > 0.0)) {
    throw Error(ErrorCode::PositivityViolation, "an arm has zero total tilt");
  }
  ws.w1 = ws.tilt1 / s1;
  ws.w0 = ws.tilt0 / s0;
  return ws;
}

enum class EstimatorKind { weighting, regression, doubly_robust };

constexpr std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::weighting: return "weighting";
    case EstimatorKind::regression: return "regression";
    case EstimatorKind::doubly_robust: return "doubly_robust";
  }
  return "?";
}

struct PointEstimate {
  Estimand estimand;
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  double value = 0.0;
  double mu1 = 0.0;
  double mu0 = 0.0;
};

/// sum_i (w1_i - w0_i) Y_i.
inline PointEstimate hajek_wate(const Estimand& est, const WeightSet& ws, const VectorXd& y) {
  const double mu1 = ws.w1.dot(y);
  const double mu0 = ws.w0.dot(y);
  return {est, EstimatorKind::weighting, mu1 - mu0, mu1, mu0};
}

/// Regression imputation: ATT uses sum w1 (Y - m0), ATC uses sum w0 (m1 - Y).
inline PointEstimate regression_estimate(const Estimand& est, const WeightSet& ws,
                                         const VectorXd& y, const VectorXd& m_opposite) {
  PointEstimate out{est, EstimatorKind::regression, 0.0, 0.0, 0.0};
  switch (est.kind) {
    case EstimandKind::ATT:
      out.mu1 = ws.w1.dot(y);
      out.mu0 = ws.w1.dot(m_opposite);
      break;
    case EstimandKind::ATC:
      out.mu1 = ws.w0.dot(m_opposite);
      out.mu0 = ws.w0.dot(y);
      break;
    case EstimandKind::ATE:
      throw Error(ErrorCode::InvalidArgument, "regression estimator is defined for ATT/ATC");
  }
  out.value = out.mu1 - out.mu0;
  return out;
}

/// Doubly robust sum_i (w1_i - w0_i)(Y_i - m_{1-z}(x_i)), with m0 for ATT and
/// m1 for ATC. mu_z = sum_i w_z (Y_i - m_i) are the bias-corrected
/// components reused by the stacked estimating equations.
inline PointEstimate dr_estimate(const Estimand& est, const WeightSet& ws, const VectorXd& y,
                                 const VectorXd& m_opposite) {
  if (est.kind == EstimandKind::ATE) {
    throw Error(ErrorCode::InvalidArgument, "doubly robust estimator is defined for ATT/ATC");
  }
  const VectorXd resid = y - m_opposite;
  const double mu1 = ws.w1.dot(resid);
  const double mu0 = ws.w0.dot(resid);
  return {est, EstimatorKind::doubly_robust, mu1 - mu0, mu1, mu0};
}

}  // namespace drvar
