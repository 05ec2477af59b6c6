#pragma once

// Glue between the fitting and estimation modules: builds the designs for a
// model specification and runs fit -> weights -> point estimate.

#include <optional>
#include <span>

#include "drvar/error.hpp"
#include "drvar/model_fitting.hpp"
#include "drvar/types.hpp"
#include "drvar/weighting.hpp"

namespace drvar {

/// Designs and response vectors of one analysis sample.
struct AnalysisData {
  DesignMatrix v;
  DesignMatrix w;
  VectorXd y;
  VectorXd z;

  Eigen::Index size() const { return y.size(); }
};

inline AnalysisData prepare(const Dataset& data, const ModelSpec& spec) {
  validate_treatment(data.z);
  AnalysisData out;
  out.v = make_design(data, spec.ps_columns);
  out.w = make_design(data, spec.or_columns);
  out.y = data.y;
  out.z = data.z;
  return out;
}

/// Row subset (with repetition) of an analysis sample.
inline AnalysisData resample(const AnalysisData& d, std::span<const Eigen::Index> rows) {
  AnalysisData out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.v.values.resize(n, d.v.cols());
  out.w.values.resize(n, d.w.cols());
  out.v.column_names = d.v.column_names;
  out.w.column_names = d.w.column_names;
  out.y.resize(n);
  out.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = rows[static_cast<std::size_t>(i)];
    out.v.values.row(i) = d.v.values.row(r);
    out.w.values.row(i) = d.w.values.row(r);
    out.y(i) = d.y(r);
    out.z(i) = d.z(r);
  }
  return out;
}

/// Fitted nuisance models. Outcome fits are only present for the arms an
/// estimand needs.
struct FitBundle {
  PSFit ps;
  std::optional<ORFit> or0;
  std::optional<ORFit> or1;
};

inline int opposite_arm(const Estimand& est) { return est.kind == EstimandKind::ATT ? 0 : 1; }

inline ORFit fit_opposite(const AnalysisData& d, const Estimand& est) {
  return fit_ols_arm(d.w, d.y, d.z, opposite_arm(est));
}

/// Weights plus the point estimate of the requested estimator. ATE only
/// supports the weighting estimator.
struct PointResult {
  WeightSet weights;
  PointEstimate point;
};

inline PointResult point_estimate(const AnalysisData& d, const PSFit& ps,
                                  const ORFit* opposite, const Estimand& est,
                                  EstimatorKind kind) {
  PointResult out;
  out.weights = compute_weights(est, d.z, ps.fitted);
  switch (kind) {
    case EstimatorKind::weighting:
      out.point = hajek_wate(est, out.weights, d.y);
      break;
    case EstimatorKind::regression:
    case EstimatorKind::doubly_robust:
      if (opposite == nullptr) {
        throw Error(ErrorCode::InvalidArgument, "outcome fit required for this estimator");
      }
      out.point = kind == EstimatorKind::regression
                      ? regression_estimate(est, out.weights, d.y, opposite->fitted_all)
                      : dr_estimate(est, out.weights, d.y, opposite->fitted_all);
      break;
  }
  return out;
}

/// Fit everything from scratch and return the point estimate value.
inline double refit_estimate(const AnalysisData& d, const Estimand& est, EstimatorKind kind,
                             const IrlsOptions& irls = {}) {
  const PSFit ps = fit_logistic(d.v, d.z, irls);
  if (kind == EstimatorKind::weighting) {
    return point_estimate(d, ps, nullptr, est, kind).point.value;
  }
  const ORFit opp = fit_opposite(d, est);
  return point_estimate(d, ps, &opp, est, kind).point.value;
}

}  // namespace drvar
