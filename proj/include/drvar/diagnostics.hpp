#pragma once

// Weighting diagnostics: effective sample size, design effect, variance
// inflation and standardized mean differences.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "drvar/error.hpp"
#include "drvar/types.hpp"
#include "drvar/weighting.hpp"

namespace drvar {

/// (sum w)^2 / sum w^2 over the units selected by mask.
inline double ess_of(const VectorXd& w, const VectorXd& mask) {
  double s = 0.0;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (mask(i) == 0.0) continue;
    s += w(i);
    s2 += w(i) * w(i);
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

struct EssReport {
  Estimand estimand;
  Eigen::Index n = 0;
  Eigen::Index n_treated = 0;
  Eigen::Index n_control = 0;
  double ess_treated = 0.0;
  double ess_control = 0.0;
  double ess = 0.0;            // the weighted arm for ATT/ATC, everyone for ATE
  double design_effect = 0.0;  // ESS/N1 (ATT), ESS/N0 (ATC), ESS/N (ATE)
  double pct_ess = 0.0;        // 100 ESS / size of the arm (or sample) it is taken over
};

/// ESS is evaluated on the raw tilts, which normalization only rescales; for
/// ATT treated (ATC control) units the tilt is exactly 1, so that arm's ESS
/// is exactly its size.
inline EssReport effective_sample_size(const WeightSet& ws, const Estimand& est,
                                       const VectorXd& z) {
  EssReport r;
  r.estimand = est;
  r.n = z.size();
  r.n_treated = static_cast<Eigen::Index>(std::llround(z.sum()));
  r.n_control = r.n - r.n_treated;
  const VectorXd ctrl = (1.0 - z.array()).matrix();
  r.ess_treated = ess_of(ws.tilt1, z);
  r.ess_control = ess_of(ws.tilt0, ctrl);
  switch (est.kind) {
    case EstimandKind::ATT:
      r.ess = r.ess_control;
      r.design_effect = r.ess / static_cast<double>(r.n_treated);
      r.pct_ess = 100.0 * r.ess / static_cast<double>(r.n_control);
      break;
    case EstimandKind::ATC:
      r.ess = r.ess_treated;
      r.design_effect = r.ess / static_cast<double>(r.n_control);
      r.pct_ess = 100.0 * r.ess / static_cast<double>(r.n_treated);
      break;
    case EstimandKind::ATE: {
      const VectorXd combined = (z.array() * ws.w1.array() + ctrl.array() * ws.w0.array()).matrix();
      r.ess = ess_of(combined, VectorXd::Ones(r.n));
      r.design_effect = r.ess / static_cast<double>(r.n);
      r.pct_ess = 100.0 * r.design_effect;
      break;
    }
  }
  return r;
}

/// (N1 N0 / N) sum_z (sum w_z)^{-2} sum w_z^2.
inline double variance_inflation(const WeightSet& ws, const VectorXd& z) {
  const double n = static_cast<double>(z.size());
  const double n1 = z.sum();
  const double n0 = n - n1;
  const double s1 = ws.tilt1.sum();
  const double s0 = ws.tilt0.sum();
  return n1 * n0 / n * (ws.tilt1.squaredNorm() / (s1 * s1) + ws.tilt0.squaredNorm() / (s0 * s0));
}

struct SmdRow {
  std::string covariate;
  double mean_treated = 0.0;
  double mean_control = 0.0;
  double pooled_sd = 0.0;
  double smd = 0.0;
  bool imbalanced = false;
};

inline constexpr double kSmdThreshold = 0.1;

/// |mean_1 - mean_0| / sqrt((s1^2 + s0^2)/2). Means are weighted by w1/w0
/// when weights are given; the pooled SD always uses the unweighted arms.
inline std::vector<SmdRow> standardized_differences(const MatrixXd& x,
                                                    const std::vector<std::string>& names,
                                                    const VectorXd& z,
                                                    const WeightSet* weights = nullptr) {
  require_both_arms(z);
  const auto n = z.size();
  const double n1 = z.sum();
  const double n0 = static_cast<double>(n) - n1;
  std::vector<SmdRow> rows;
  rows.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const auto col = x.col(j);
    if (!col.allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "covariate '" + names[static_cast<std::size_t>(j)] + "' is not finite");
    }
    double m1 = 0.0;
    double m0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) (z(i) == 1.0 ? m1 : m0) += col(i);
    m1 /= n1;
    m0 /= n0;
    double ss1 = 0.0;
    double ss0 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (z(i) == 1.0) {
        ss1 += (col(i) - m1) * (col(i) - m1);
      } else {
        ss0 += (col(i) - m0) * (col(i) - m0);
      }
    }
    const double v1 = n1 > 1.0 ? ss1 / (n1 - 1.0) : 0.0;
    const double v0 = n0 > 1.0 ? ss0 / (n0 - 1.0) : 0.0;
    SmdRow row;
    row.covariate = names[static_cast<std::size_t>(j)];
    row.pooled_sd = std::sqrt((v1 + v0) / 2.0);
    if (!(row.pooled_sd > 0.0)) {
      throw Error(ErrorCode::ZeroPooledSD, "covariate '" + row.covariate + "' has zero pooled SD");
    }
    if (weights != nullptr) {
      row.mean_treated = weights->w1.dot(col);
      row.mean_control = weights->w0.dot(col);
    } else {
      row.mean_treated = m1;
      row.mean_control = m0;
    }
    row.smd = std::abs(row.mean_treated - row.mean_control) / row.pooled_sd;
    row.imbalanced = row.smd > kSmdThreshold;
    rows.push_back(std::move(row));
  }
  return rows;
}

struct DiagnosticsReport {
  EssReport ess;
  double variance_inflation = 0.0;
  std::vector<SmdRow> smd_unweighted;
  std::vector<SmdRow> smd_weighted;
};

inline DiagnosticsReport diagnose(const WeightSet& ws, const Estimand& est, const VectorXd& z,
                                  const MatrixXd& x, const std::vector<std::string>& names) {
  DiagnosticsReport r;
  r.ess = effective_sample_size(ws, est, z);
  r.variance_inflation = variance_inflation(ws, z);
  r.smd_unweighted = standardized_differences(x, names, z, nullptr);
  r.smd_weighted = standardized_differences(x, names, z, &ws);
  return r;
}

}  // namespace drvar
