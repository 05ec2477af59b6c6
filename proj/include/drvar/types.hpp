#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "drvar/error.hpp"

namespace drvar {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class EstimandKind { ATE, ATT, ATC };

/// Member of the weighted-average-treatment-effect family indexed by the
/// selection function g(x) = a + b * e(x).
struct Estimand {
  EstimandKind kind = EstimandKind::ATT;
  int a = 0;
  int b = 1;

  static constexpr Estimand ate() { return {EstimandKind::ATE, 1, 0}; }
  static constexpr Estimand att() { return {EstimandKind::ATT, 0, 1}; }
  static constexpr Estimand atc() { return {EstimandKind::ATC, 1, -1}; }

  static constexpr Estimand of(EstimandKind kind) {
    switch (kind) {
      case EstimandKind::ATE: return ate();
      case EstimandKind::ATT: return att();
      case EstimandKind::ATC: return atc();
    }
    return att();
  }

  constexpr bool operator==(const Estimand&) const = default;
};

constexpr std::string_view to_string(EstimandKind kind) {
  switch (kind) {
    case EstimandKind::ATE: return "ATE";
    case EstimandKind::ATT: return "ATT";
    case EstimandKind::ATC: return "ATC";
  }
  return "?";
}

inline EstimandKind parse_estimand(std::string_view name) {
  if (name == "ATE" || name == "ate") return EstimandKind::ATE;
  if (name == "ATT" || name == "att") return EstimandKind::ATT;
  if (name == "ATC" || name == "atc") return EstimandKind::ATC;
  throw Error(ErrorCode::InvalidArgument, "unknown estimand '" + std::string(name) + "'");
}

/// Observed sample: outcome, binary treatment (stored as 0.0/1.0) and a
/// covariate pool with named columns.
struct Dataset {
  VectorXd y;
  VectorXd z;
  MatrixXd x;
  std::vector<std::string> columns;

  Eigen::Index size() const { return y.size(); }
  Eigen::Index n_treated() const {
    return static_cast<Eigen::Index>(std::llround(z.sum()));
  }
  Eigen::Index n_control() const { return size() - n_treated(); }

  std::optional<Eigen::Index> find_column(std::string_view name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) return std::nullopt;
    return static_cast<Eigen::Index>(it - columns.begin());
  }

  Eigen::Index column_index(std::string_view name) const {
    if (auto idx = find_column(name)) return *idx;
    throw Error(ErrorCode::MissingColumn, "column '" + std::string(name) + "' not found");
  }

  /// Rows picked by index, with repetition allowed (bootstrap resamples).
  Dataset select_rows(std::span<const Eigen::Index> rows) const {
    Dataset out;
    const auto n = static_cast<Eigen::Index>(rows.size());
    out.y.resize(n);
    out.z.resize(n);
    out.x.resize(n, x.cols());
    out.columns = columns;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto r = rows[static_cast<std::size_t>(i)];
      out.y(i) = y(r);
      out.z(i) = z(r);
      out.x.row(i) = x.row(r);
    }
    return out;
  }
};

/// Regression design: N x (k+1) values whose first column is the intercept
/// when has_intercept is set.
struct DesignMatrix {
  MatrixXd values;
  std::vector<std::string> column_names;
  bool has_intercept = true;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

/// Which covariate columns enter the propensity design V and the outcome
/// design W. An intercept is always prepended.
struct ModelSpec {
  std::vector<std::string> ps_columns;
  std::vector<std::string> or_columns;
};

inline void validate_design(const DesignMatrix& d) {
  if (d.column_names.size() != static_cast<std::size_t>(d.cols())) {
    throw Error(ErrorCode::InvalidArgument, "design column names do not match width");
  }
  if (!d.values.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "design contains non-finite entries");
  }
  if (d.has_intercept && d.cols() > 0 && (d.values.col(0).array() != 1.0).any()) {
    throw Error(ErrorCode::InvalidArgument, "intercept column is not identically one");
  }
  if (d.rows() < d.cols() + 1) {
    throw Error(ErrorCode::InvalidArgument, "design needs at least k+2 rows");
  }
}

inline DesignMatrix make_design(const Dataset& data, std::span<const std::string> columns) {
  DesignMatrix d;
  const auto n = data.size();
  d.values.resize(n, static_cast<Eigen::Index>(columns.size()) + 1);
  d.values.col(0).setOnes();
  d.column_names.reserve(columns.size() + 1);
  d.column_names.emplace_back("(Intercept)");
  for (std::size_t j = 0; j < columns.size(); ++j) {
    d.values.col(static_cast<Eigen::Index>(j) + 1) = data.x.col(data.column_index(columns[j]));
    d.column_names.push_back(columns[j]);
  }
  d.has_intercept = true;
  validate_design(d);
  return d;
}

inline DesignMatrix intercept_only(Eigen::Index n) {
  return DesignMatrix{MatrixXd::Ones(n, 1), {"(Intercept)"}, true};
}

inline void validate_treatment(const VectorXd& z) {
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (z(i) != 0.0 && z(i) != 1.0) {
      throw Error(ErrorCode::NonBinaryTreatment,
                  "treatment value at row " + std::to_string(i + 1) + " is not 0/1");
    }
  }
}

inline void require_both_arms(const VectorXd& z) {
  const double n1 = z.sum();
  if (n1 < 0.5 || n1 > static_cast<double>(z.size()) - 0.5) {
    throw Error(ErrorCode::EmptyArm, "one treatment arm is empty");
  }
}

}  // namespace drvar
