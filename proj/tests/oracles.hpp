#pragma once

// Test-only reference implementations. They share no code with the library
// beyond Eigen containers: straightforward loops, numerical derivatives and
// explicit inverses.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Compensated summation.
inline double kahan_sum(const std::vector<double>& v) {
  double s = 0.0;
  double c = 0.0;
  for (double x : v) {
    const double y = x - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

/// Inverse standard normal CDF by bisection on erfc.
inline double normal_quantile(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Least squares through the Moore-Penrose pseudoinverse of X.
inline VectorXd ols_pinv(const MatrixXd& x, const VectorXd& y) {
  Eigen::JacobiSVD<MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  VectorXd sinv = svd.singularValues();
  for (Eigen::Index k = 0; k < sinv.size(); ++k) sinv(k) = sinv(k) > 1e-12 ? 1.0 / sinv(k) : 0.0;
  return svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose() * y;
}

/// sum_i w_i x_i x_i' by explicit loops.
inline MatrixXd gram(const MatrixXd& x, const VectorXd& w) {
  MatrixXd g = MatrixXd::Zero(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index a = 0; a < x.cols(); ++a) {
      for (Eigen::Index b = 0; b < x.cols(); ++b) g(a, b) += w(i) * x(i, a) * x(i, b);
    }
  }
  return g;
}

/// (sum w)^2 / sum w^2.
inline double ess(const std::vector<double>& w) {
  double s = 0.0;
  double s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s * s / s2;
}

enum class Target { att, atc };

/// Stacked estimating functions written out per unit. theta = (beta, alpha,
/// mu1, mu0); alpha is omitted when dr is false (Hajek weighting).
struct StackedPsi {
  Target target = Target::att;
  bool dr = true;
  MatrixXd v;
  MatrixXd w;
  VectorXd y;
  VectorXd z;

  Eigen::Index dim() const { return v.cols() + (dr ? w.cols() : 0) + 2; }

  VectorXd unit(Eigen::Index i, const VectorXd& theta) const {
    const Eigen::Index p = v.cols();
    const Eigen::Index q = dr ? w.cols() : 0;
    VectorXd out = VectorXd::Zero(dim());
    double eta = 0.0;
    for (Eigen::Index k = 0; k < p; ++k) eta += v(i, k) * theta(k);
    const double e = expit(eta);
    for (Eigen::Index k = 0; k < p; ++k) out(k) = (z(i) - e) * v(i, k);
    double m = 0.0;
    for (Eigen::Index k = 0; k < q; ++k) m += w(i, k) * theta(p + k);
    const double r = y(i) - m;
    const double mu1 = theta(p + q);
    const double mu0 = theta(p + q + 1);
    // odds of being in the target arm relative to the unit's own arm
    const double odds = target == Target::att ? e / (1.0 - e) : (1.0 - e) / e;
    const bool in_target = target == Target::att ? z(i) == 1.0 : z(i) == 0.0;
    if (dr) {
      for (Eigen::Index k = 0; k < q; ++k) out(p + k) = in_target ? 0.0 : r * w(i, k);
    }
    if (target == Target::att) {
      out(p + q) = z(i) * (r - mu1);
      out(p + q + 1) = z(i) == 1.0 ? 0.0 : odds * (r - mu0);
    } else {
      out(p + q) = z(i) == 1.0 ? odds * (r - mu1) : 0.0;
      out(p + q + 1) = (1.0 - z(i)) * (r - mu0);
    }
    return out;
  }

  /// N^{-1} sum_i Psi_i(theta).
  VectorXd mean(const VectorXd& theta) const {
    VectorXd s = VectorXd::Zero(dim());
    for (Eigen::Index i = 0; i < y.size(); ++i) s += unit(i, theta);
    return s / static_cast<double>(y.size());
  }
};

/// -d/dtheta' of N^{-1} sum Psi by central differences.
inline MatrixXd numeric_A(const StackedPsi& psi, const VectorXd& theta, double rel_step = 1e-6) {
  const Eigen::Index d = theta.size();
  MatrixXd a(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double h = rel_step * std::max(1.0, std::abs(theta(k)));
    VectorXd tp = theta;
    VectorXd tm = theta;
    tp(k) += h;
    tm(k) -= h;
    a.col(k) = -(psi.mean(tp) - psi.mean(tm)) / (2.0 * h);
  }
  return a;
}

inline MatrixXd meat(const StackedPsi& psi, const VectorXd& theta) {
  MatrixXd b = MatrixXd::Zero(psi.dim(), psi.dim());
  for (Eigen::Index i = 0; i < psi.y.size(); ++i) {
    const VectorXd u = psi.unit(i, theta);
    b += u * u.transpose();
  }
  return b / static_cast<double>(psi.y.size());
}

/// SE of mu1 - mu0 from the numeric A and an explicit inverse.
inline double numeric_sandwich_se(const StackedPsi& psi, const VectorXd& theta) {
  const MatrixXd a = numeric_A(psi, theta);
  const MatrixXd ainv = a.inverse();
  const MatrixXd sigma = ainv * meat(psi, theta) * ainv.transpose();
  const Eigen::Index d = theta.size();
  const double var = sigma(d - 2, d - 2) + sigma(d - 1, d - 1) - 2.0 * sigma(d - 2, d - 1);
  return std::sqrt(var / static_cast<double>(psi.y.size()));
}

/// Newton-Raphson logistic fit with plain matrix inverse.
inline VectorXd logistic_fit(const MatrixXd& v, const VectorXd& z, int iters = 50) {
  VectorXd beta = VectorXd::Zero(v.cols());
  for (int it = 0; it < iters; ++it) {
    VectorXd score = VectorXd::Zero(v.cols());
    VectorXd wt(v.rows());
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const double e = expit(v.row(i).dot(beta));
      score += (z(i) - e) * v.row(i).transpose();
      wt(i) = e * (1.0 - e);
    }
    beta += gram(v, wt).inverse() * score;
  }
  return beta;
}

/// Interquartile range by sorting (type-7 quantiles).
inline double iqr(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto q = [&](double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return q(0.75) - q(0.25);
}

}  // namespace oracle
