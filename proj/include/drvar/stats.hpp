#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>

namespace drvar {

inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Two-sided p-value of a z statistic.
inline double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double p) {
  const auto n = sorted.size();
  if (n == 0) return std::nan("");
  if (n == 1) return sorted[0];
  const double h = (static_cast<double>(n) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.5);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Normal-theory interval and two-sided p-value around an estimate.
struct Interval {
  double estimate = 0.0;
  double se = 0.0;
  double low = 0.0;
  double high = 0.0;
  double p_value = 1.0;
};

inline Interval normal_interval(double estimate, double se, double alpha) {
  const double z = normal_quantile(1.0 - alpha / 2.0);
  Interval out{estimate, se, estimate - z * se, estimate + z * se, 1.0};
  if (se > 0.0) {
    out.p_value = two_sided_p(estimate / se);
  } else {
    out.p_value = estimate == 0.0 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace drvar
