#pragma once

// Efficient influence functions for ATT/ATC and the multiplier (wild)
// bootstrap built on them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "drvar/error.hpp"
#include "drvar/parallel.hpp"
#include "drvar/rng.hpp"
#include "drvar/stats.hpp"
#include "drvar/types.hpp"

namespace drvar {

struct InfluenceVector {
  VectorXd phi;
  Estimand estimand;
  double p_hat = 0.0;
  bool centered = true;
};

/// phi_ATT = p^{-1} [(Z - e)/(1 - e) (Y - m0) - Z tau]
/// phi_ATC = (1 - p)^{-1} [(Z - e)/e (Y - m1) - (1 - Z) tau]
/// with p = N1/N.
inline InfluenceVector efficient_influence(const Estimand& est, const VectorXd& z,
                                           const VectorXd& y, const VectorXd& e_hat,
                                           const VectorXd& m_opposite, double tau_hat,
                                           bool center = true) {
  if (est.kind == EstimandKind::ATE) {
    throw Error(ErrorCode::InvalidArgument, "influence functions are defined for ATT/ATC");
  }
  require_both_arms(z);
  const auto n = z.size();
  InfluenceVector out;
  out.estimand = est;
  out.p_hat = z.sum() / static_cast<double>(n);
  out.centered = center;
  out.phi.resize(n);
  const bool att = est.kind == EstimandKind::ATT;
  const double pref = att ? 1.0 / out.p_hat : 1.0 / (1.0 - out.p_hat);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = e_hat(i);
    const double r = y(i) - m_opposite(i);
    if (att) {
      if (!(e < 1.0)) {
        throw Error(ErrorCode::PositivityViolation,
                    "fitted propensity 1 at unit " + std::to_string(i + 1));
      }
      out.phi(i) = pref * ((z(i) - e) / (1.0 - e) * r - z(i) * tau_hat);
    } else {
      if (!(e > 0.0)) {
        throw Error(ErrorCode::PositivityViolation,
                    "fitted propensity 0 at unit " + std::to_string(i + 1));
      }
      out.phi(i) = pref * ((z(i) - e) / e * r - (1.0 - z(i)) * tau_hat);
    }
  }
  if (center) out.phi.array() -= out.phi.mean();
  return out;
}

enum class Multiplier { rademacher, exponential };

constexpr std::string_view to_string(Multiplier m) {
  return m == Multiplier::rademacher ? "rademacher" : "exponential";
}

struct WildDraws {
  std::vector<double> deltas;    // sqrt(N) (tau*_r - tau)
  std::vector<double> tau_star;  // tau + N^{-1} sum_i xi_i phi_i
  Multiplier multiplier = Multiplier::rademacher;
  std::uint64_t seed = 0;
  Eigen::Index n = 0;
};

namespace detail {

// sum_i xi_i phi_i with xi_i = +-1 taken from successive bits of 64-bit words.
// The sign is applied by flipping the IEEE sign bit.
inline double rademacher_sum(const VectorXd& phi, Engine& eng) {
  const auto n = phi.size();
  const double* data = phi.data();
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  Eigen::Index i = 0;
  for (; i + 64 <= n; i += 64) {
    const std::uint64_t word = eng();
    for (int k = 0; k < 64; ++k) {
      const std::uint64_t flip = ((word >> k) & 1ULL) << 63;
      acc[k & 3] += std::bit_cast<double>(std::bit_cast<std::uint64_t>(data[i + k]) ^ flip);
    }
  }
  if (i < n) {
    const std::uint64_t word = eng();
    for (int k = 0; i + k < n; ++k) {
      const std::uint64_t flip = ((word >> k) & 1ULL) << 63;
      acc[0] += std::bit_cast<double>(std::bit_cast<std::uint64_t>(data[i + k]) ^ flip);
    }
  }
  return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

inline double exponential_sum(const VectorXd& phi, Engine& eng) {
  std::exponential_distribution<double> exp1(1.0);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) acc += exp1(eng) * phi(i);
  return acc;
}

}  // namespace detail

/// R multiplier-bootstrap replicates. Replicate r draws its multipliers from
/// the stream keyed by (seed, r), so output is independent of `workers`.
inline WildDraws wild_bootstrap(const VectorXd& phi, double tau_hat, int r_count,
                                Multiplier multiplier, std::uint64_t seed, int workers = 1) {
  if (r_count < 2) throw Error(ErrorCode::InvalidArgument, "wild bootstrap needs R >= 2");
  const auto n = phi.size();
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "empty influence vector");
  WildDraws out;
  out.multiplier = multiplier;
  out.seed = seed;
  out.n = n;
  out.deltas.resize(static_cast<std::size_t>(r_count));
  out.tau_star.resize(static_cast<std::size_t>(r_count));
  const double nd = static_cast<double>(n);
  const double root_n = std::sqrt(nd);
  parallel_for(static_cast<std::size_t>(r_count), workers, [&](std::size_t r) {
    Engine eng = make_engine(seed, {static_cast<std::uint64_t>(multiplier), r});
    const double s = multiplier == Multiplier::rademacher ? detail::rademacher_sum(phi, eng)
                                                          : detail::exponential_sum(phi, eng);
    out.deltas[r] = s / root_n;
    out.tau_star[r] = tau_hat + s / nd;
  });
  return out;
}

inline WildDraws wild_bootstrap(const InfluenceVector& iv, double tau_hat, int r_count,
                                Multiplier multiplier, std::uint64_t seed, int workers = 1) {
  return wild_bootstrap(iv.phi, tau_hat, r_count, multiplier, seed, workers);
}

inline constexpr double kNormalIqr = 1.3489795;

struct WildSE {
  double sigma_half = 0.0;  // IQR(Delta) / 1.3489795
  double se = 0.0;          // sigma_half / sqrt(N)
  double sigma_star = 0.0;  // R^{-1} sum Delta^2
  double se_direct = 0.0;   // sqrt(sigma_star / N)
};

inline WildSE iqr_se(const WildDraws& draws) {
  if (draws.deltas.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 draws");
  std::vector<double> sorted = draws.deltas;
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (iqr == 0.0 && sorted.front() != sorted.back()) {
    throw Error(ErrorCode::DegenerateDraws,
                "interquartile range of the bootstrap draws is zero");
  }
  WildSE out;
  const double root_n = std::sqrt(static_cast<double>(draws.n));
  out.sigma_half = iqr / kNormalIqr;
  out.se = out.sigma_half / root_n;
  double ss = 0.0;
  for (double d : draws.deltas) ss += d * d;
  out.sigma_star = ss / static_cast<double>(draws.deltas.size());
  out.se_direct = std::sqrt(out.sigma_star) / root_n;
  return out;
}

inline Interval wild_ci(double tau_hat, double se, double alpha) {
  return normal_interval(tau_hat, se, alpha);
}

/// 2 tau - mean(tau*), with the interval re-centred there.
inline Interval bias_corrected(double tau_hat, const std::vector<double>& tau_star, double se,
                               double alpha) {
  return normal_interval(2.0 * tau_hat - mean(tau_star), se, alpha);
}

struct WildResult {
  WildSE se;
  Interval interval;
  Interval corrected;
};

inline WildResult wild_inference(const InfluenceVector& iv, double tau_hat, int r_count,
                                 Multiplier multiplier, std::uint64_t seed, double alpha = 0.05,
                                 int workers = 1) {
  const WildDraws draws = wild_bootstrap(iv, tau_hat, r_count, multiplier, seed, workers);
  WildResult out;
  out.se = iqr_se(draws);
  out.interval = wild_ci(tau_hat, out.se.se, alpha);
  out.corrected = bias_corrected(tau_hat, draws.tau_star, out.se.se, alpha);
  return out;
}

}  // namespace drvar
