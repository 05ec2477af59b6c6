#pragma once

// Nonparametric (row-resampling) bootstrap with full nuisance refits.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include "drvar/error.hpp"
#include "drvar/parallel.hpp"
#include "drvar/pipeline.hpp"
#include "drvar/rng.hpp"
#include "drvar/stats.hpp"

namespace drvar {

struct ResampleDraws {
  std::vector<double> estimates;  // successful replicates, in replicate order
  std::map<ErrorCode, int> failures;
  int r_requested = 0;

  int n_failures() const {
    int total = 0;
    for (const auto& [code, count] : failures) total += count;
    return total;
  }
};

struct BootstrapResult {
  double se = 0.0;
  Interval interval;
  ResampleDraws draws;
};

struct BootstrapOptions {
  int replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;
  double min_success_fraction = 0.5;
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  IrlsOptions irls;  // a start vector here warm-starts every refit
};

namespace detail {

inline std::vector<Eigen::Index> draw_rows(Eigen::Index n, Engine& eng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
  for (auto& r : rows) r = pick(eng);
  return rows;
}

inline BootstrapResult summarize(ResampleDraws draws, double original, const BootstrapOptions& opt) {
  const auto successes = static_cast<double>(draws.estimates.size());
  if (successes < opt.min_success_fraction * static_cast<double>(draws.r_requested) ||
      draws.estimates.size() < 2) {
    std::string detail = std::to_string(draws.n_failures()) + " of " +
                         std::to_string(draws.r_requested) + " replicates failed";
    for (const auto& [code, count] : draws.failures) {
      detail += "; " + std::string(to_string(code)) + "=" + std::to_string(count);
    }
    throw Error(ErrorCode::TooManyFailures, detail);
  }
  BootstrapResult out;
  out.se = sample_sd(draws.estimates);
  out.interval = normal_interval(original, out.se, opt.alpha);
  out.draws = std::move(draws);
  return out;
}

}  // namespace detail

/// Bootstrap several estimands from the same resamples. Each replicate fits
/// the propensity model once and only the outcome arms the estimands need;
/// a failure is charged to exactly the estimands it prevents. Results for
/// estimand k are returned in slot k; an estimand whose replicates fail too
/// often holds the TooManyFailures error instead.
struct MultiBootstrapEntry {
  std::optional<BootstrapResult> result;
  std::optional<Error> error;
  ResampleDraws draws;
};

inline std::vector<MultiBootstrapEntry> standard_bootstrap_multi(
    const AnalysisData& d, std::span<const Estimand> estimands, std::span<const double> originals,
    const BootstrapOptions& opt) {
  if (opt.replicates < 2) throw Error(ErrorCode::InvalidArgument, "bootstrap needs R >= 2");
  const auto k = estimands.size();
  const auto r_count = static_cast<std::size_t>(opt.replicates);
  // slot[r][j]: estimate or error code
  struct Slot {
    double value = 0.0;
    std::optional<ErrorCode> error;
  };
  std::vector<std::vector<Slot>> slots(r_count, std::vector<Slot>(k));

  parallel_for(r_count, opt.workers, [&](std::size_t r) {
    Engine eng = make_engine(opt.seed, {0x5245u, r});
    const auto rows = detail::draw_rows(d.size(), eng);
    const AnalysisData bd = resample(d, rows);
    auto& out = slots[r];
    std::optional<PSFit> ps;
    try {
      require_both_arms(bd.z);
      ps = fit_logistic(bd.v, bd.z, opt.irls);
    } catch (const Error& err) {
      for (auto& s : out) s.error = err.code();
      return;
    }
    std::array<std::optional<ORFit>, 2> ors;
    std::array<std::optional<ErrorCode>, 2> or_error;
    for (std::size_t j = 0; j < k; ++j) {
      try {
        const ORFit* opp = nullptr;
        if (opt.estimator != EstimatorKind::weighting) {
          const int arm = opposite_arm(estimands[j]);
          if (or_error[arm]) throw Error(*or_error[arm], "outcome fit failed");
          if (!ors[arm]) {
            try {
              ors[arm] = fit_ols_arm(bd.w, bd.y, bd.z, arm);
            } catch (const Error& err) {
              or_error[arm] = err.code();
              throw;
            }
          }
          opp = &*ors[arm];
        }
        out[j].value = point_estimate(bd, *ps, opp, estimands[j], opt.estimator).point.value;
      } catch (const Error& err) {
        out[j].error = err.code();
      }
    }
  });

  std::vector<MultiBootstrapEntry> entries(k);
  for (std::size_t j = 0; j < k; ++j) {
    ResampleDraws draws;
    draws.r_requested = opt.replicates;
    for (std::size_t r = 0; r < r_count; ++r) {
      const Slot& s = slots[r][j];
      if (s.error) {
        ++draws.failures[*s.error];
      } else {
        draws.estimates.push_back(s.value);
      }
    }
    entries[j].draws = draws;
    try {
      entries[j].result = detail::summarize(std::move(draws), originals[j], opt);
    } catch (const Error& err) {
      entries[j].error = err;
    }
  }
  return entries;
}

/// Single-estimand bootstrap; throws TooManyFailures when fewer than half of
/// the replicates succeed.
inline BootstrapResult standard_bootstrap(const AnalysisData& d, const Estimand& est,
                                          double original, const BootstrapOptions& opt) {
  const std::array<Estimand, 1> ests{est};
  const std::array<double, 1> orig{original};
  auto entries = standard_bootstrap_multi(d, ests, orig, opt);
  if (entries[0].error) throw *entries[0].error;
  return std::move(*entries[0].result);
}

}  // namespace drvar
