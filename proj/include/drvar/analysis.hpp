#pragma once

// One complete analysis of a sample: nuisance fits, point estimates for a set
// of estimands and every requested variance method. Shared by the CLI and the
// simulation harness.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "drvar/error.hpp"
#include "drvar/influence_bootstrap.hpp"
#include "drvar/pipeline.hpp"
#include "drvar/resampling_bootstrap.hpp"
#include "drvar/rng.hpp"
#include "drvar/sandwich.hpp"

namespace drvar {

enum class Method { sandwich, wild_rademacher, wild_exponential, standard_bootstrap };

inline constexpr Method kAllMethods[] = {Method::sandwich, Method::wild_rademacher,
                                         Method::wild_exponential, Method::standard_bootstrap};

constexpr std::string_view to_string(Method m) {
  switch (m) {
    case Method::sandwich: return "sandwich";
    case Method::wild_rademacher: return "wild_rademacher";
    case Method::wild_exponential: return "wild_exponential";
    case Method::standard_bootstrap: return "standard_bootstrap";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  for (Method m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  if (name == "sand") return Method::sandwich;
  if (name == "wb_r" || name == "wild_r") return Method::wild_rademacher;
  if (name == "wb_e" || name == "wild_e") return Method::wild_exponential;
  if (name == "std_boot" || name == "bootstrap") return Method::standard_bootstrap;
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

struct MethodOutcome {
  Method method = Method::sandwich;
  std::optional<Interval> interval;
  std::optional<Error> error;
  double se_direct = 0.0;  // wild bootstrap: sqrt(Sigma*/N)
  int failures = 0;        // standard bootstrap: failed replicates
};

struct EstimandReport {
  Estimand estimand;
  std::optional<PointResult> point;
  std::optional<Error> error;
  std::vector<MethodOutcome> methods;
};

struct AnalysisOptions {
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  int replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int workers = 1;
  IrlsOptions irls;
};

struct AnalysisResult {
  std::optional<PSFit> ps;
  std::optional<Error> ps_error;
  std::vector<EstimandReport> estimands;
};

namespace detail {

inline MethodOutcome failed(Method m, const Error& err) {
  MethodOutcome out;
  out.method = m;
  out.error = err;
  return out;
}

inline MethodOutcome run_sandwich(const AnalysisData& d, const PSFit& ps, const ORFit* opp,
                                  const EstimandReport& rep, const AnalysisOptions& opt) {
  MethodOutcome out;
  out.method = Method::sandwich;
  const PointEstimate& pt = rep.point->point;
  const bool dr = opt.estimator != EstimatorKind::weighting;
  if (dr && opt.estimator != EstimatorKind::doubly_robust) {
    throw Error(ErrorCode::InvalidArgument, "sandwich supports the doubly robust and weighting estimators");
  }
  const SandwichProblem prob = dr ? make_dr_problem(rep.estimand, d.v, d.w, d.y, d.z)
                                  : make_wate_problem(rep.estimand, d.v, d.y, d.z);
  const ThetaStack theta =
      make_theta(prob, ps.beta, dr ? opp->alpha : VectorXd(), pt.mu1, pt.mu0);
  out.interval = sandwich_variance(prob, theta, opt.alpha).interval;
  out.interval->estimate = pt.value;
  return out;
}

inline MethodOutcome run_wild(const AnalysisData& d, const PSFit& ps, const ORFit* opp,
                              const EstimandReport& rep, Method m, const AnalysisOptions& opt) {
  if (rep.estimand.kind == EstimandKind::ATE || opt.estimator != EstimatorKind::doubly_robust ||
      opp == nullptr) {
    throw Error(ErrorCode::InvalidArgument,
                "wild bootstrap is available for the doubly robust ATT/ATC only");
  }
  const double tau = rep.point->point.value;
  const InfluenceVector iv =
      efficient_influence(rep.estimand, d.z, d.y, ps.fitted, opp->fitted_all, tau);
  const Multiplier mult =
      m == Method::wild_rademacher ? Multiplier::rademacher : Multiplier::exponential;
  const std::uint64_t seed =
      stream_seed(opt.seed, {static_cast<std::uint64_t>(m),
                             static_cast<std::uint64_t>(rep.estimand.kind)});
  const WildResult wr = wild_inference(iv, tau, opt.replicates, mult, seed, opt.alpha, opt.workers);
  MethodOutcome out;
  out.method = m;
  out.interval = wr.interval;
  out.se_direct = wr.se.se_direct;
  return out;
}

}  // namespace detail

inline AnalysisResult analyze(const AnalysisData& d, std::span<const Estimand> estimands,
                              const AnalysisOptions& opt) {
  AnalysisResult res;
  res.estimands.resize(estimands.size());
  for (std::size_t j = 0; j < estimands.size(); ++j) res.estimands[j].estimand = estimands[j];

  try {
    require_both_arms(d.z);
    res.ps = fit_logistic(d.v, d.z, opt.irls);
  } catch (const Error& err) {
    res.ps_error = err;
    for (auto& rep : res.estimands) {
      rep.error = err;
      for (Method m : opt.methods) rep.methods.push_back(detail::failed(m, err));
    }
    return res;
  }

  std::array<std::optional<ORFit>, 2> ors;
  std::array<std::optional<Error>, 2> or_err;
  std::vector<const ORFit*> opps(estimands.size(), nullptr);
  for (std::size_t j = 0; j < estimands.size(); ++j) {
    auto& rep = res.estimands[j];
    try {
      const ORFit* opp = nullptr;
      if (opt.estimator != EstimatorKind::weighting) {
        const int arm = opposite_arm(rep.estimand);
        if (!ors[arm] && !or_err[arm]) {
          try {
            ors[arm] = fit_ols_arm(d.w, d.y, d.z, arm);
          } catch (const Error& err) {
            or_err[arm] = err;
          }
        }
        if (or_err[arm]) throw *or_err[arm];
        opp = &*ors[arm];
      }
      rep.point = point_estimate(d, *res.ps, opp, rep.estimand, opt.estimator);
      opps[j] = opp;
    } catch (const Error& err) {
      rep.error = err;
    }
  }

  // Standard bootstrap shares resamples across estimands.
  std::vector<Estimand> boot_est;
  std::vector<double> boot_orig;
  std::vector<std::size_t> boot_slot;
  const bool want_boot = std::find(opt.methods.begin(), opt.methods.end(),
                                   Method::standard_bootstrap) != opt.methods.end();
  std::vector<std::optional<MethodOutcome>> boot_out(estimands.size());
  if (want_boot) {
    for (std::size_t j = 0; j < estimands.size(); ++j) {
      if (!res.estimands[j].point) continue;
      boot_est.push_back(estimands[j]);
      boot_orig.push_back(res.estimands[j].point->point.value);
      boot_slot.push_back(j);
    }
    if (!boot_est.empty()) {
      BootstrapOptions bo;
      bo.replicates = opt.replicates;
      bo.alpha = opt.alpha;
      bo.seed = stream_seed(opt.seed, {static_cast<std::uint64_t>(Method::standard_bootstrap)});
      bo.workers = opt.workers;
      bo.estimator = opt.estimator;
      bo.irls = opt.irls;
      bo.irls.start = res.ps->beta;
      const auto entries = standard_bootstrap_multi(d, boot_est, boot_orig, bo);
      for (std::size_t k = 0; k < entries.size(); ++k) {
        MethodOutcome mo;
        mo.method = Method::standard_bootstrap;
        mo.failures = entries[k].draws.n_failures();
        if (entries[k].result) {
          mo.interval = entries[k].result->interval;
        } else {
          mo.error = entries[k].error;
        }
        boot_out[boot_slot[k]] = mo;
      }
    }
  }

  for (std::size_t j = 0; j < estimands.size(); ++j) {
    auto& rep = res.estimands[j];
    for (Method m : opt.methods) {
      if (!rep.point) {
        rep.methods.push_back(detail::failed(m, *rep.error));
        continue;
      }
      try {
        switch (m) {
          case Method::sandwich:
            rep.methods.push_back(detail::run_sandwich(d, *res.ps, opps[j], rep, opt));
            break;
          case Method::wild_rademacher:
          case Method::wild_exponential:
            rep.methods.push_back(detail::run_wild(d, *res.ps, opps[j], rep, m, opt));
            break;
          case Method::standard_bootstrap:
            rep.methods.push_back(*boot_out[j]);
            break;
        }
      } catch (const Error& err) {
        rep.methods.push_back(detail::failed(m, err));
      }
    }
  }
  return res;
}

}  // namespace drvar
