#pragma once

// Monte Carlo laboratory: data-generating process, superpopulation truths
// and the replicate loop producing Bias/RMSE/SE/ESD/RE/CP summaries.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "drvar/analysis.hpp"
#include "drvar/diagnostics.hpp"
#include "drvar/error.hpp"
#include "drvar/parallel.hpp"
#include "drvar/rng.hpp"
#include "drvar/stats.hpp"
#include "drvar/types.hpp"

namespace drvar {

enum class ModelId { m1, m2, m3, m4, m5a, m5b };
enum class EffectKind { constant, heterogeneous };

inline constexpr ModelId kAllModels[] = {ModelId::m1, ModelId::m2,  ModelId::m3,
                                         ModelId::m4, ModelId::m5a, ModelId::m5b};

constexpr std::string_view to_string(ModelId m) {
  switch (m) {
    case ModelId::m1: return "1";
    case ModelId::m2: return "2";
    case ModelId::m3: return "3";
    case ModelId::m4: return "4";
    case ModelId::m5a: return "5a";
    case ModelId::m5b: return "5b";
  }
  return "?";
}

inline ModelId parse_model(std::string_view s) {
  for (ModelId m : kAllModels) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model '" + std::string(s) + "'");
}

constexpr std::string_view to_string(EffectKind e) {
  return e == EffectKind::constant ? "constant" : "heterogeneous";
}

inline EffectKind parse_effect(std::string_view s) {
  if (s == "constant") return EffectKind::constant;
  if (s == "heterogeneous") return EffectKind::heterogeneous;
  throw Error(ErrorCode::InvalidArgument, "unknown effect '" + std::string(s) + "'");
}

/// Treatment-model coefficients on (1, X1, ..., X7).
inline std::array<double, 8> beta_for(ModelId m) {
  switch (m) {
    case ModelId::m2: return {-0.78, 0.3, 0.4, 0.4, 0.4, -0.1, -0.1, 0.1};
    case ModelId::m3: return {0.98, 0.3, 0.4, 0.4, 0.4, -0.1, -0.1, 0.1};
    case ModelId::m4: return {0.2, 1.0, -0.9, -0.9, 0.9, 0.15, 0.15, -0.2};
    case ModelId::m1:
    case ModelId::m5a:
    case ModelId::m5b: return {-2.17, 0.3, 0.4, 0.4, 0.4, -0.1, -0.1, 0.1};
  }
  return {};
}

inline Eigen::Index default_n(ModelId m) {
  switch (m) {
    case ModelId::m5a: return 100;
    case ModelId::m5b: return 50;
    default: return 1000;
  }
}

inline const std::vector<std::string>& dgp_columns() {
  static const std::vector<std::string> cols{"X1", "X2", "X3", "X4", "X5",
                                             "X6", "X7", "S12", "X1X3"};
  return cols;
}

struct SimSample {
  Dataset data;
  VectorXd delta;  // individual effect Y(1) - Y(0)
};

/// Draws N units. Columns of data.x: X1..X7, S12 = (X1+X2)^2, X1X3 = X1*X3.
inline SimSample generate_dgp(ModelId model, EffectKind effect, Eigen::Index n, Engine& eng) {
  const auto beta = beta_for(model);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  SimSample s;
  s.data.columns = dgp_columns();
  s.data.x.resize(n, 9);
  s.data.y.resize(n);
  s.data.z.resize(n);
  s.delta.resize(n);
  // Cholesky factors of [[1, .5], [.5, 1]] and [[2, .25], [.25, 2]].
  const double l21_a = 0.5;
  const double l22_a = std::sqrt(0.75);
  const double l11_b = std::sqrt(2.0);
  const double l21_b = 0.25 / l11_b;
  const double l22_b = std::sqrt(2.0 - l21_b * l21_b);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x4 = uniform01(eng) < 0.5 ? 1.0 : 0.0;
    const double x3 = uniform01(eng) < 0.4 + 0.2 * x4 ? 1.0 : 0.0;
    const double mu1 = x4 - x3 + 0.5 * x3 * x4;
    const double mu2 = x3 - x4 + x3 * x4;
    const double u1 = std_normal(eng);
    const double u2 = std_normal(eng);
    double x1 = 0.0;
    double x2 = 0.0;
    if (x3 == 1.0) {
      x1 = mu1 + u1;
      x2 = mu2 + l21_a * u1 + l22_a * u2;
    } else {
      x1 = mu1 + l11_b * u1;
      x2 = mu2 + l21_b * u1 + l22_b * u2;
    }
    const double x5 = x1 * x1;
    const double x6 = x1 * x2;
    const double x7 = x2 * x2;
    const double s12 = (x1 + x2) * (x1 + x2);
    const double eta = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x3 + beta[4] * x4 +
                       beta[5] * x5 + beta[6] * x6 + beta[7] * x7;
    const double e = 1.0 / (1.0 + std::exp(-eta));
    const double z = uniform01(eng) < e ? 1.0 : 0.0;
    const double eps = 2.0 * std_normal(eng);
    const double y0 = 0.5 + x1 + 0.6 * x2 + 2.2 * x3 - 1.2 * x4 + s12 + eps;
    const double delta = effect == EffectKind::constant ? 4.0 : 4.0 + 3.0 * s12 + x1 * x3;
    s.data.x.row(i) << x1, x2, x3, x4, x5, x6, x7, s12, x1 * x3;
    s.data.z(i) = z;
    s.data.y(i) = y0 + z * delta;
    s.delta(i) = delta;
  }
  return s;
}

enum class SpecCell { both_correct, ps_correct, or_correct, both_wrong };

inline constexpr SpecCell kAllCells[] = {SpecCell::both_correct, SpecCell::ps_correct,
                                         SpecCell::or_correct, SpecCell::both_wrong};

constexpr std::string_view to_string(SpecCell c) {
  switch (c) {
    case SpecCell::both_correct: return "both_correct";
    case SpecCell::ps_correct: return "ps_correct";
    case SpecCell::or_correct: return "or_correct";
    case SpecCell::both_wrong: return "both_wrong";
  }
  return "?";
}

inline SpecCell parse_cell(std::string_view s) {
  for (SpecCell c : kAllCells) {
    if (to_string(c) == s) return c;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown specification cell '" + std::string(s) + "'");
}

constexpr bool ps_is_correct(SpecCell c) {
  return c == SpecCell::both_correct || c == SpecCell::ps_correct;
}
constexpr bool or_is_correct(SpecCell c) {
  return c == SpecCell::both_correct || c == SpecCell::or_correct;
}

/// Correct PS: X1..X7; misspecified PS drops X5, X6, X7. Correct OR:
/// X1..X4 and (X1+X2)^2, plus X1*X3 under heterogeneous effects;
/// misspecified OR drops (X1+X2)^2.
inline ModelSpec model_spec_for(EffectKind effect, bool ps_correct, bool or_correct) {
  ModelSpec spec;
  spec.ps_columns = {"X1", "X2", "X3", "X4"};
  if (ps_correct) spec.ps_columns.insert(spec.ps_columns.end(), {"X5", "X6", "X7"});
  spec.or_columns = {"X1", "X2", "X3", "X4"};
  if (or_correct) spec.or_columns.push_back("S12");
  if (effect == EffectKind::heterogeneous) spec.or_columns.push_back("X1X3");
  return spec;
}

inline ModelSpec model_spec_for(EffectKind effect, SpecCell cell) {
  return model_spec_for(effect, ps_is_correct(cell), or_is_correct(cell));
}

struct TruthEntry {
  double att = 4.0;
  double att_mc_se = 0.0;
  double atc = 4.0;
  double atc_mc_se = 0.0;
  double treated_fraction = 0.0;
  Eigen::Index superpop_size = 0;

  double value(EstimandKind k) const {
    switch (k) {
      case EstimandKind::ATT: return att;
      case EstimandKind::ATC: return atc;
      case EstimandKind::ATE: break;
    }
    throw Error(ErrorCode::InvalidArgument, "truths are tabulated for ATT/ATC");
  }
  double mc_se(EstimandKind k) const { return k == EstimandKind::ATT ? att_mc_se : atc_mc_se; }
};

/// Mean of delta over the treated and control parts of a generated
/// superpopulation. Constant effects are exactly 4.
inline TruthEntry true_effect(ModelId model, EffectKind effect, Eigen::Index superpop_size,
                              std::uint64_t seed) {
  if (superpop_size < 100000) {
    throw Error(ErrorCode::InvalidArgument, "superpopulation must have at least 1e5 units");
  }
  Engine eng = make_engine(seed, {0x7472757468ULL, static_cast<std::uint64_t>(model)});
  const SimSample pop = generate_dgp(model, EffectKind::heterogeneous, superpop_size, eng);
  TruthEntry t;
  t.superpop_size = superpop_size;
  std::vector<double> treated;
  std::vector<double> control;
  for (Eigen::Index i = 0; i < superpop_size; ++i) {
    (pop.data.z(i) == 1.0 ? treated : control).push_back(pop.delta(i));
  }
  t.treated_fraction = static_cast<double>(treated.size()) / static_cast<double>(superpop_size);
  if (effect == EffectKind::heterogeneous) {
    t.att = mean(treated);
    t.atc = mean(control);
    t.att_mc_se = sample_sd(treated) / std::sqrt(static_cast<double>(treated.size()));
    t.atc_mc_se = sample_sd(control) / std::sqrt(static_cast<double>(control.size()));
  }
  return t;
}

struct SimConfig {
  ModelId model = ModelId::m2;
  EffectKind effect = EffectKind::heterogeneous;
  Eigen::Index n = 0;  // 0: the model's default
  std::vector<SpecCell> cells{std::begin(kAllCells), std::end(kAllCells)};
  std::vector<Estimand> estimands{Estimand::att(), Estimand::atc()};
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  int replicates_m = 200;
  int bootstrap_r = 500;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;
  TruthEntry truth;
};

/// Per-replicate record for one (cell, estimand).
struct ReplicateRecord {
  std::optional<double> estimate;
  std::optional<ErrorCode> estimate_error;
  std::vector<MethodOutcome> methods;
  double ess_weighted = 0.0;    // ESS of the re-weighted arm
  double ess_unweighted = 0.0;  // ESS of the arm carrying uniform weights
  Eigen::Index n_unweighted = 0;
};

struct MetricsRow {
  ModelId model = ModelId::m2;
  EffectKind effect = EffectKind::heterogeneous;
  SpecCell cell = SpecCell::both_correct;
  Estimand estimand;
  Method method = Method::sandwich;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias_pct = 0.0;
  double rmse = 0.0;
  double se_median = 0.0;
  double esd = 0.0;
  double re_median = 0.0;
  double cp = 0.0;
  int n_success = 0;
  int n_failures = 0;
};

struct FailureRow {
  SpecCell cell = SpecCell::both_correct;
  Estimand estimand;
  Method method = Method::sandwich;
  ErrorCode code = ErrorCode::SingularA;
  int count = 0;
};

struct SimResult {
  SimConfig config;
  Eigen::Index n = 0;
  std::vector<MetricsRow> rows;
  std::vector<FailureRow> failures;
  // records[cell][estimand][replicate]
  std::vector<std::vector<std::vector<ReplicateRecord>>> records;
  // (z, e_hat) of replicate 0 under each cell, for plotting
  std::vector<std::pair<VectorXd, VectorXd>> ps_scores;
};

namespace detail {

inline MetricsRow aggregate(const std::vector<ReplicateRecord>& recs, std::size_t method_idx,
                            double truth) {
  MetricsRow row;
  row.truth = truth;
  std::vector<double> est;
  std::vector<double> ses;
  int covered = 0;
  for (const auto& r : recs) {
    const MethodOutcome& mo = r.methods[method_idx];
    if (!mo.interval || !r.estimate) {
      ++row.n_failures;
      continue;
    }
    est.push_back(*r.estimate);
    ses.push_back(mo.interval->se);
    if (mo.interval->low <= truth && truth <= mo.interval->high) ++covered;
  }
  row.n_success = static_cast<int>(est.size());
  if (est.empty()) {
    const double nan = std::nan("");
    row.mean_estimate = row.bias_pct = row.rmse = row.se_median = row.esd = row.re_median =
        row.cp = nan;
    return row;
  }
  row.mean_estimate = mean(est);
  row.bias_pct = 100.0 * std::abs(row.mean_estimate - truth) / std::abs(truth);
  double sq = 0.0;
  for (double t : est) sq += (t - truth) * (t - truth);
  row.rmse = std::sqrt(sq / static_cast<double>(est.size()));
  row.se_median = median(ses);
  row.esd = est.size() > 1 ? sample_sd(est) : std::nan("");
  std::vector<double> re;
  re.reserve(ses.size());
  for (double s : ses) re.push_back(row.esd * row.esd / (s * s));
  row.re_median = median(re);
  row.cp = static_cast<double>(covered) / static_cast<double>(est.size());
  return row;
}

}  // namespace detail

/// Runs M replicates. Replicate m's data come from the stream keyed by
/// (seed, model, effect, m) and are shared by every specification cell;
/// variance-method streams add the cell index.
inline SimResult run_monte_carlo(const SimConfig& cfg) {
  if (cfg.replicates_m < 2) throw Error(ErrorCode::InvalidArgument, "need M >= 2");
  SimResult res;
  res.config = cfg;
  res.n = cfg.n > 0 ? cfg.n : default_n(cfg.model);
  const auto n_cells = cfg.cells.size();
  const auto n_est = cfg.estimands.size();
  const auto m_count = static_cast<std::size_t>(cfg.replicates_m);
  res.records.assign(n_cells, std::vector<std::vector<ReplicateRecord>>(
                                  n_est, std::vector<ReplicateRecord>(m_count)));
  res.ps_scores.resize(n_cells);
  std::vector<ModelSpec> specs;
  for (SpecCell c : cfg.cells) specs.push_back(model_spec_for(cfg.effect, c));

  parallel_for(m_count, cfg.workers, [&](std::size_t m) {
    Engine eng = make_engine(cfg.seed, {0x6461746155ULL, static_cast<std::uint64_t>(cfg.model),
                                        static_cast<std::uint64_t>(cfg.effect), m});
    const SimSample sample = generate_dgp(cfg.model, cfg.effect, res.n, eng);
    for (std::size_t c = 0; c < n_cells; ++c) {
      AnalysisOptions opt;
      opt.methods = cfg.methods;
      opt.replicates = cfg.bootstrap_r;
      opt.alpha = cfg.alpha;
      opt.workers = 1;
      opt.seed = stream_seed(cfg.seed, {0x626f6f74ULL, static_cast<std::uint64_t>(cfg.model),
                                        static_cast<std::uint64_t>(cfg.effect),
                                        static_cast<std::uint64_t>(cfg.cells[c]), m});
      std::optional<AnalysisData> d;
      AnalysisResult ar;
      try {
        d = prepare(sample.data, specs[c]);
        ar = analyze(*d, cfg.estimands, opt);
      } catch (const Error& err) {
        ar.ps_error = err;
        ar.estimands.resize(n_est);
        for (std::size_t j = 0; j < n_est; ++j) {
          ar.estimands[j].estimand = cfg.estimands[j];
          ar.estimands[j].error = err;
          for (Method meth : cfg.methods) ar.estimands[j].methods.push_back(detail::failed(meth, err));
        }
      }
      if (m == 0 && ar.ps) res.ps_scores[c] = {sample.data.z, ar.ps->fitted};
      for (std::size_t j = 0; j < n_est; ++j) {
        auto& rec = res.records[c][j][m];
        auto& rep = ar.estimands[j];
        if (rep.point) {
          rec.estimate = rep.point->point.value;
          if (rep.estimand.kind != EstimandKind::ATE) {
            const EssReport ess = effective_sample_size(rep.point->weights, rep.estimand, sample.data.z);
            const bool att = rep.estimand.kind == EstimandKind::ATT;
            rec.ess_weighted = ess.ess;
            rec.ess_unweighted = att ? ess.ess_treated : ess.ess_control;
            rec.n_unweighted = att ? ess.n_treated : ess.n_control;
          }
        } else if (rep.error) {
          rec.estimate_error = rep.error->code();
        }
        rec.methods = std::move(rep.methods);
      }
    }
  });

  for (std::size_t c = 0; c < n_cells; ++c) {
    for (std::size_t j = 0; j < n_est; ++j) {
      const double truth = cfg.truth.value(cfg.estimands[j].kind);
      for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
        MetricsRow row = detail::aggregate(res.records[c][j], k, truth);
        row.model = cfg.model;
        row.effect = cfg.effect;
        row.cell = cfg.cells[c];
        row.estimand = cfg.estimands[j];
        row.method = cfg.methods[k];
        res.rows.push_back(row);

        std::map<ErrorCode, int> counts;
        for (const auto& r : res.records[c][j]) {
          const auto& mo = r.methods[k];
          if (mo.error) ++counts[mo.error->code()];
        }
        for (const auto& [code, count] : counts) {
          res.failures.push_back({cfg.cells[c], cfg.estimands[j], cfg.methods[k], code, count});
        }
      }
    }
  }
  return res;
}

}  // namespace drvar
