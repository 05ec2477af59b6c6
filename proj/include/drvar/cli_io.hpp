#pragma once

// CSV ingestion, report writers and the two batch drivers behind the
// command-line tool (estimate, simulate).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <Eigen/Core>
#include <boost/version.hpp>
#include <json.hpp>

#include "drvar/analysis.hpp"
#include "drvar/diagnostics.hpp"
#include "drvar/error.hpp"
#include "drvar/sim_lab.hpp"
#include "drvar/types.hpp"

namespace drvar {

inline constexpr std::string_view kVersion = "1.0.0";

// ---------------------------------------------------------------- reading

/// Splits one CSV record (RFC 4180 quoting, no embedded newlines).
inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (quoted) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_no) + ": unterminated quoted field");
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "." || s == "null";
}

inline std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct CsvOptions {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;  // empty: every other column
  bool drop_missing = false;
  std::string outcome_transform = "none";  // none | log
};

struct LoadedData {
  Dataset data;
  std::size_t rows_read = 0;
  std::vector<std::size_t> dropped_rows;  // 1-based data row numbers
  // original covariate name -> columns of data.x (dummies for text columns)
  std::map<std::string, std::vector<std::string>> expansion;
};

/// Reads a header-first CSV file. Text covariates are dummy coded against
/// their alphabetically first level. Missing values in any used column are
/// an error listing the rows, or dropped with drop_missing.
inline LoadedData load_csv(const std::filesystem::path& path, const CsvOptions& opt) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ParseError, "cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "empty file: no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line, 1);
  for (auto& h : header) h = std::string(trim(h));

  auto find = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t y_col = find(opt.outcome);
  const std::size_t z_col = find(opt.treatment);
  std::vector<std::string> cov_names = opt.covariates;
  if (cov_names.empty()) {
    for (const auto& h : header) {
      if (h != opt.outcome && h != opt.treatment) cov_names.push_back(h);
    }
  }
  std::vector<std::size_t> cov_cols;
  for (const auto& c : cov_names) cov_cols.push_back(find(c));

  std::vector<std::vector<std::string>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                             std::to_string(header.size()) + " fields, found " +
                                             std::to_string(fields.size()));
    }
    rows.push_back(std::move(fields));
  }

  LoadedData out;
  out.rows_read = rows.size();
  std::vector<std::size_t> used{y_col, z_col};
  used.insert(used.end(), cov_cols.begin(), cov_cols.end());
  std::vector<std::size_t> keep;
  std::vector<std::size_t> missing;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const bool any_missing = std::any_of(used.begin(), used.end(),
                                         [&](std::size_t c) { return is_missing_token(rows[r][c]); });
    if (any_missing) {
      missing.push_back(r + 1);
    } else {
      keep.push_back(r);
    }
  }
  if (!missing.empty() && !opt.drop_missing) {
    std::string list;
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 10); ++k) {
      list += (k ? ", " : "") + std::to_string(missing[k]);
    }
    if (missing.size() > 10) list += ", ...";
    throw Error(ErrorCode::MissingValue, std::to_string(missing.size()) +
                                             " row(s) with missing values in used columns: " + list);
  }
  out.dropped_rows = missing;

  const auto n = static_cast<Eigen::Index>(keep.size());
  Dataset& d = out.data;
  d.y.resize(n);
  d.z.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = keep[static_cast<std::size_t>(i)];
    const std::size_t file_line = r + 2;
    const auto zv = parse_number(rows[r][z_col]);
    if (!zv || (*zv != 0.0 && *zv != 1.0)) {
      throw Error(ErrorCode::NonBinaryTreatment,
                  "row " + std::to_string(r + 1) + " (line " + std::to_string(file_line) +
                      "): treatment value '" + rows[r][z_col] + "' is not 0/1");
    }
    d.z(i) = *zv;
    const auto yv = parse_number(rows[r][y_col]);
    if (!yv) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(file_line) + ", column " +
                                             std::to_string(y_col + 1) + ": outcome '" +
                                             rows[r][y_col] + "' is not numeric");
    }
    double y = *yv;
    if (opt.outcome_transform == "log") {
      if (!(y > 0.0)) {
        throw Error(ErrorCode::InvalidArgument,
                    "row " + std::to_string(r + 1) + ": log transform needs a positive outcome");
      }
      y = std::log(y);
    } else if (opt.outcome_transform != "none") {
      throw Error(ErrorCode::InvalidArgument,
                  "unknown outcome transform '" + opt.outcome_transform + "'");
    }
    d.y(i) = y;
  }

  // Covariates: numeric when every kept value parses, otherwise categorical.
  std::vector<VectorXd> cols;
  for (std::size_t k = 0; k < cov_cols.size(); ++k) {
    const std::size_t c = cov_cols[k];
    VectorXd v(n);
    bool numeric = true;
    for (Eigen::Index i = 0; i < n && numeric; ++i) {
      const auto val = parse_number(rows[keep[static_cast<std::size_t>(i)]][c]);
      if (val) {
        v(i) = *val;
      } else {
        numeric = false;
      }
    }
    auto& names = out.expansion[cov_names[k]];
    if (numeric) {
      cols.push_back(std::move(v));
      d.columns.push_back(cov_names[k]);
      names.push_back(cov_names[k]);
      continue;
    }
    std::set<std::string> levels;
    for (Eigen::Index i = 0; i < n; ++i) {
      levels.insert(std::string(trim(rows[keep[static_cast<std::size_t>(i)]][c])));
    }
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      VectorXd dummy(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        dummy(i) = trim(rows[keep[static_cast<std::size_t>(i)]][c]) == *it ? 1.0 : 0.0;
      }
      cols.push_back(std::move(dummy));
      d.columns.push_back(cov_names[k] + "=" + *it);
      names.push_back(cov_names[k] + "=" + *it);
    }
  }
  d.x.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) d.x.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

/// Maps user-facing covariate names onto the (possibly dummy-expanded)
/// dataset columns.
inline std::vector<std::string> expand_columns(const LoadedData& ld,
                                               const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& nm : names) {
    auto it = ld.expansion.find(nm);
    if (it == ld.expansion.end()) {
      if (ld.data.find_column(nm)) {
        out.push_back(nm);
        continue;
      }
      throw Error(ErrorCode::MissingColumn, "column '" + nm + "' not found");
    }
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

// ---------------------------------------------------------------- writing

/// Shortest round-trip-free rendering with 6 significant digits; NA for
/// non-finite values. Independent of the C locale.
inline std::string fmt6(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
  }

  CsvWriter& row(std::initializer_list<std::string> fields) {
    bool first = true;
    for (const auto& f : fields) {
      if (!first) out_ << ',';
      out_ << csv_field(f);
      first = false;
    }
    out_ << '\n';
    return *this;
  }

  CsvWriter& blank() {
    out_ << '\n';
    return *this;
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline nlohmann::ordered_json library_versions() {
  nlohmann::ordered_json v;
  v["drvar"] = std::string(kVersion);
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
               "." + std::to_string(EIGEN_MINOR_VERSION);
  v["boost"] = std::to_string(BOOST_VERSION / 100000) + "." +
               std::to_string(BOOST_VERSION / 100 % 1000) + "." +
               std::to_string(BOOST_VERSION % 100);
  v["compiler"] = __VERSION__;
  return v;
}

inline void write_error_json(const std::filesystem::path& dir, const Error& err,
                             std::string_view command) {
  nlohmann::ordered_json j;
  j["command"] = std::string(command);
  j["error"] = std::string(to_string(err.code()));
  j["message"] = err.what();
  write_json(dir / "error.json", j);
}

// ---------------------------------------------------------------- estimate

struct EstimateConfig {
  std::string data_path;
  std::string outcome;
  std::string treatment;
  std::vector<std::string> ps_columns;  // empty: every covariate
  std::vector<std::string> or_columns;  // empty: same as ps_columns
  std::vector<EstimandKind> estimands{EstimandKind::ATT, EstimandKind::ATC};
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  EstimatorKind estimator = EstimatorKind::doubly_robust;
  int replicates = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output_dir = ".";
  std::string outcome_transform = "none";
  bool drop_missing = false;
};

inline nlohmann::ordered_json to_json(const EstimateConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = c.data_path;
  j["outcome"] = c.outcome;
  j["treatment"] = c.treatment;
  j["ps_columns"] = c.ps_columns;
  j["or_columns"] = c.or_columns;
  std::vector<std::string> est;
  for (auto e : c.estimands) est.emplace_back(to_string(e));
  j["estimands"] = est;
  std::vector<std::string> meth;
  for (auto m : c.methods) meth.emplace_back(to_string(m));
  j["methods"] = meth;
  j["estimator"] = std::string(to_string(c.estimator));
  j["replicates"] = c.replicates;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  j["outcome_transform"] = c.outcome_transform;
  j["drop_missing"] = c.drop_missing;
  return j;
}

inline void validate(const EstimateConfig& c) {
  if (c.data_path.empty()) throw Error(ErrorCode::InvalidArgument, "no data file given");
  if (c.outcome.empty() || c.treatment.empty()) {
    throw Error(ErrorCode::InvalidArgument, "outcome and treatment columns are required");
  }
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  }
  if (c.replicates < 2) throw Error(ErrorCode::InvalidArgument, "replicates must be >= 2");
  if (c.estimands.empty() || c.methods.empty()) {
    throw Error(ErrorCode::InvalidArgument, "at least one estimand and one method are required");
  }
}

inline void write_smd_block(CsvWriter& w, const std::string& weighting,
                            const std::vector<SmdRow>& rows) {
  for (const auto& r : rows) {
    w.row({weighting, r.covariate, fmt6(r.mean_treated), fmt6(r.mean_control), fmt6(r.pooled_sd),
           fmt6(r.smd), r.imbalanced ? "1" : "0"});
  }
}

/// Runs the data-application analysis and writes estimates.csv,
/// diagnostics.csv, ps_scores.csv and manifest.json. Returns the process
/// exit status: 0 iff every requested estimand has at least one method
/// result.
inline int run_estimate(const EstimateConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  try {
    validate(cfg);
    std::vector<std::string> wanted = cfg.ps_columns;
    wanted.insert(wanted.end(), cfg.or_columns.begin(), cfg.or_columns.end());
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    CsvOptions copt{cfg.outcome, cfg.treatment, wanted, cfg.drop_missing, cfg.outcome_transform};
    const LoadedData ld = load_csv(cfg.data_path, copt);
    std::vector<std::string> all_cov;
    for (const auto& [name, cols] : ld.expansion) all_cov.push_back(name);
    ModelSpec spec;
    spec.ps_columns = expand_columns(ld, cfg.ps_columns.empty() ? all_cov : cfg.ps_columns);
    spec.or_columns = cfg.or_columns.empty() ? spec.ps_columns : expand_columns(ld, cfg.or_columns);
    const AnalysisData d = prepare(ld.data, spec);

    std::vector<Estimand> ests;
    for (auto k : cfg.estimands) ests.push_back(Estimand::of(k));
    AnalysisOptions opt;
    opt.methods = cfg.methods;
    opt.estimator = cfg.estimator;
    opt.replicates = cfg.replicates;
    opt.alpha = cfg.alpha;
    opt.seed = cfg.seed;
    opt.workers = cfg.workers;
    // Estimands without an outcome-model formula fall back to weighting.
    std::vector<EstimandReport> reports;
    std::optional<PSFit> ps;
    for (const auto& e : ests) {
      AnalysisOptions o = opt;
      if (e.kind == EstimandKind::ATE) o.estimator = EstimatorKind::weighting;
      const std::array<Estimand, 1> one{e};
      AnalysisResult ar = analyze(d, one, o);
      if (ar.ps_error) throw *ar.ps_error;
      if (!ps) ps = ar.ps;
      reports.push_back(std::move(ar.estimands[0]));
    }

    bool all_ok = true;
    {
      CsvWriter w(dir / "estimates.csv");
      w.row({"estimand", "estimator", "method", "status", "estimate", "se", "ci_low", "ci_high",
             "p_value", "error"});
      for (const auto& rep : reports) {
        bool any = false;
        const std::string est_name(to_string(rep.estimand.kind));
        const std::string estimator(to_string(
            rep.estimand.kind == EstimandKind::ATE ? EstimatorKind::weighting : cfg.estimator));
        for (const auto& mo : rep.methods) {
          if (mo.interval) {
            any = true;
            const Interval& iv = *mo.interval;
            w.row({est_name, estimator, std::string(to_string(mo.method)), "ok", fmt6(iv.estimate),
                   fmt6(iv.se), fmt6(iv.low), fmt6(iv.high), fmt6(iv.p_value), ""});
          } else {
            const double est = rep.point ? rep.point->point.value : std::nan("");
            w.row({est_name, estimator, std::string(to_string(mo.method)), "failed", fmt6(est),
                   "NA", "NA", "NA", "NA", std::string(to_string(mo.error->code()))});
          }
        }
        all_ok = all_ok && any;
      }
    }

    {
      CsvWriter w(dir / "diagnostics.csv");
      // Block 1: actual and effective sample sizes per arm.
      const double n = static_cast<double>(d.size());
      const double n1 = d.z.sum();
      const double n0 = n - n1;
      std::map<EstimandKind, EssReport> ess;
      std::map<EstimandKind, double> vi;
      for (const auto& rep : reports) {
        if (!rep.point) continue;
        ess[rep.estimand.kind] = effective_sample_size(rep.point->weights, rep.estimand, d.z);
        vi[rep.estimand.kind] = variance_inflation(rep.point->weights, d.z);
      }
      auto ess_cell = [&](EstimandKind k, int arm) -> std::pair<std::string, std::string> {
        auto it = ess.find(k);
        if (it == ess.end()) return {"NA", "NA"};
        const double e = arm == 1 ? it->second.ess_treated : it->second.ess_control;
        const double size = arm == 1 ? n1 : n0;
        return {fmt6(e), fmt6(100.0 * e / size)};
      };
      w.row({"treatment", "n", "pct_n", "ess_att", "pct_ess_att", "ess_atc", "pct_ess_atc"});
      for (int arm : {0, 1}) {
        const auto [ea, pa] = ess_cell(EstimandKind::ATT, arm);
        const auto [ec, pc] = ess_cell(EstimandKind::ATC, arm);
        const double size = arm == 1 ? n1 : n0;
        w.row({std::to_string(arm), fmt6(size), fmt6(100.0 * size / n), ea, pa, ec, pc});
      }
      w.blank();
      // Block 2: summary diagnostics per estimand.
      w.row({"estimand", "ess", "pct_ess", "design_effect", "variance_inflation"});
      for (const auto& [k, r] : ess) {
        w.row({std::string(to_string(k)), fmt6(r.ess), fmt6(r.pct_ess), fmt6(r.design_effect),
               fmt6(vi[k])});
      }
      w.blank();
      // Block 3: standardized mean differences of the propensity covariates.
      w.row({"weighting", "covariate", "mean_treated", "mean_control", "pooled_sd", "smd",
             "above_0.1"});
      MatrixXd xv = d.v.values.rightCols(d.v.cols() - 1);
      std::vector<std::string> names(d.v.column_names.begin() + 1, d.v.column_names.end());
      try {
        write_smd_block(w, "none", standardized_differences(xv, names, d.z, nullptr));
        for (const auto& rep : reports) {
          if (!rep.point) continue;
          write_smd_block(w, std::string(to_string(rep.estimand.kind)),
                          standardized_differences(xv, names, d.z, &rep.point->weights));
        }
      } catch (const Error& err) {
        w.row({"error", std::string(to_string(err.code())), err.what(), "", "", "", ""});
      }
    }

    if (ps) {
      CsvWriter w(dir / "ps_scores.csv");
      w.row({"treatment", "e_hat"});
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        w.row({d.z(i) == 1.0 ? "1" : "0", fmt6(ps->fitted(i))});
      }
    }

    nlohmann::ordered_json man;
    man["command"] = "estimate";
    man["versions"] = library_versions();
    man["config"] = to_json(cfg);
    man["data"] = {{"rows_read", ld.rows_read},
                   {"rows_used", d.size()},
                   {"rows_dropped", ld.dropped_rows},
                   {"n_treated", static_cast<long long>(std::llround(d.z.sum()))},
                   {"n_control", static_cast<long long>(d.size() - std::llround(d.z.sum()))},
                   {"ps_design", d.v.column_names},
                   {"or_design", d.w.column_names}};
    if (ps) {
      man["ps_fit"] = {{"converged", ps->converged},
                       {"iterations", ps->iterations},
                       {"max_score_norm", ps->max_score_norm},
                       {"beta", std::vector<double>(ps->beta.data(), ps->beta.data() + ps->beta.size())}};
    }
    nlohmann::ordered_json full = nlohmann::ordered_json::array();
    for (const auto& rep : reports) {
      for (const auto& mo : rep.methods) {
        nlohmann::ordered_json r;
        r["estimand"] = std::string(to_string(rep.estimand.kind));
        r["method"] = std::string(to_string(mo.method));
        if (mo.interval) {
          r["estimate"] = mo.interval->estimate;
          r["se"] = mo.interval->se;
          r["p_value"] = mo.interval->p_value;
        } else {
          r["error"] = std::string(to_string(mo.error->code()));
          r["message"] = mo.error->what();
        }
        full.push_back(r);
      }
    }
    man["results"] = full;
    man["outputs"] = {"estimates.csv", "diagnostics.csv", "ps_scores.csv"};
    write_json(dir / "manifest.json", man);
    return all_ok ? 0 : 1;
  } catch (const Error& err) {
    write_error_json(dir, err, "estimate");
    return 2;
  }
}

// ---------------------------------------------------------------- simulate

struct SimulateConfig {
  std::vector<ModelId> models{ModelId::m2};
  std::vector<EffectKind> effects{EffectKind::heterogeneous};
  std::vector<SpecCell> cells{std::begin(kAllCells), std::end(kAllCells)};
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  Eigen::Index n = 0;
  int replicates_m = 200;
  int bootstrap_r = 500;
  Eigen::Index superpop = 1000000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string output_dir = ".";
};

inline nlohmann::ordered_json to_json(const SimulateConfig& c) {
  nlohmann::ordered_json j;
  std::vector<std::string> v;
  for (auto m : c.models) v.emplace_back(to_string(m));
  j["models"] = v;
  v.clear();
  for (auto e : c.effects) v.emplace_back(to_string(e));
  j["effects"] = v;
  v.clear();
  for (auto s : c.cells) v.emplace_back(to_string(s));
  j["cells"] = v;
  v.clear();
  for (auto m : c.methods) v.emplace_back(to_string(m));
  j["methods"] = v;
  j["n"] = c.n;
  j["replicates"] = c.replicates_m;
  j["bootstrap_replicates"] = c.bootstrap_r;
  j["superpopulation"] = c.superpop;
  j["alpha"] = c.alpha;
  j["seed"] = c.seed;
  return j;
}

/// One metrics file per (model, effect) plus failures.csv, truth.csv,
/// ess.csv and per-cell propensity-score files.
inline int run_simulate(const SimulateConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  try {
    if (cfg.replicates_m < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 replicates");
    if (cfg.bootstrap_r < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 bootstrap draws");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
    }
    bool all_ok = true;
    std::vector<std::string> outputs;
    CsvWriter truth_w(dir / "truth.csv");
    truth_w.row({"model", "effect", "estimand", "truth", "mc_se", "treated_fraction",
                 "superpopulation"});
    CsvWriter fail_w(dir / "failures.csv");
    fail_w.row({"model", "effect", "cell", "estimand", "method", "reason", "count"});
    CsvWriter ess_w(dir / "ess.csv");
    ess_w.row({"model", "effect", "cell", "estimand", "mean_ess_control", "mean_ess_treated",
               "replicates"});
    outputs.insert(outputs.end(), {"truth.csv", "failures.csv", "ess.csv"});

    for (ModelId model : cfg.models) {
      for (EffectKind effect : cfg.effects) {
        SimConfig sc;
        sc.model = model;
        sc.effect = effect;
        sc.n = cfg.n;
        sc.cells = cfg.cells;
        sc.methods = cfg.methods;
        sc.replicates_m = cfg.replicates_m;
        sc.bootstrap_r = cfg.bootstrap_r;
        sc.alpha = cfg.alpha;
        sc.seed = cfg.seed;
        sc.workers = cfg.workers;
        sc.truth = true_effect(model, effect, cfg.superpop, cfg.seed);
        for (EstimandKind k : {EstimandKind::ATT, EstimandKind::ATC}) {
          truth_w.row({std::string(to_string(model)), std::string(to_string(effect)),
                       std::string(to_string(k)), fmt6(sc.truth.value(k)), fmt6(sc.truth.mc_se(k)),
                       fmt6(sc.truth.treated_fraction), std::to_string(cfg.superpop)});
        }
        const SimResult res = run_monte_carlo(sc);

        const std::string stem =
            "metrics_model" + std::string(to_string(model)) + "_" + std::string(to_string(effect));
        CsvWriter mw(dir / (stem + ".csv"));
        outputs.push_back(stem + ".csv");
        mw.row({"cell", "est", "method", "bias", "rmse", "se", "esd", "re", "cp", "truth",
                "mean_estimate", "n_success", "n_failures"});
        std::map<std::pair<int, int>, bool> cell_ok;
        for (const auto& r : res.rows) {
          mw.row({std::string(to_string(r.cell)), std::string(to_string(r.estimand.kind)),
                  std::string(to_string(r.method)), fmt6(r.bias_pct), fmt6(r.rmse),
                  fmt6(r.se_median), fmt6(r.esd), fmt6(r.re_median), fmt6(r.cp), fmt6(r.truth),
                  fmt6(r.mean_estimate), std::to_string(r.n_success),
                  std::to_string(r.n_failures)});
          auto& ok = cell_ok[{static_cast<int>(r.cell), static_cast<int>(r.estimand.kind)}];
          ok = ok || r.n_success > 0;
        }
        for (const auto& [key, ok] : cell_ok) all_ok = all_ok && ok;
        for (const auto& f : res.failures) {
          fail_w.row({std::string(to_string(model)), std::string(to_string(effect)),
                      std::string(to_string(f.cell)), std::string(to_string(f.estimand.kind)),
                      std::string(to_string(f.method)), std::string(to_string(f.code)),
                      std::to_string(f.count)});
        }
        for (std::size_t c = 0; c < res.records.size(); ++c) {
          for (std::size_t j = 0; j < res.records[c].size(); ++j) {
            const bool att = sc.estimands[j].kind == EstimandKind::ATT;
            double s_w = 0.0;
            double s_u = 0.0;
            int cnt = 0;
            for (const auto& rec : res.records[c][j]) {
              if (!rec.estimate) continue;
              s_w += rec.ess_weighted;
              s_u += rec.ess_unweighted;
              ++cnt;
            }
            const double mw_ = cnt ? s_w / cnt : std::nan("");
            const double mu_ = cnt ? s_u / cnt : std::nan("");
            ess_w.row({std::string(to_string(model)), std::string(to_string(effect)),
                       std::string(to_string(sc.cells[c])),
                       std::string(to_string(sc.estimands[j].kind)), fmt6(att ? mw_ : mu_),
                       fmt6(att ? mu_ : mw_), std::to_string(cnt)});
          }
          const auto& [z, e] = res.ps_scores[c];
          if (z.size() == 0) continue;
          const std::string ps_name = "ps_scores_model" + std::string(to_string(model)) + "_" +
                                      std::string(to_string(effect)) + "_" +
                                      std::string(to_string(sc.cells[c])) + ".csv";
          CsvWriter pw(dir / ps_name);
          outputs.push_back(ps_name);
          pw.row({"treatment", "e_hat"});
          for (Eigen::Index i = 0; i < z.size(); ++i) {
            pw.row({z(i) == 1.0 ? "1" : "0", fmt6(e(i))});
          }
        }
      }
    }
    nlohmann::ordered_json man;
    man["command"] = "simulate";
    man["versions"] = library_versions();
    man["config"] = to_json(cfg);
    man["outputs"] = outputs;
    write_json(dir / "manifest.json", man);
    return all_ok ? 0 : 1;
  } catch (const Error& err) {
    write_error_json(dir, err, "simulate");
    return 2;
  }
}

}  // namespace drvar
