#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drvar/cli_io.hpp"

namespace {

template <class T, class Parse>
std::vector<T> parse_list(const std::vector<std::string>& names, Parse parse) {
  std::vector<T> out;
  for (const auto& n : names) out.push_back(parse(n));
  return out;
}

drvar::EstimatorKind parse_estimator(const std::string& s) {
  if (s == "dr" || s == "doubly_robust") return drvar::EstimatorKind::doubly_robust;
  if (s == "weighting" || s == "wate") return drvar::EstimatorKind::weighting;
  throw drvar::Error(drvar::ErrorCode::InvalidArgument, "unknown estimator '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Doubly robust ATT/ATC estimation with sandwich and bootstrap variance"};
  app.set_config("--config", "", "TOML-style key = value file; command-line flags win");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(drvar::kVersion));

  std::string output_dir = ".";
  int workers = 1;
  std::uint64_t seed = 1;
  double alpha = 0.05;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--output-dir,-o", output_dir, "Directory for report files")
        ->envname("DRVAR_OUTPUT_DIR");
    sub->add_option("--workers,-j", workers, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--alpha", alpha, "Significance level in (0, 1)");
  };

  // estimate
  drvar::EstimateConfig ec;
  std::vector<std::string> est_names{"ATT", "ATC"};
  std::vector<std::string> method_names{"sandwich", "wild_rademacher", "wild_exponential",
                                        "standard_bootstrap"};
  std::string estimator = "dr";
  auto* est = app.add_subcommand("estimate", "Analyse a CSV data set");
  est->add_option("--data,-d", ec.data_path, "Input CSV file")->required();
  est->add_option("--outcome,-y", ec.outcome, "Outcome column")->required();
  est->add_option("--treatment,-z", ec.treatment, "Binary treatment column")->required();
  est->add_option("--ps-columns", ec.ps_columns, "Propensity covariates (default: all others)")
      ->delimiter(',');
  est->add_option("--or-columns", ec.or_columns, "Outcome-model covariates (default: PS set)")
      ->delimiter(',');
  est->add_option("--estimands", est_names, "Subset of ATT,ATC,ATE")->delimiter(',');
  est->add_option("--methods", method_names, "Variance methods")->delimiter(',');
  est->add_option("--estimator", estimator, "dr | weighting");
  est->add_option("--replicates,-R", ec.replicates, "Bootstrap replicates");
  est->add_option("--outcome-transform", ec.outcome_transform, "none | log")
      ->check(CLI::IsMember({"none", "log"}));
  est->add_flag("--drop-missing", ec.drop_missing, "Drop rows with missing used values");
  add_common(est);

  // simulate
  drvar::SimulateConfig sc;
  std::vector<std::string> models{"2"};
  std::vector<std::string> effects{"heterogeneous"};
  std::vector<std::string> cells{"both_correct", "ps_correct", "or_correct", "both_wrong"};
  std::vector<std::string> sim_methods = method_names;
  long long n = 0;
  bool full_scale = false;
  auto* sim = app.add_subcommand("simulate", "Run the Monte Carlo study");
  sim->add_option("--model", models, "Models: 1,2,3,4,5a,5b")->delimiter(',');
  sim->add_option("--effect", effects, "heterogeneous | constant")->delimiter(',');
  sim->add_option("--cells", cells, "both_correct,ps_correct,or_correct,both_wrong")
      ->delimiter(',');
  sim->add_option("--methods", sim_methods, "Variance methods")->delimiter(',');
  sim->add_option("--n", n, "Sample size (default: per model)");
  sim->add_option("--replicates,-M", sc.replicates_m, "Monte Carlo replicates");
  sim->add_option("--bootstrap-replicates,-R", sc.bootstrap_r, "Bootstrap replicates");
  sim->add_option("--superpop", sc.superpop, "Superpopulation size for the truth");
  sim->add_flag("--full-scale", full_scale, "M = 1000 and R = 1000");
  add_common(sim);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (est->parsed()) {
      ec.estimands = parse_list<drvar::EstimandKind>(est_names, drvar::parse_estimand);
      ec.methods = parse_list<drvar::Method>(method_names, drvar::parse_method);
      ec.estimator = parse_estimator(estimator);
      ec.output_dir = output_dir;
      ec.workers = workers;
      ec.seed = seed;
      ec.alpha = alpha;
      const int rc = drvar::run_estimate(ec);
      if (rc == 2) std::cerr << "error: see " << output_dir << "/error.json\n";
      return rc;
    }
    sc.models = parse_list<drvar::ModelId>(models, drvar::parse_model);
    sc.effects = parse_list<drvar::EffectKind>(effects, drvar::parse_effect);
    sc.cells = parse_list<drvar::SpecCell>(cells, drvar::parse_cell);
    sc.methods = parse_list<drvar::Method>(sim_methods, drvar::parse_method);
    sc.n = static_cast<Eigen::Index>(n);
    if (full_scale) {
      sc.replicates_m = 1000;
      sc.bootstrap_r = 1000;
    }
    sc.output_dir = output_dir;
    sc.workers = workers;
    sc.seed = seed;
    sc.alpha = alpha;
    const int rc = drvar::run_simulate(sc);
    if (rc == 2) std::cerr << "error: see " << output_dir << "/error.json\n";
    return rc;
  } catch (const drvar::Error& err) {
    std::filesystem::create_directories(output_dir);
    drvar::write_error_json(output_dir, err, est->parsed() ? "estimate" : "simulate");
    std::cerr << "error: " << drvar::to_string(err.code()) << ": " << err.what() << '\n';
    return 2;
  }
}
