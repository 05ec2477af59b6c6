#include <catch2/catch_amalgamated.hpp>

#include "drvar/sim_lab.hpp"

using namespace drvar;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("generated columns follow their definitions", "[sim_lab]") {
  Engine eng = make_engine(3, {1});
  const SimSample s = generate_dgp(ModelId::m2, EffectKind::heterogeneous, 500, eng);
  const auto& x = s.data.x;
  REQUIRE(x.rows() == 500);
  REQUIRE(s.data.columns == dgp_columns());
  for (Eigen::Index i = 0; i < 500; ++i) {
    REQUIRE(x(i, 4) == x(i, 0) * x(i, 0));
    REQUIRE(x(i, 5) == x(i, 0) * x(i, 1));
    REQUIRE(x(i, 6) == x(i, 1) * x(i, 1));
    REQUIRE(x(i, 7) == (x(i, 0) + x(i, 1)) * (x(i, 0) + x(i, 1)));
    REQUIRE(x(i, 8) == x(i, 0) * x(i, 2));
    REQUIRE((x(i, 2) == 0.0 || x(i, 2) == 1.0));
    REQUIRE((x(i, 3) == 0.0 || x(i, 3) == 1.0));
    REQUIRE_THAT(s.delta(i), WithinAbs(4.0 + 3.0 * x(i, 7) + x(i, 8), 1e-12));
  }
  Engine eng2 = make_engine(3, {1});
  const SimSample c = generate_dgp(ModelId::m2, EffectKind::constant, 500, eng2);
  REQUIRE((c.delta.array() == 4.0).all());
  REQUIRE(c.data.x == s.data.x);
}

TEST_CASE("covariate moments", "[sim_lab]") {
  Engine eng = make_engine(11, {2});
  const SimSample s = generate_dgp(ModelId::m1, EffectKind::heterogeneous, 200000, eng);
  const auto& x = s.data.x;
  REQUIRE_THAT(x.col(3).mean(), WithinAbs(0.5, 0.01));
  REQUIRE_THAT(x.col(2).mean(), WithinAbs(0.5, 0.01));
  // given X3 = 1: Var(X1) = 1, given X3 = 0: Var(X1) = 2
  double s1 = 0, ss1 = 0, n1 = 0, s0 = 0, ss0 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double r = x(i, 0) - (x(i, 3) - x(i, 2) + 0.5 * x(i, 2) * x(i, 3));
    if (x(i, 2) == 1.0) {
      s1 += r, ss1 += r * r, ++n1;
    } else {
      s0 += r, ss0 += r * r, ++n0;
    }
  }
  REQUIRE_THAT(ss1 / n1, WithinAbs(1.0, 0.03));
  REQUIRE_THAT(ss0 / n0, WithinAbs(2.0, 0.05));
}

TEST_CASE("specification cells", "[sim_lab]") {
  const ModelSpec both = model_spec_for(EffectKind::heterogeneous, SpecCell::both_correct);
  REQUIRE(both.ps_columns.size() == 7);
  REQUIRE(both.or_columns == std::vector<std::string>{"X1", "X2", "X3", "X4", "S12", "X1X3"});
  const ModelSpec none = model_spec_for(EffectKind::constant, SpecCell::both_wrong);
  REQUIRE(none.ps_columns.size() == 4);
  REQUIRE(none.or_columns.size() == 4);
  REQUIRE(parse_cell("or_correct") == SpecCell::or_correct);
  REQUIRE(parse_model("5b") == ModelId::m5b);
  REQUIRE_THROWS_AS(parse_model("6"), Error);
}

TEST_CASE("constant-effect truths are exactly 4", "[sim_lab]") {
  const TruthEntry t = true_effect(ModelId::m2, EffectKind::constant, 100000, 1);
  REQUIRE(t.att == 4.0);
  REQUIRE(t.atc == 4.0);
  REQUIRE_THROWS_AS(true_effect(ModelId::m2, EffectKind::constant, 1000, 1), Error);
}

TEST_CASE("metric aggregation by hand", "[sim_lab]") {
  std::vector<ReplicateRecord> recs(4);
  const double ests[] = {9.0, 11.0, 10.5, 0.0};
  const double ses[] = {1.0, 0.5, 2.0, 0.0};
  for (int m = 0; m < 3; ++m) {
    recs[m].estimate = ests[m];
    MethodOutcome mo;
    mo.interval = normal_interval(ests[m], ses[m], 0.05);
    recs[m].methods.push_back(mo);
  }
  recs[3].methods.push_back(detail::failed(Method::sandwich, Error(ErrorCode::SingularA, "x")));
  const MetricsRow row = detail::aggregate(recs, 0, 10.0);
  REQUIRE(row.n_success == 3);
  REQUIRE(row.n_failures == 1);
  REQUIRE_THAT(row.mean_estimate, WithinAbs(30.5 / 3.0, 1e-12));
  REQUIRE_THAT(row.bias_pct, WithinAbs(100.0 * (30.5 / 3.0 - 10.0) / 10.0, 1e-10));
  REQUIRE_THAT(row.rmse, WithinAbs(std::sqrt((1.0 + 1.0 + 0.25) / 3.0), 1e-12));
  REQUIRE_THAT(row.se_median, WithinAbs(1.0, 1e-12));
  const double m = 30.5 / 3.0;
  const double esd = std::sqrt(((9 - m) * (9 - m) + (11 - m) * (11 - m) + (10.5 - m) * (10.5 - m)) / 2.0);
  REQUIRE_THAT(row.esd, WithinAbs(esd, 1e-12));
  REQUIRE_THAT(row.re_median, WithinAbs(esd * esd / 1.0, 1e-12));
  // 11 +- 0.98 misses 10
  REQUIRE_THAT(row.cp, WithinAbs(2.0 / 3.0, 1e-12));
}

TEST_CASE("Monte Carlo output is worker-independent", "[sim_lab]") {
  SimConfig cfg;
  cfg.model = ModelId::m2;
  cfg.n = 300;
  cfg.replicates_m = 6;
  cfg.bootstrap_r = 30;
  cfg.cells = {SpecCell::both_correct, SpecCell::both_wrong};
  cfg.truth = true_effect(cfg.model, cfg.effect, 100000, 1);
  const SimResult a = run_monte_carlo(cfg);
  cfg.workers = 3;
  const SimResult b = run_monte_carlo(cfg);
  REQUIRE(a.rows.size() == 2 * 2 * 4);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    REQUIRE(a.rows[k].mean_estimate == b.rows[k].mean_estimate);
    REQUIRE(a.rows[k].se_median == b.rows[k].se_median);
    REQUIRE(a.rows[k].cp == b.rows[k].cp);
  }
  // every cell sees the same data
  REQUIRE(a.ps_scores[0].first == a.ps_scores[1].first);
}

TEST_CASE("small-sample failures are reported, never thrown", "[sim_lab]") {
  SimConfig cfg;
  cfg.model = ModelId::m5b;
  cfg.replicates_m = 40;
  cfg.methods = {Method::sandwich};
  cfg.truth = true_effect(cfg.model, cfg.effect, 100000, 1);
  SimResult res;
  REQUIRE_NOTHROW(res = run_monte_carlo(cfg));
  int failures = 0;
  for (const auto& r : res.rows) failures += r.n_failures;
  for (const auto& r : res.rows) REQUIRE(r.n_failures + r.n_success == 40);
  REQUIRE(failures > 0);
}
