#include <catch2/catch_amalgamated.hpp>

#include "drvar/analysis.hpp"
#include "drvar/resampling_bootstrap.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace drvar;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("bootstrap replicates are worker-independent", "[resampling]") {
  const auto d = testing::random_analysis(41, 150, 3);
  const Estimand est = Estimand::att();
  const double tau = refit_estimate(d, est, EstimatorKind::doubly_robust);
  BootstrapOptions opt;
  opt.replicates = 60;
  opt.seed = 17;
  const BootstrapResult a = standard_bootstrap(d, est, tau, opt);
  opt.workers = 3;
  const BootstrapResult b = standard_bootstrap(d, est, tau, opt);
  REQUIRE(a.draws.estimates == b.draws.estimates);
  REQUIRE(a.se == b.se);
  REQUIRE(a.draws.n_failures() == 0);
  REQUIRE_THAT(a.interval.estimate, WithinAbs(tau, 0.0));
}

TEST_CASE("bootstrap replicate equals a refit on the drawn rows", "[resampling]") {
  const auto d = testing::random_analysis(43, 80, 2);
  const Estimand est = Estimand::atc();
  BootstrapOptions opt;
  opt.replicates = 5;
  opt.seed = 23;
  const BootstrapResult res = standard_bootstrap(d, est, 0.0, opt);
  Engine eng = make_engine(opt.seed, {0x5245u, 0});
  const auto rows = detail::draw_rows(d.size(), eng);
  const double ref = refit_estimate(resample(d, rows), est, EstimatorKind::doubly_robust);
  REQUIRE_THAT(res.draws.estimates[0], WithinAbs(ref, 1e-9));
  std::vector<double> v = res.draws.estimates;
  double m = 0.0;
  for (double x : v) m += x;
  m /= 5.0;
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  REQUIRE_THAT(res.se, WithinRel(std::sqrt(ss / 4.0), 1e-12));
}

TEST_CASE("multi-estimand bootstrap matches single runs", "[resampling]") {
  const auto d = testing::random_analysis(47, 120, 3);
  BootstrapOptions opt;
  opt.replicates = 40;
  opt.seed = 5;
  const std::array<Estimand, 2> ests{Estimand::att(), Estimand::atc()};
  const std::array<double, 2> orig{0.0, 0.0};
  const auto multi = standard_bootstrap_multi(d, ests, orig, opt);
  for (std::size_t k = 0; k < 2; ++k) {
    const BootstrapResult single = standard_bootstrap(d, ests[k], 0.0, opt);
    REQUIRE(multi[k].result->draws.estimates == single.draws.estimates);
  }
}

TEST_CASE("too many failing replicates", "[resampling]") {
  // Six units: most resamples lose an arm or leave too few controls.
  Dataset ds;
  ds.x.resize(6, 1);
  ds.x << 0.1, -0.3, 0.5, 0.2, -0.1, 0.4;
  ds.y.resize(6);
  ds.y << 1, 2, 3, 4, 5, 6;
  ds.z.resize(6);
  ds.z << 1, 0, 0, 1, 0, 1;
  ds.columns = {"x"};
  const AnalysisData d = prepare(ds, {{"x"}, {"x"}});
  BootstrapOptions opt;
  opt.replicates = 50;
  opt.seed = 1;
  opt.min_success_fraction = 0.99;
  try {
    standard_bootstrap(d, Estimand::att(), 0.0, opt);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::TooManyFailures);
    REQUIRE(std::string(e.what()).find("replicates failed") != std::string::npos);
  }
}

TEST_CASE("rows drawn uniformly", "[resampling]") {
  Engine eng = make_engine(9, {1});
  std::vector<int> counts(10, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    for (auto r : detail::draw_rows(10, eng)) ++counts[static_cast<std::size_t>(r)];
  }
  for (int c : counts) REQUIRE(std::abs(c - 2000) < 200);
}

TEST_CASE("analysis runs every method", "[resampling][analysis]") {
  const auto d = testing::random_analysis(53, 300, 3);
  AnalysisOptions opt;
  opt.replicates = 200;
  opt.seed = 7;
  const std::array<Estimand, 2> ests{Estimand::att(), Estimand::atc()};
  const AnalysisResult res = analyze(d, ests, opt);
  REQUIRE(res.ps);
  for (const auto& rep : res.estimands) {
    REQUIRE(rep.point);
    REQUIRE(rep.methods.size() == 4);
    for (const auto& mo : rep.methods) {
      REQUIRE(mo.interval);
      REQUIRE(mo.interval->se > 0.0);
      REQUIRE(mo.interval->estimate == rep.point->point.value);
    }
    // the four SEs estimate the same quantity
    const double s0 = rep.methods[0].interval->se;
    for (const auto& mo : rep.methods) REQUIRE(mo.interval->se / s0 == Catch::Approx(1.0).margin(0.35));
  }
}

TEST_CASE("weighting estimator with wild bootstrap is rejected per method", "[analysis]") {
  const auto d = testing::random_analysis(59, 100, 2);
  AnalysisOptions opt;
  opt.estimator = EstimatorKind::weighting;
  opt.replicates = 50;
  const std::array<Estimand, 1> ests{Estimand::ate()};
  const AnalysisResult res = analyze(d, ests, opt);
  const auto& m = res.estimands[0].methods;
  REQUIRE(m[0].interval);
  REQUIRE(m[1].error);
  REQUIRE(m[1].error->code() == ErrorCode::InvalidArgument);
  REQUIRE(m[3].interval);
}
