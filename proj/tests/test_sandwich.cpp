#include <catch2/catch_amalgamated.hpp>

#include "drvar/analysis.hpp"
#include "drvar/sandwich.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace drvar;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

struct Fitted {
  SandwichProblem prob;
  ThetaStack theta;
  oracle::StackedPsi ref;
  double estimate = 0.0;
};

Fitted fitted(std::uint64_t seed, Eigen::Index n, int p, const Estimand& est, bool dr) {
  const auto d = testing::random_analysis(seed, n, p);
  const PSFit ps = fit_logistic(d.v, d.z);
  Fitted f;
  oracle::StackedPsi ref;
  ref.target = est.kind == EstimandKind::ATT ? oracle::Target::att : oracle::Target::atc;
  ref.dr = dr;
  ref.v = d.v.values;
  ref.w = d.w.values;
  ref.y = d.y;
  ref.z = d.z;
  f.ref = ref;
  if (dr) {
    const ORFit opp = fit_opposite(d, est);
    const auto pt = point_estimate(d, ps, &opp, est, EstimatorKind::doubly_robust).point;
    f.prob = make_dr_problem(est, d.v, d.w, d.y, d.z);
    f.theta = make_theta(f.prob, ps.beta, opp.alpha, pt.mu1, pt.mu0);
    f.estimate = pt.value;
  } else {
    const auto pt = point_estimate(d, ps, nullptr, est, EstimatorKind::weighting).point;
    f.prob = make_wate_problem(est, d.v, d.y, d.z);
    f.theta = make_theta(f.prob, ps.beta, VectorXd(), pt.mu1, pt.mu0);
    f.estimate = pt.value;
  }
  return f;
}

}  // namespace

TEST_CASE("stacked Psi agrees with the per-unit oracle", "[sandwich]") {
  for (const bool dr : {true, false}) {
    for (const Estimand est : {Estimand::att(), Estimand::atc()}) {
      const Fitted f = fitted(21, 90, 3, est, dr);
      const MatrixXd psi = stack_psi(f.prob, f.theta.values);
      for (Eigen::Index i = 0; i < f.prob.n(); ++i) {
        REQUIRE((psi.row(i).transpose() - f.ref.unit(i, f.theta.values)).norm() < 1e-12);
      }
    }
  }
}

TEST_CASE("Psi column sums vanish at theta-hat", "[sandwich][invariant]") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    for (const bool dr : {true, false}) {
      for (const Estimand est : {Estimand::att(), Estimand::atc()}) {
        const Fitted f = fitted(s, 100, 3, est, dr);
        const MatrixXd psi = stack_psi(f.prob, f.theta.values);
        const double scale = psi.cwiseAbs().colwise().sum().maxCoeff();
        REQUIRE(psi.colwise().sum().lpNorm<Eigen::Infinity>() < 1e-8 * scale);
      }
    }
  }
}

TEST_CASE("closed-form A matches the finite-difference Jacobian", "[sandwich]") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    for (const bool dr : {true, false}) {
      for (const Estimand est : {Estimand::att(), Estimand::atc()}) {
        const Fitted f = fitted(s * 13, 60 + 10 * s, 2 + s % 3, est, dr);
        const MatrixXd a = assemble_A_closed_form(f.prob, f.theta.values);
        const MatrixXd a_fd = oracle::numeric_A(f.ref, f.theta.values);
        REQUIRE((a - a_fd).norm() / a_fd.norm() < 1e-6);
        // also away from theta-hat
        VectorXd off = f.theta.values;
        off.array() += 0.05;
        REQUIRE((assemble_A_closed_form(f.prob, off) - oracle::numeric_A(f.ref, off)).norm() /
                    oracle::numeric_A(f.ref, off).norm() <
                1e-6);
      }
    }
  }
}

TEST_CASE("sandwich SE matches the numeric sandwich", "[sandwich]") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    for (const Estimand est : {Estimand::att(), Estimand::atc()}) {
      const Fitted f = fitted(s, 150, 3, est, true);
      const SandwichResult r = sandwich_variance(f.prob, f.theta);
      REQUIRE_THAT(r.se, WithinRel(oracle::numeric_sandwich_se(f.ref, f.theta.values), 1e-5));
      REQUIRE_THAT(r.interval.estimate, WithinAbs(f.estimate, 1e-12));
      REQUIRE(r.interval.low < r.interval.estimate);
    }
  }
}

TEST_CASE("B is the mean outer product", "[sandwich]") {
  const Fitted f = fitted(3, 50, 2, Estimand::att(), true);
  const MatrixXd psi = stack_psi(f.prob, f.theta.values);
  REQUIRE((assemble_B(psi) - oracle::meat(f.ref, f.theta.values)).norm() < 1e-10);
}

TEST_CASE("sandwich parts reproduce the scalar variance", "[sandwich]") {
  const Fitted f = fitted(8, 120, 3, Estimand::atc(), true);
  const SandwichParts parts = sandwich_parts(f.prob, f.theta.values);
  const double var = f.theta.contrast.dot(parts.sigma * f.theta.contrast) / 120.0;
  REQUIRE_THAT(sandwich_variance(f.prob, f.theta).variance, WithinRel(var, 1e-9));
}

TEST_CASE("singular A is reported", "[sandwich]") {
  MatrixXd a = MatrixXd::Identity(3, 3);
  a(2, 2) = 0.0;
  try {
    sandwich_se(a, MatrixXd::Identity(3, 3), VectorXd::Ones(3), 10);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::SingularA);
  }
}

TEST_CASE("sandwich SE is invariant to the units of Y", "[sandwich]") {
  auto f = fitted(5, 100, 3, Estimand::att(), true);
  const double se = sandwich_variance(f.prob, f.theta).se;
  f.prob.y *= 1000.0;
  const auto p = f.prob.p();
  const auto q = f.prob.q();
  f.theta.values.segment(p, q + 2) *= 1000.0;
  REQUIRE_THAT(sandwich_variance(f.prob, f.theta).se, WithinRel(1000.0 * se, 1e-8));
}
