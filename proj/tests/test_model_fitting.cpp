#include <catch2/catch_amalgamated.hpp>

#include "drvar/model_fitting.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace drvar;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("logistic fit matches plain Newton-Raphson", "[model_fitting]") {
  for (std::uint64_t s = 1; s <= 10; ++s) {
    const auto d = testing::random_analysis(s, 150, 3);
    const PSFit fit = fit_logistic(d.v, d.z);
    const VectorXd ref = oracle::logistic_fit(d.v.values, d.z);
    REQUIRE(fit.converged);
    REQUIRE((fit.beta - ref).lpNorm<Eigen::Infinity>() < 1e-7);
    REQUIRE(score_logistic(fit, d.v, d.z).colwise().sum().lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("intercept-only logistic recovers the treated share", "[model_fitting]") {
  VectorXd z(10);
  z << 1, 1, 1, 0, 0, 0, 0, 0, 0, 0;
  const PSFit fit = fit_logistic(intercept_only(10), z);
  REQUIRE_THAT(fit.beta(0), WithinAbs(std::log(3.0 / 7.0), 1e-10));
  REQUIRE_THAT(fit.fitted(0), WithinAbs(0.3, 1e-12));
}

TEST_CASE("perfect separation is reported", "[model_fitting]") {
  DesignMatrix v{MatrixXd(8, 2), {"(Intercept)", "x"}, true};
  VectorXd z(8);
  for (int i = 0; i < 8; ++i) {
    v.values(i, 0) = 1.0;
    v.values(i, 1) = i;
    z(i) = i >= 4 ? 1.0 : 0.0;
  }
  try {
    fit_logistic(v, z);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::NonConvergence);
  }
}

TEST_CASE("collinear propensity design", "[model_fitting]") {
  auto d = testing::random_analysis(3, 60, 2);
  d.v.values.col(2) = 2.0 * d.v.values.col(1);
  try {
    fit_logistic(d.v, d.z);
    FAIL("expected an error");
  } catch (const Error& e) {
    REQUIRE(e.code() == ErrorCode::SingularInformation);
  }
}

TEST_CASE("arm-wise OLS matches the pseudoinverse solution", "[model_fitting]") {
  const auto d = testing::random_analysis(7, 120, 4);
  for (int arm : {0, 1}) {
    const ORFit fit = fit_ols_arm(d.w, d.y, d.z, arm);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      if (d.z(i) == arm) rows.push_back(i);
    }
    MatrixXd x(static_cast<Eigen::Index>(rows.size()), d.w.cols());
    VectorXd y(x.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = d.w.values.row(rows[r]);
      y(static_cast<Eigen::Index>(r)) = d.y(rows[r]);
    }
    const VectorXd ref = oracle::ols_pinv(x, y);
    REQUIRE((fit.alpha - ref).lpNorm<Eigen::Infinity>() < 1e-9);
    REQUIRE((fit.fitted_all - d.w.values * ref).lpNorm<Eigen::Infinity>() < 1e-9);
    REQUIRE(fit.arm == arm);
  }
}

TEST_CASE("weighted Gram matches the loop oracle", "[model_fitting]") {
  const auto d = testing::random_analysis(9, 40, 3);
  const VectorXd w = VectorXd::LinSpaced(40, 0.1, 2.0);
  REQUIRE((detail::weighted_gram(d.v.values, w) - oracle::gram(d.v.values, w)).norm() < 1e-10);
}

TEST_CASE("OLS failures", "[model_fitting]") {
  auto d = testing::random_analysis(11, 40, 2);
  SECTION("too few units in the arm") {
    VectorXd z = VectorXd::Zero(40);
    z(0) = z(1) = z(2) = 1.0;
    try {
      fit_ols_arm(d.w, d.y, z, 1);
      FAIL("expected an error");
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::ArmTooSmall);
    }
  }
  SECTION("collinear columns") {
    d.w.values.col(2) = d.w.values.col(1) * 3.0 + d.w.values.col(0);
    try {
      fit_ols_arm(d.w, d.y, d.z, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      REQUIRE(e.code() == ErrorCode::RankDeficient);
    }
  }
}

TEST_CASE("warm start reaches the same optimum", "[model_fitting]") {
  const auto d = testing::random_analysis(5, 200, 3);
  const PSFit cold = fit_logistic(d.v, d.z);
  IrlsOptions opt;
  opt.start = cold.beta;
  const PSFit warm = fit_logistic(d.v, d.z, opt);
  REQUIRE(warm.iterations == 0);
  REQUIRE_THAT((warm.beta - cold.beta).norm(), WithinAbs(0.0, 1e-12));
}
