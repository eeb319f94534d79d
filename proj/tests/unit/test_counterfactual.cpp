#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "hetdr/counterfactual.hpp"

using namespace hetdr;

namespace {

DesignLayout lag_layout() {
  DesignLayout l;
  l.has_constant = true;
  l.lags = 1;
  l.n_v = 0;
  return l;
}

}  // namespace

TEST_SUITE("counterfactual") {
  TEST_CASE("identity transform and zero projection leave coefficients unchanged") {
    const auto field = testing::synthetic_field({Eigen::Vector2d(0.1, 0.5), Eigen::Vector2d(-0.3, 0.2)}, 10);
    Eigen::MatrixXd z(2, 1);
    z << 1.0, 2.0;
    ProjectionEstimate p;
    p.theta = Eigen::MatrixXd::Constant(2, 1, 0.7);
    const auto same = counterfactual_coefficients(field, {p}, z, CharTransform::identity());
    for (std::size_t i = 0; i < 2; ++i) CHECK(same.cell(i, 0).beta == field.cell(i, 0).beta);

    p.theta.setZero();
    const auto zero = counterfactual_coefficients(field, {p}, z, CharTransform::add_value(0, 3.0));
    for (std::size_t i = 0; i < 2; ++i) CHECK(zero.cell(i, 0).beta == field.cell(i, 0).beta);
  }

  TEST_CASE("shift is theta times the change in characteristics") {
    const auto field = testing::synthetic_field({Eigen::Vector2d(0.1, 0.5)}, 10);
    ProjectionEstimate p;
    p.theta = Eigen::MatrixXd::Constant(2, 1, 2.0);
    const auto out = counterfactual_coefficients(field, {p}, Eigen::MatrixXd::Ones(1, 1), CharTransform::add_value(0, 0.5));
    CHECK((out.cell(0, 0).beta - (field.cell(0, 0).beta + Eigen::Vector2d(1.0, 1.0))).norm() < 1e-14);
    CHECK(out.cell(0, 0).beta_raw == field.cell(0, 0).beta_raw);

    Eigen::MatrixXd z(3, 2);
    z << 1, 0.5, 1, 2.0, 1, 3.5;
    const auto floored = CharTransform::min_value(1, 2.0).apply(z);
    CHECK(floored(0, 1) == 2.0);
    CHECK(floored(1, 1) == 2.0);
    CHECK(floored(2, 1) == 3.5);
    const auto parsed = CharTransform::parse("add:col=z_w,delta=0.5", {"const", "z_w"});
    CHECK(parsed.apply(z)(1, 1) == doctest::Approx(2.5));
  }

  TEST_CASE("distribution averages fitted probabilities") {
    const Link link;
    const double b2 = -link.inverse(0.3);
    auto field = testing::synthetic_field({Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, b2)}, 10);
    const Eigen::MatrixXd rows = Eigen::MatrixXd::Ones(2, 1);
    DistributionOptions off;
    off.bias_correction = false;
    const auto est = estimate_distribution(field, rows, off);
    CHECK(est.values(0) == doctest::Approx(0.4));
    CHECK(est.n_identified[0] == 2);

    for (auto& row : field.cells) row[0].status = CellStatus::AboveRange;
    CHECK(estimate_distribution(field, rows).values(0) == 1.0);
    for (auto& row : field.cells) row[0].status = CellStatus::BelowRange;
    CHECK(estimate_distribution(field, rows).values(0) == 0.0);
  }

  TEST_CASE("nonlinearity bias term") {
    const Link link;
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, 0.4);
    FieldCell c;
    c.status = CellStatus::Converged;
    c.beta = b;
    c.beta_raw = b;
    c.sigma = Eigen::MatrixXd::Constant(1, 1, 3.0);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 1.5);
    const double s = -1.5 * 0.4;
    const double expect = link.cdf(s) - 0.5 * link.d2(s) * 1.5 * 3.0 * 1.5 / 20.0;
    CHECK(unit_contribution(c, x, link, 20.0, true) == doctest::Approx(expect));
    CHECK(unit_contribution(c, x, link, 20.0, false) == doctest::Approx(link.cdf(s)));
  }

  TEST_CASE("flat tax shifts the lag by log(1 - kappa)") {
    Eigen::MatrixXd rows(1, 2);
    rows << 1.0, 0.0;
    CHECK(apply_flat_tax(rows, lag_layout(), 0.0) == rows);
    const auto t = apply_flat_tax(rows, lag_layout(), 0.25);
    CHECK(t(0, 0) == 1.0);
    CHECK(t(0, 1) == doctest::Approx(-0.28768207245178));
    CHECK_THROWS(apply_flat_tax(rows, lag_layout(), 1.0));
  }

  TEST_CASE("progressive tax uses ECDF ranks") {
    Eigen::MatrixXd rows(100, 2);
    for (int i = 0; i < 100; ++i) rows.row(i) << 1.0, 0.1 * (99 - i);
    const auto t = apply_progressive_tax(rows, lag_layout());
    CHECK(t(99, 1) - rows(99, 1) == doctest::Approx(std::log(0.995)));
    CHECK(t(0, 1) - rows(0, 1) == doctest::Approx(std::log(0.5)));

    Eigen::MatrixXd tied(3, 2);
    tied << 1, 2.0, 1, 2.0, 1, 5.0;
    const auto tt = apply_progressive_tax(tied, lag_layout());
    CHECK(tt(0, 1) == tt(1, 1));
    CHECK(tt(0, 1) - 2.0 == doctest::Approx(std::log(1.0 - (2.0 / 3.0) / 2.0)));
  }

  TEST_CASE("transform parsing") {
    CHECK(CovariateTransform::parse("none").is_identity());
    CHECK(CovariateTransform::parse("flat:0.25").kappa == doctest::Approx(0.25));
    CHECK(CovariateTransform::parse("prog").kind == CovariateTransform::Kind::ProgressiveTax);
    CHECK_THROWS(CovariateTransform::parse("flat:abc"));
    CHECK_THROWS(CharTransform::parse("add:col=nope,delta=1", {"a"}));
  }
}
