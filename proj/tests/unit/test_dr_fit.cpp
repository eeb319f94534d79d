#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "hetdr/debias.hpp"
#include "hetdr/dr_fit.hpp"

using namespace hetdr;

TEST_SUITE("dr_fit") {
  TEST_CASE("intercept-only logit solves the sample frequency") {
    Eigen::VectorXd y(10);
    y << 0, 0, 0, 0, 1, 1, 1, 1, 1, 1;  // four indicators 1{y <= 0.5}
    const auto d = testing::make_design(Eigen::MatrixXd::Ones(10, 1), y);
    const auto f = fit_unit_threshold(d, 0.5, Link(LinkKind::Logit));
    CHECK(f.status == FitStatus::Converged);
    CHECK(f.beta(0) == doctest::Approx(std::log(1.5)).epsilon(1e-9));
    CHECK(Link().cdf(-f.beta(0)) == doctest::Approx(0.4).epsilon(1e-9));

    Eigen::VectorXd yb(8);
    yb << 0, 1, 0, 1, 0, 1, 0, 1;
    const auto fb = fit_unit_threshold(testing::make_design(Eigen::MatrixXd::Ones(8, 1), yb), 0.5, Link());
    CHECK(std::abs(fb.beta(0)) < 1e-10);
  }

  TEST_CASE("consistency on a long series") {
    for (auto kind : {LinkKind::Logit, LinkKind::Probit}) {
      const Link link(kind);
      const Eigen::Vector2d beta(0.3, -0.8);
      const auto d = testing::binary_design(beta, 5000, 11, link);
      const auto f = fit_unit_threshold(d, 0.5, link);
      REQUIRE(f.status == FitStatus::Converged);
      const Eigen::MatrixXd v = f.hessian.inverse() / 5000.0;
      for (int k = 0; k < 2; ++k) CHECK(std::abs(f.beta(k) - beta(k)) < 3.0 * std::sqrt(v(k, k)));
    }
  }

  TEST_CASE("scores vanish at the optimum and the Hessian matches finite differences") {
    const Link link(LinkKind::Probit);
    const auto d = testing::binary_design(Eigen::Vector2d(-0.2, 0.5), 400, 3, link);
    const auto f = fit_unit_threshold(d, 0.5, link);
    CHECK(f.scores.colwise().mean().norm() < 1e-8);
    const double h = 1e-5;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd bp = f.beta, bm = f.beta;
      bp(k) += h;
      bm(k) -= h;
      const Eigen::VectorXd gp = score_hessian(d, 0.5, link, bp).scores.colwise().mean();
      const Eigen::VectorXd gm = score_hessian(d, 0.5, link, bm).scores.colwise().mean();
      const Eigen::VectorXd col = -(gp - gm) / (2 * h);
      CHECK((col - f.hessian.col(k)).norm() < 1e-6);
    }
  }

  TEST_CASE("field bookkeeping") {
    std::vector<UnitDesign> ds;
    for (std::uint64_t s = 0; s < 2; ++s) {
      std::mt19937_64 rng(s + 100);
      std::normal_distribution<double> normal;
      Eigen::MatrixXd x(40, 2);
      Eigen::VectorXd y(40);
      for (int t = 0; t < 40; ++t) {
        x(t, 0) = 1;
        x(t, 1) = normal(rng);
        y(t) = 5 + 2 * normal(rng);
      }
      ds.push_back(testing::make_design(x, y));
    }
    const ThresholdGrid grid({4.0, 5.0, 6.0});
    auto field = fit_field(ds, grid, Link());
    std::size_t fits = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      fits += field.fits[i].size();
      for (std::size_t j = 0; j < 3; ++j) CHECK(field.cell(i, j).status == CellStatus::Converged);
    }
    CHECK(fits == 6);

    // above one unit's maximum: no fit attempted
    const double top = ds[0].max_outcome();
    const auto high = fit_field(ds, ThresholdGrid({top}), Link());
    CHECK(high.cell(0, 0).status == CellStatus::AboveRange);
    CHECK(high.cell(0, 0).fit == -1);
    CHECK_FALSE(high.cell(0, 0).has_beta());

    // grid points sharing an indicator pattern share one fit
    const auto shared = fit_field(ds, ThresholdGrid({5.0, 5.0 + 1e-9}), Link());
    CHECK(shared.fits[0].size() == 1);
    CHECK(shared.cell(0, 0).fit == shared.cell(0, 1).fit);
  }

  TEST_CASE("separated cell is isolated") {
    std::vector<UnitDesign> ds;
    Eigen::MatrixXd x(20, 2);
    Eigen::VectorXd y(20);
    for (int t = 0; t < 20; ++t) {
      x(t, 0) = 1;
      x(t, 1) = t;
      y(t) = t;  // 1{y <= 9.5} is perfectly predicted by x
    }
    ds.push_back(testing::make_design(x, y));
    ds.push_back(testing::binary_design(Eigen::Vector2d(0.1, 0.4), 60, 9, Link()));
    FitOptions opts;
    opts.log_failures = false;
    const auto field = fit_field(ds, ThresholdGrid({0.5}), Link(), opts);
    CHECK(field.cell(0, 0).status != CellStatus::Converged);
    CHECK_FALSE(field.cell(0, 0).usable());
    CHECK(field.cell(1, 0).status == CellStatus::Converged);
    const auto sep = fit_field({ds[0]}, ThresholdGrid({9.5}), Link(), opts);
    CHECK(sep.cell(0, 0).status == CellStatus::Separated);
  }

  TEST_CASE("beta_at is a right-continuous step") {
    const auto d = testing::binary_design(Eigen::Vector2d(0.0, 1.0), 100, 4, Link());
    Eigen::VectorXd y(100);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal;
    for (int t = 0; t < 100; ++t) y(t) = normal(rng);
    const auto dd = testing::make_design(d.x, y);
    const auto field = fit_field({dd}, ThresholdGrid({-0.5, 0.5}), Link());
    CHECK_FALSE(field.beta_at(0, -0.6).has_value());
    CHECK(field.beta_at(0, -0.5)->isApprox(field.cell(0, 0).beta));
    CHECK(field.beta_at(0, 0.2)->isApprox(field.cell(0, 0).beta));
    CHECK(field.beta_at(0, 0.7)->isApprox(field.cell(0, 1).beta));
  }
}
