#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "hetdr/debias.hpp"

using namespace hetdr;

namespace {

Eigen::MatrixXd ar1_scores(int t, double phi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd s(t, 1);
  double x = normal(rng) / std::sqrt(1 - phi * phi);
  for (int k = 0; k < t; ++k) {
    x = phi * x + normal(rng);
    s(k, 0) = x;
  }
  return s;
}

}  // namespace

TEST_SUITE("debias") {
  TEST_CASE("Newey-West with no lags is the outer-product mean") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd s(50, 3);
    for (int i = 0; i < s.size(); ++i) s.data()[i] = normal(rng);
    const auto lrv = newey_west(s, 0);
    CHECK((lrv.xi - s.transpose() * s / 50.0).norm() < 1e-12);
  }

  TEST_CASE("Newey-West hand computation") {
    Eigen::MatrixXd s(4, 1);
    s << 1, -1, 2, 0;
    // L = 2: weights 1 - h/2 -> h=1 weight 0.5, h=2 weight 0
    const double g0 = (1 + 1 + 4 + 0) / 4.0;
    const double g1 = (-1 * 1 + 2 * -1 + 0 * 2) / 4.0;
    CHECK(newey_west(s, 2).xi(0, 0) == doctest::Approx(g0 + 2 * 0.5 * g1));
  }

  TEST_CASE("Newey-West on i.i.d. scores") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd s(10000, 2);
    for (int i = 0; i < s.size(); ++i) s.data()[i] = normal(rng);
    const auto xi = newey_west(s, 5).xi;
    CHECK((xi - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 0.08);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(xi).eigenvalues().minCoeff() > -1e-10);
  }

  TEST_CASE("Newey-West approaches the AR(1) long-run variance") {
    const double lrv = 1.0 / ((1 - 0.5) * (1 - 0.5));
    double small = 0, large = 0;
    for (int r = 0; r < 20; ++r) {
      const auto s = ar1_scores(1000, 0.5, 10 + r);
      small += newey_west(s, default_nw_lags(1000)).xi(0, 0) / 20;
    }
    for (int r = 0; r < 4; ++r) {
      const auto s = ar1_scores(200000, 0.5, 50 + r);
      large += newey_west(s, default_nw_lags(200000)).xi(0, 0) / 4;
    }
    CHECK(std::abs(large - lrv) < std::abs(small - lrv));
    CHECK(std::abs(large - lrv) < 0.25);
    CHECK(default_nw_lags(1000) == 10);
    CHECK(default_nw_lags(999) == 9);
  }

  TEST_CASE("sandwich of the Bernoulli MLE") {
    Eigen::VectorXd y(10);
    y << 0, 0, 0, 1, 1, 1, 1, 1, 1, 1;
    const auto d = testing::make_design(Eigen::MatrixXd::Ones(10, 1), y);
    const auto f = fit_unit_threshold(d, 0.5, Link());
    const double p = 0.3;
    CHECK(sandwich_variance(f, newey_west(f.scores, 0))(0, 0) == doctest::Approx(1.0 / (p * (1 - p))).epsilon(1e-8));

    LongRunVariance id;
    id.xi = Eigen::Matrix2d::Identity();
    CHECK(sandwich_variance(Eigen::Matrix2d::Identity(), id).isApprox(Eigen::Matrix2d::Identity()));
  }

  TEST_CASE("sandwich matches the sampling variance") {
    const Link link(LinkKind::Probit);
    const Eigen::Vector2d beta(0.2, -0.6);
    const int T = 2000, R = 1000;
    Eigen::MatrixXd draws(R, 2);
    Eigen::Matrix2d mean_sigma = Eigen::Matrix2d::Zero();
    for (int r = 0; r < R; ++r) {
      const auto d = testing::binary_design(beta, T, 1000 + r, link);
      const auto f = fit_unit_threshold(d, 0.5, link);
      draws.row(r) = f.beta.transpose();
      mean_sigma += sandwich_variance(f, newey_west(f.scores, 0)) / R;
    }
    const Eigen::RowVector2d mu = draws.colwise().mean();
    const Eigen::Matrix2d emp = (draws.rowwise() - mu).transpose() * (draws.rowwise() - mu) / (R - 1);
    for (int k = 0; k < 2; ++k) CHECK(mean_sigma(k, k) / T == doctest::Approx(emp(k, k)).epsilon(0.10));
  }

  TEST_CASE("bias vanishes relative to sampling noise on long series") {
    const Link link(LinkKind::Logit);
    const Eigen::Vector2d beta(0.5, 1.0);
    const int T = 5000, R = 200;
    Eigen::MatrixXd dev(R, 2);
    Eigen::Vector2d bias = Eigen::Vector2d::Zero();
    for (int r = 0; r < R; ++r) {
      const auto d = testing::binary_design(beta, T, 7000 + r, link);
      const auto f = fit_unit_threshold(d, 0.5, link);
      dev.row(r) = (f.beta - beta).transpose();
      bias += analytical_bias(d, f, link, 0) / R;
    }
    const Eigen::RowVector2d mu = dev.colwise().mean();
    for (int k = 0; k < 2; ++k) {
      const double sd = std::sqrt((dev.col(k).array() - mu(k)).square().sum() / (R - 1));
      CHECK(std::abs(bias(k) / T) < 10 * sd / std::sqrt(double(R)));
    }
  }

  TEST_CASE("analytical correction subtracts B/T and a second pass moves less") {
    const Link link(LinkKind::Logit);
    std::vector<UnitDesign> ds{testing::binary_design(Eigen::Vector2d(0.3, 0.9), 60, 21, link)};
    auto field = fit_field(ds, ThresholdGrid({0.5}), link);
    attach_sandwiches(field, 0);
    const auto once = debias_analytical(field, 0);
    const auto& c = field.cell(0, 0);
    const Eigen::VectorXd b = analytical_bias(ds[0], 0.5, link, c.beta, 0);
    CHECK((once.cell(0, 0).beta - (c.beta - b / 60.0)).norm() < 1e-12);
    CHECK(once.cell(0, 0).beta_raw.isApprox(c.beta_raw));
    const auto twice = debias_analytical(once, 0);
    const double first = (once.cell(0, 0).beta - c.beta).norm();
    const double second = (twice.cell(0, 0).beta - once.cell(0, 0).beta).norm();
    CHECK(second < first);
    CHECK(once.correction == "analytical");
  }

  TEST_CASE("jackknife on duplicated halves leaves the estimate unchanged") {
    const Link link(LinkKind::Logit);
    const auto half = testing::binary_design(Eigen::Vector2d(-0.1, 0.7), 40, 33, link);
    Eigen::MatrixXd x(80, 2);
    Eigen::VectorXd y(80);
    x << half.x, half.x;
    y << half.y, half.y;
    const std::vector<UnitDesign> ds{testing::make_design(x, y)};
    const auto jk = debias_jackknife(ds, ThresholdGrid({0.5}), link);
    REQUIRE(jk.cell(0, 0).status == CellStatus::Converged);
    CHECK((jk.cell(0, 0).beta - jk.cell(0, 0).beta_raw).norm() < 1e-7);
  }

  TEST_CASE("jackknife formula and odd windows") {
    const Link link(LinkKind::Logit);
    const auto d = testing::binary_design(Eigen::Vector2d(0.2, 0.8), 81, 8, link);
    const auto jk = debias_jackknife({d}, ThresholdGrid({0.5}), link);
    REQUIRE(jk.cell(0, 0).status == CellStatus::Converged);
    const auto full = fit_unit_threshold(d, 0.5, link);
    const auto a = fit_unit_threshold(slice_design(d, 1, 41), 0.5, link);
    const auto b = fit_unit_threshold(slice_design(d, 41, 81), 0.5, link);
    CHECK((jk.cell(0, 0).beta - (2 * full.beta - 0.5 * (a.beta + b.beta))).norm() < 1e-7);
  }

  TEST_CASE("parse and names") {
    CHECK(parse_debias("jackknife") == DebiasMethod::Jackknife);
    CHECK(to_string(DebiasMethod::Analytical) == "analytical");
    CHECK_THROWS(parse_debias("bootstrap"));
  }
}
