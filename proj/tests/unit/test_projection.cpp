#include "doctest.h"
#include "helpers.hpp"
#include "hetdr/error.hpp"
#include "hetdr/projection.hpp"

using namespace hetdr;

namespace {

std::vector<Eigen::VectorXd> scalars(std::initializer_list<double> v) {
  std::vector<Eigen::VectorXd> out;
  for (double x : v) out.push_back(Eigen::VectorXd::Constant(1, x));
  return out;
}

}  // namespace

TEST_SUITE("projection") {
  TEST_CASE("homogeneous field projects onto the constant") {
    const Eigen::Vector2d b(0.3, -0.7);
    const auto field = testing::synthetic_field({b, b, b, b}, 20);
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(4, 1);
    const auto p = project(field, one, one, 0);
    CHECK((p.theta.col(0) - b).norm() < 1e-12);
    CHECK(p.gamma.norm() < 1e-12);
    CHECK(p.units.size() == 4);
  }

  TEST_CASE("just-identified scalar case is OLS through the origin") {
    const auto field = testing::synthetic_field(scalars({2.0, 3.5, 7.0}), 20);
    Eigen::MatrixXd z(3, 1);
    z << 1, 2, 3;
    const auto p = project(field, z, z, 0);
    CHECK(p.theta(0, 0) == doctest::Approx(30.0 / 14.0));
    CHECK(p.gamma(0, 0) == doctest::Approx(2.0 - 30.0 / 14.0));
  }

  TEST_CASE("exactly identified IV matches the direct solve") {
    std::vector<Eigen::VectorXd> betas;
    Eigen::MatrixXd z(5, 2), w(5, 2);
    const double zv[] = {0.5, 1.2, -0.3, 2.0, 0.9}, wv[] = {1.0, 0.4, -1.1, 1.7, 0.2};
    Eigen::MatrixXd bm(5, 3);
    bm << 0.1, 1.0, -0.5, 0.4, 0.2, 0.3, -0.2, -0.8, 0.9, 1.1, 0.6, 0.0, 0.3, -0.1, 0.25;
    for (int i = 0; i < 5; ++i) {
      z.row(i) << 1, zv[i];
      w.row(i) << 1, wv[i];
      betas.push_back(bm.row(i).transpose());
    }
    const auto field = testing::synthetic_field(betas, 30);
    const auto p = project(field, z, w, 0);
    const Eigen::MatrixXd direct = (bm.transpose() * w) * (z.transpose() * w).inverse();
    CHECK((p.theta - direct).norm() < 1e-10);

    ProjectionMoments m(bm, z, w);
    CHECK((m.theta() - direct).norm() < 1e-10);
    // integer weights reproduce a duplicated sample
    Eigen::VectorXd c(5);
    c << 2, 0, 1, 1, 3;
    Eigen::MatrixXd bd(7, 3), zd(7, 2), wd(7, 2);
    int r = 0;
    for (int i = 0; i < 5; ++i)
      for (int k = 0; k < c(i); ++k, ++r) {
        bd.row(r) = bm.row(i);
        zd.row(r) = z.row(i);
        wd.row(r) = w.row(i);
      }
    CHECK((m.theta(c) - ProjectionMoments(bd, zd, wd).theta()).norm() < 1e-10);
  }

  TEST_CASE("rank-deficient characteristics throw") {
    const auto field = testing::synthetic_field(scalars({1.0, 2.0, 3.0}), 20);
    Eigen::MatrixXd z(3, 2);
    z << 1, 2, 1, 2, 1, 2;
    CHECK_THROWS_AS(project(field, z, z, 0), Error);
  }

  TEST_CASE("plug-in variances") {
    const double s2 = 2.5;
    const auto field = testing::synthetic_field(scalars({0.7, 0.7, 0.7}), 25, Eigen::MatrixXd::Constant(1, 1, s2));
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(3, 1);
    const auto p = project(field, one, one, 0);
    const auto v = plugin_variances(field, p, one);
    CHECK(v.v_gamma.norm() < 1e-20);
    CHECK(v.v_psi(0, 0) == doctest::Approx(s2));
    CHECK(v.sigma_under(0, 0) == doctest::Approx(s2 / (3 * 25)));
    CHECK(v.sigma_over(0, 0) == doctest::Approx(v.sigma_under(0, 0)));

    // heterogeneous coefficients: V_γ is the variance of the β_i around θ
    const auto het = testing::synthetic_field(scalars({0.0, 1.0, 2.0}), 25, Eigen::MatrixXd::Constant(1, 1, s2));
    const auto ph = project(het, one, one, 0);
    const auto vh = plugin_variances(het, ph, one);
    CHECK(vh.v_gamma(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(vh.sigma_over(0, 0) > vh.sigma_under(0, 0));
  }

  TEST_CASE("vec layout of the Kronecker product") {
    // d_x = 2, d_z = 1: V_ψ equals the average Σ_i when S'w = 1
    Eigen::Matrix2d sig;
    sig << 1.0, 0.3, 0.3, 2.0;
    const Eigen::Vector2d b(0.1, 0.2);
    const auto field = testing::synthetic_field({b, b}, 10, sig);
    const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(2, 1);
    const auto v = plugin_variances(field, project(field, one, one, 0), one);
    CHECK((v.v_psi - sig).norm() < 1e-12);
  }
}
