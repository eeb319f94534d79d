#include <cmath>

#include "doctest.h"
#include "hetdr/error.hpp"
#include "hetdr/panel.hpp"

using namespace hetdr;

TEST_SUITE("panel") {
  TEST_CASE("two units by three periods") {
    const auto ds = parse_panel("unit,time,y,z_edu\na,1,0.1,12\na,2,0.2,12\na,3,0.3,12\nb,1,1,16\nb,2,2,16\nb,3,3,16\n");
    CHECK(ds.size() == 2);
    CHECK(ds.units[0].periods() == 3);
    CHECK(ds.units[1].periods() == 3);
    CHECK(ds.z_names == std::vector<std::string>{"const", "z_edu"});
    CHECK(ds.z(1, 1) == 16.0);
    CHECK(ds.w.isApprox(ds.z));
  }

  TEST_CASE("rows are sorted by time within units") {
    const auto ds = parse_panel("unit,time,y\na,3,0.3\na,1,0.1\na,2,0.2\n");
    CHECK(ds.units[0].y == std::vector<double>{0.1, 0.2, 0.3});
  }

  TEST_CASE("invariant violations") {
    auto code = [](const std::string& csv) {
      try {
        parse_panel(csv);
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::InvalidArgument;
    };
    CHECK(code("unit,time,y\nu1,1,1\nu1,2,2\nu1,2,3\n") == ErrorCode::DuplicateKey);
    CHECK(code("unit,time,y,z_a\nu1,1,1,0\nu1,2,2,1\n") == ErrorCode::NonConstantCharacteristic);
    CHECK(code("unit,time,y\nu1,1,1\nu1,3,2\n") == ErrorCode::MissingObservation);
    CHECK(code("unit,time\nu1,1\n") == ErrorCode::MissingColumn);
    CHECK(code("unit,time,y\nu1,1,abc\nu1,2,1\n") == ErrorCode::ParseError);
    CHECK(code("unit,time,y\n") == ErrorCode::EmptyPanel);
  }

  TEST_CASE("explicit instruments") {
    const auto ds = parse_panel("unit,time,y,z_a,w_b,w_c\nu,1,1,2,3,4\nu,2,2,2,3,4\n");
    CHECK(ds.dim_z() == 2);
    CHECK(ds.dim_w() == 3);
    CHECK(ds.w(0, 2) == 4.0);
  }

  TEST_CASE("design rows") {
    UnitSeries u;
    u.id = "u";
    u.time = {1, 2, 3};
    u.y = {0.1, 0.2, 0.3};
    u.v = Eigen::MatrixXd(3, 1);
    u.v << 5, 6, 7;

    const auto d1 = build_regressors(u, {1, true, false});
    REQUIRE(d1.x.rows() == 2);
    CHECK(d1.x(0, 0) == 1.0);
    CHECK(d1.x(0, 1) == 0.1);
    CHECK(d1.x(1, 1) == 0.2);
    CHECK(d1.y(0) == 0.2);
    CHECK(d1.y(1) == 0.3);
    CHECK(d1.time == std::vector<long>{2, 3});

    const auto d0 = build_regressors(u, {0, true, true});
    REQUIRE(d0.x.rows() == 3);
    CHECK(d0.x(2, 0) == 1.0);
    CHECK(d0.x(2, 1) == 7.0);

    const auto d2 = build_regressors(u, {2, true, false});
    CHECK(d2.x.rows() == 1);
    CHECK(d2.x(0, 1) == 0.2);
    CHECK(d2.x(0, 2) == 0.1);

    CHECK_THROWS_AS(build_regressors(u, {3, true, false}), Error);
  }

  TEST_CASE("pooled grid uses type-1 quantiles") {
    PanelDataset ds;
    UnitSeries a, b;
    a.id = "a";
    a.time = {1, 2};
    a.y = {4, 1};
    b.id = "b";
    b.time = {1, 2};
    b.y = {3, 2};
    ds.units = {a, b};
    const std::vector<double> lv{0.25, 0.75};
    CHECK(pooled_threshold_grid(ds, lv).points == std::vector<double>{1, 3});

    // brute force: smallest order statistic whose ECDF reaches the level
    std::vector<double> pool{1, 2, 3, 4};
    for (double p : {0.1, 0.25, 0.26, 0.5, 0.51, 0.75, 0.99}) {
      double brute = pool.back();
      for (double v : pool) {
        if (std::count_if(pool.begin(), pool.end(), [v](double u) { return u <= v; }) / 4.0 >= p) {
          brute = v;
          break;
        }
      }
      CHECK(empirical_quantile(pool, p) == brute);
    }

    std::vector<double> sym{1, 2, 3, 4, 5};
    CHECK(empirical_quantile(sym, 0.5) == 3.0);

    PanelDataset flat = ds;
    flat.units[0].y = {2, 2};
    flat.units[1].y = {2, 2};
    const std::vector<double> many{0.1, 0.5, 0.9};
    CHECK(pooled_threshold_grid(flat, many).size() == 1);
  }

  TEST_CASE("identification is the half-open range") {
    UnitDesign d;
    d.y = Eigen::Vector3d(1, 3, 2);
    CHECK(classify(d, 0.5) == Identification::BelowRange);
    CHECK(classify(d, 3.0) == Identification::AboveRange);
    CHECK(classify(d, 2.0) == Identification::Identified);
    CHECK(classify(d, 1.0) == Identification::Identified);
  }

  TEST_CASE("identification counts") {
    std::vector<UnitDesign> ds(3);
    ds[0].y = Eigen::Vector2d(0, 1);
    ds[1].y = Eigen::Vector2d(1, 2);
    ds[2].y = Eigen::Vector2d(2, 3);
    const ThresholdGrid grid({-1, 0.5, 1.5, 2.5, 4});
    const auto st = classify_identification(ds, grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
      CHECK(st.n_below[j] + st.n_identified[j] + st.n_above[j] == 3);
      if (j > 0) {
        CHECK(st.n_below[j] <= st.n_below[j - 1]);
        CHECK(st.n_above[j] >= st.n_above[j - 1]);
      }
    }
    CHECK(st.n_below[0] == 3);
    CHECK(st.n_above[4] == 3);
    CHECK(st.n_identified[2] == 1);
  }

  TEST_CASE("grid locate") {
    const ThresholdGrid g({1, 2, 3});
    CHECK(g.locate(0.5) == -1);
    CHECK(g.locate(1.0) == 0);
    CHECK(g.locate(2.5) == 1);
    CHECK(g.locate(9) == 2);
  }
}
