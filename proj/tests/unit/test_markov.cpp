#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "hetdr/error.hpp"
#include "hetdr/markov.hpp"

using namespace hetdr;

namespace {

DesignLayout lag_only() {
  DesignLayout l;
  l.has_constant = false;
  l.lags = 1;
  return l;
}

DesignLayout constant_lag() {
  DesignLayout l;
  l.has_constant = true;
  l.lags = 1;
  return l;
}

UnitMarkovChain two_state(double stay_low, double stay_high) {
  UnitMarkovChain c;
  c.states = {1.0, 2.0};
  c.p.resize(2, 2);
  c.p << stay_low, 1 - stay_high, 1 - stay_low, stay_high;
  c.pi = ergodic(c.p);
  c.ergodic_ok = true;
  return c;
}

}  // namespace

TEST_SUITE("markov") {
  TEST_CASE("rearrangement and differencing of a chain column") {
    const Link link;
    // x = previous state; the column for prev = 1 has Q-values (0.5, 0.3, 1)
    const std::vector<double> states{1.0, 2.0, 3.0};
    const std::vector<Eigen::VectorXd> coefs{Eigen::VectorXd::Constant(1, 0.0),
                                             Eigen::VectorXd::Constant(1, -link.inverse(0.3))};
    const auto c = build_chain(states, lag_only(), coefs, link);
    CHECK(c.p(0, 0) == doctest::Approx(0.3));
    CHECK(c.p(1, 0) == doctest::Approx(0.2));
    CHECK(c.p(2, 0) == doctest::Approx(0.5));
    for (Eigen::Index k = 0; k < 3; ++k) {
      CHECK(c.p.col(k).sum() == doctest::Approx(1.0));
      for (Eigen::Index j = 1; j < 3; ++j) CHECK(c.q(j, k) >= c.q(j - 1, k));
    }

    // monotone columns are left as they are
    const std::vector<Eigen::VectorXd> mono{Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Constant(1, -0.2)};
    const auto m = build_chain(states, lag_only(), mono, link);
    for (Eigen::Index k = 0; k < 3; ++k) {
      CHECK(m.q(0, k) == doctest::Approx(link.cdf(-states[k] * 0.5)));
      CHECK(m.q(1, k) == doctest::Approx(link.cdf(states[k] * 0.2)));
      CHECK(m.q(2, k) == 1.0);
    }
  }

  TEST_CASE("ergodic distribution") {
    Eigen::Matrix2d half;
    half << 0.5, 0.5, 0.5, 0.5;
    CHECK((ergodic(half) - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-12);
    Eigen::Matrix2d p;
    p << 0.8, 0.4, 0.2, 0.6;
    CHECK((ergodic(p) - Eigen::Vector2d(2.0 / 3.0, 1.0 / 3.0)).norm() < 1e-12);
    try {
      ergodic(Eigen::Matrix2d::Identity());
      FAIL("identity chain should be reducible");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ReducibleChain);
    }
  }

  TEST_CASE("stationary step CDF") {
    ChainSet set;
    UnitMarkovChain c;
    c.states = {1.0, 2.0};
    c.pi = Eigen::Vector2d(0.3, 0.7);
    set.chains.push_back(c);
    set.chains.push_back(std::nullopt);
    const std::vector<double> grid{0.5, 1.5, 2.5};
    const auto f = stationary_distribution(set, grid);
    CHECK(f(0) == 0.0);
    CHECK(f(1) == doctest::Approx(0.3));
    CHECK(f(2) == doctest::Approx(1.0));
  }

  TEST_CASE("mobility") {
    const auto c = two_state(0.9, 0.5);
    CHECK(mobility(c, 1.5, 1.5, 1) == doctest::Approx(0.9));
    CHECK(mobility(c, 1.5, 1.5, 2) == doctest::Approx(0.86));
    CHECK(mobility(c, 1.5, 1.5, 0) == doctest::Approx(1.0));
    // long horizons forget the start
    CHECK(std::abs(mobility(c, 1.5, 1.5, 200) - c.pi(0)) < 1e-6);
    CHECK(std::abs(mobility(c, 1.5, 2.5, 200) - c.pi(0)) < 1e-6);
    CHECK_THROWS(mobility(c, 1.5, 0.5, 1));
  }

  TEST_CASE("recurrence") {
    const auto geo = recurrence(two_state(0.9, 0.5), 1.5, 100);
    CHECK(geo.expected == doctest::Approx(10.0).epsilon(1e-12));
    for (int h = 1; h <= 5; ++h) CHECK(geo.pmf[h - 1] == doctest::Approx(std::pow(0.9, h - 1) * 0.1));
    const auto now = recurrence(two_state(0.0, 0.5), 1.5);
    CHECK(now.expected == doctest::Approx(1.0));
    CHECK(now.pmf[0] == doctest::Approx(1.0));

    UnitMarkovChain trap = two_state(0.9, 0.5);
    trap.p << 1.0, 0.5, 0.0, 0.5;
    trap.pi = Eigen::Vector2d(1.0, 0.0);
    CHECK(std::isinf(recurrence(trap, 1.5).expected));
  }

  TEST_CASE("aggregation") {
    const std::vector<double> two{0.0, 1.0}, lv{0.5};
    const auto s = aggregate_mobility(two, lv);
    CHECK(s.quantiles[0] == 0.0);
    CHECK(s.mean == 0.5);
    const std::vector<double> same(7, 0.42), lv3{0.1, 0.5, 0.9};
    const auto t = aggregate_mobility(same, lv3);
    CHECK(t.mean == doctest::Approx(0.42));
    for (double q : t.quantiles) CHECK(q == 0.42);
    CHECK_THROWS(aggregate_mobility(std::vector<double>{}, lv));
  }

  TEST_CASE("transition matrix recovered from a simulated chain") {
    const Link link;
    const std::vector<double> states{1.0, 2.0, 3.0};
    const std::vector<Eigen::VectorXd> truth_coefs{Eigen::Vector2d(1.0, -0.5), Eigen::Vector2d(-0.5, -0.5)};
    const auto truth = build_chain(states, constant_lag(), truth_coefs, link);

    const int T = 100000;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif;
    Eigen::MatrixXd x(T, 2);
    Eigen::VectorXd y(T);
    int prev = 1;
    for (int t = 0; t < T; ++t) {
      const double u = unif(rng);
      int next = 0;
      double acc = truth.p(0, prev);
      while (u > acc && next < 2) acc += truth.p(++next, prev);
      x.row(t) << 1.0, states[prev];
      y(t) = states[next];
      prev = next;
    }
    auto design = testing::make_design(x, y);
    design.layout = constant_lag();
    DebiasOptions none;
    none.method = DebiasMethod::None;
    const auto est = build_chain(states, design.layout, unit_state_coefficients(design, states, link, none), link);
    CHECK((est.p - truth.p).cwiseAbs().maxCoeff() < 0.02);
    CHECK((truth.p * truth.pi - truth.pi).cwiseAbs().maxCoeff() < 1e-10);
  }
}
