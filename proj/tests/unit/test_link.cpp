#include <cmath>

#include "doctest.h"
#include "hetdr/link.hpp"

using namespace hetdr;

TEST_SUITE("link") {
  TEST_CASE("logit closed forms") {
    const Link l(LinkKind::Logit);
    CHECK(l.eval(0, 0.0) == doctest::Approx(0.5));
    CHECK(l.eval(1, 0.0) == doctest::Approx(0.25));
    CHECK(l.inverse(0.5) == doctest::Approx(0.0));
    CHECK(l.inverse(0.75) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }

  TEST_CASE("probit against the normal law") {
    const Link p(LinkKind::Probit);
    for (double s : {-8.0, -3.0, -0.7, 0.0, 1.3, 5.0}) {
      CHECK(p.cdf(s) == doctest::Approx(0.5 * std::erfc(-s / std::sqrt(2.0))).epsilon(1e-13));
    }
    // root-finding oracle for the quantile
    double lo = 0, hi = 5;
    for (int k = 0; k < 200; ++k) {
      const double mid = 0.5 * (lo + hi);
      (0.5 * std::erfc(-mid / std::sqrt(2.0)) < 0.975 ? lo : hi) = mid;
    }
    CHECK(p.inverse(0.975) == doctest::Approx(lo).epsilon(1e-9));
    CHECK(p.inverse(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  }

  TEST_CASE("derivatives match finite differences") {
    for (auto kind : {LinkKind::Logit, LinkKind::Probit}) {
      const Link l(kind);
      const double h = 1e-4;
      for (double s : {-2.0, -0.3, 0.0, 1.0, 2.5}) {
        for (int k = 1; k <= 3; ++k) {
          const double fd = (l.eval(k - 1, s + h) - l.eval(k - 1, s - h)) / (2 * h);
          CHECK(l.eval(k, s) == doctest::Approx(fd).epsilon(1e-6));
        }
      }
    }
  }

  TEST_CASE("log-likelihood derivatives") {
    for (auto kind : {LinkKind::Logit, LinkKind::Probit}) {
      const Link l(kind);
      const double h = 1e-4;
      for (bool b : {true, false}) {
        for (double s : {-1.5, 0.2, 2.0}) {
          const auto m = l.loglik(s - h, b), c = l.loglik(s, b), p = l.loglik(s + h, b);
          CHECK(c.d1 == doctest::Approx((p.value - m.value) / (2 * h)).epsilon(1e-6));
          CHECK(c.d2 == doctest::Approx((p.d1 - m.d1) / (2 * h)).epsilon(1e-6));
          CHECK(c.d3 == doctest::Approx((p.d2 - m.d2) / (2 * h)).epsilon(1e-5));
        }
      }
    }
  }

  TEST_CASE("tails stay finite") {
    for (auto kind : {LinkKind::Logit, LinkKind::Probit}) {
      const Link l(kind);
      CHECK(std::isfinite(l.loglik(-60.0, true).value));
      CHECK(std::isfinite(l.loglik(60.0, false).value));
      CHECK(l.cdf(-60.0) >= 0.0);
      CHECK(l.cdf(60.0) <= 1.0);
    }
  }

  TEST_CASE("parse") {
    CHECK(Link::parse("probit").kind() == LinkKind::Probit);
    CHECK(Link::parse("logit").name() == "logit");
    CHECK_THROWS(Link::parse("cauchit"));
  }
}
