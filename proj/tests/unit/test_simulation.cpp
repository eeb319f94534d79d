#include <cmath>

#include "doctest.h"
#include "hetdr/simulation.hpp"

using namespace hetdr;

TEST_SUITE("simulation") {
  TEST_CASE("toy design truth") {
    ToyDesign d;
    d.variances = {0.0, 1.0};
    d.reps = 20;
    d.draws = 20;
    const auto rows = toy_experiment(d);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].true_sd == doctest::Approx(0.0316228).epsilon(1e-5));
    CHECK(rows[1].true_sd == doctest::Approx(0.1048809).epsilon(1e-5));
    CHECK(toy_experiment(d)[1].bootstrap == rows[1].bootstrap);
  }

  TEST_CASE("theta curve and its inverse") {
    CHECK(theta_inverse(3.0) == doctest::Approx(3.0));
    CHECK(theta_inverse(-0.75) == doctest::Approx(1.5));
    CHECK(theta_curve(2.0) == 0.0);
    for (double y : {1.3, 1.9, 2.0, 2.4, 3.1}) CHECK(theta_inverse(theta_curve(y)) == doctest::Approx(y));
    const auto truth = dynamic_dr_truth(dynamic_dr_grid());
    CHECK(truth.size() == 7);
    CHECK(truth(0) == doctest::Approx(-theta_curve(1.7)));
  }

  TEST_CASE("dynamic design is valid and has the stated tails") {
    DynamicDrDesign d;
    d.n = 300;
    d.t = 100;
    const auto sim = generate_dynamic_dr(d, 3);
    CHECK(((sim.w + sim.gamma).array() > 0).all());
    double n = 0, below = 0, above = 0;
    for (const auto& u : sim.data.units) {
      CHECK(u.periods() == 101);
      for (std::size_t t = 1; t < u.y.size(); ++t) {
        CHECK(std::isfinite(u.y[t]));
        n += 1;
        below += u.y[t] < 1.7;
        above += u.y[t] > 2.3;
      }
    }
    CHECK(below / n == doctest::Approx(0.1).epsilon(0.25));
    CHECK(above / n == doctest::Approx(0.1).epsilon(0.25));
    CHECK(generate_dynamic_dr(d, 3).data.units[7].y == sim.data.units[7].y);
    sim.data.validate();
  }

  TEST_CASE("quadrature truth agrees with the simulated oracle") {
    const std::vector<double> levels{0.15, 0.25, 0.5, 0.75, 0.85};
    const auto exact = true_quantile_effect_exact(levels, 0.5);
    const auto sim = true_quantile_effect(levels, 0.5, 400000, 11);
    CHECK(exact[2] == doctest::Approx(0.0));
    CHECK(exact[0] == doctest::Approx(-exact[4]).epsilon(1e-6));
    for (std::size_t k = 0; k < levels.size(); ++k) CHECK(std::abs(exact[k] - sim[k]) < 0.01);
    CHECK(period_one_cdf(0.0, 0.0) < 1e-6);
    CHECK(period_one_cdf(4.0, 0.0) > 1 - 1e-6);
    CHECK(period_one_cdf(2.0, 0.0) == doctest::Approx(0.5));
  }

  TEST_CASE("homogeneous AR(1) panel") {
    HomogeneousDesign d;
    d.n = 20;
    d.t = 50;
    const auto ds = generate_homogeneous(d, 1);
    CHECK(ds.size() == 20);
    CHECK(ds.units[0].periods() >= 50);
    ds.validate();
  }

  TEST_CASE("method names") {
    CHECK(parse_method("proposed") == InferenceMethod::Proposed);
    for (auto m : {InferenceMethod::Proposed, InferenceMethod::NoDebias, InferenceMethod::ConserBoot,
                   InferenceMethod::PluginOver, InferenceMethod::PluginUnder})
      CHECK(parse_method(to_string(m)) == m);
    CHECK_THROWS(parse_method("nope"));
  }
}
