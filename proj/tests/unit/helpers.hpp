#pragma once

#include <Eigen/Dense>
#include <random>

#include "hetdr/dr_fit.hpp"
#include "hetdr/link.hpp"
#include "hetdr/panel.hpp"

namespace testing {

inline hetdr::UnitDesign make_design(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, bool constant = true) {
  hetdr::UnitDesign d;
  d.x = x;
  d.y = y;
  d.layout.has_constant = constant;
  d.layout.lags = 0;
  d.layout.n_v = static_cast<int>(x.cols()) - (constant ? 1 : 0);
  for (Eigen::Index t = 0; t < y.size(); ++t) d.time.push_back(t + 1);
  return d;
}

// Static binary design: x_t = (1, N(0,1)), outcome 0 with probability Λ(-x'β) and 1
// otherwise, so the DR fit at threshold 0.5 targets β.
inline hetdr::UnitDesign binary_design(const Eigen::Vector2d& beta, int t, std::uint64_t seed,
                                       const hetdr::Link& link) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Eigen::MatrixXd x(t, 2);
  Eigen::VectorXd y(t);
  for (int s = 0; s < t; ++s) {
    x(s, 0) = 1.0;
    x(s, 1) = normal(rng);
    y(s) = unif(rng) < link.cdf(-x.row(s).dot(beta)) ? 0.0 : 1.0;
  }
  return make_design(x, y);
}

// Field with one converged cell per unit at a single grid point; each unit's
// design is `periods` rows of ones so only the coefficient values matter.
inline hetdr::CoefficientField synthetic_field(const std::vector<Eigen::VectorXd>& betas, int periods,
                                               const Eigen::MatrixXd& sigma = {}, double y = 0.0) {
  hetdr::CoefficientField f;
  f.grid = hetdr::ThresholdGrid({y});
  const auto d = betas.front().size();
  for (const auto& b : betas) {
    f.designs.push_back(make_design(Eigen::MatrixXd::Ones(periods, d), Eigen::VectorXd::Zero(periods)));
    hetdr::DrFit fit;
    fit.threshold = y;
    fit.beta = b;
    f.fits.push_back({fit});
    hetdr::FieldCell c;
    c.status = hetdr::CellStatus::Converged;
    c.fit = 0;
    c.beta = b;
    c.beta_raw = b;
    c.sigma = sigma;
    f.cells.push_back({c});
  }
  return f;
}

}  // namespace testing
