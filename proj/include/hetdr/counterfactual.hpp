#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>
#include <vector>

#include "hetdr/dr_fit.hpp"
#include "hetdr/projection.hpp"

namespace hetdr {

// g: map applied to each unit's characteristic row z_i.
struct CharTransform {
  enum class Kind { Identity, MinValue, AddValue, Custom };
  Kind kind = Kind::Identity;
  Eigen::Index column = 0;
  double value = 0.0;         // floor for MinValue, δ for AddValue
  Eigen::MatrixXd replacement;  // Custom: one row per unit

  static CharTransform identity() { return {}; }
  static CharTransform min_value(Eigen::Index col, double floor);
  static CharTransform add_value(Eigen::Index col, double delta);
  static CharTransform custom(Eigen::MatrixXd rows);
  // "none" | "min:col=NAME,floor=V" | "add:col=NAME,delta=V"; NAME may also be a column index.
  static CharTransform parse(std::string_view spec, const std::vector<std::string>& z_names);

  bool is_identity() const { return kind == Kind::Identity; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& z) const;
};

// h: map applied to the reference-period design rows (one row per unit).
struct CovariateTransform {
  enum class Kind { Identity, FlatTax, ProgressiveTax, Custom };
  Kind kind = Kind::Identity;
  double kappa = 0.0;
  Eigen::MatrixXd replacement;

  static CovariateTransform identity() { return {}; }
  static CovariateTransform flat_tax(double kappa);
  static CovariateTransform progressive_tax();
  static CovariateTransform custom(Eigen::MatrixXd rows);
  // "none" | "flat:K" | "prog"
  static CovariateTransform parse(std::string_view spec);

  bool is_identity() const { return kind == Kind::Identity; }
  Eigen::MatrixXd apply(const Eigen::MatrixXd& rows, const DesignLayout& layout) const;
};

// Shift the first lag by log(1 - κ).
Eigen::MatrixXd apply_flat_tax(const Eigen::MatrixXd& rows, const DesignLayout& layout, double kappa);
// Shift each unit's first lag by log(1 - κ_i/2), κ_i = #{j: y_j,t-1 <= y_i,t-1}/N.
Eigen::MatrixXd apply_progressive_tax(const Eigen::MatrixXd& rows, const DesignLayout& layout);

// β̂^g_i(y) = β̂_i(y) + θ̂(y)[g(z_i) - z_i] on every cell carrying a coefficient.
CoefficientField counterfactual_coefficients(const CoefficientField& field,
                                             const std::vector<ProjectionEstimate>& projections,
                                             const Eigen::MatrixXd& z, const CharTransform& g);

// Design rows of every unit at period label t; units without that period are
// reported in `missing` and carry NaN rows.
struct ReferenceRows {
  long period = 0;
  Eigen::MatrixXd x;
  std::vector<std::size_t> missing;
};
ReferenceRows reference_rows(const CoefficientField& field, long period);

struct DistributionOptions {
  // Subtract the nonlinearity bias ½ tr(Λ̈ x x' Σ̂_i)/T_i.
  bool bias_correction = true;
};

struct DistributionEstimate {
  ThresholdGrid grid;
  Eigen::VectorXd values;
  Eigen::VectorXd bias;  // average bias term subtracted at each grid point
  std::vector<int> n_below, n_identified, n_above;
  int n_units = 0;  // units contributing (those with a reference row)
};

// Contribution of one unit at one cell: 0 below its range, 1 at or above its
// maximum, and the (bias-corrected) fitted probability in between. Returns NaN
// when the cell has no coefficient.
double unit_contribution(const FieldCell& cell, const Eigen::VectorXd& x, const Link& link, double periods,
                         bool bias_correction);

// F̂_t (or Ĝ_t with a g-field and h-transformed rows).
DistributionEstimate estimate_distribution(const CoefficientField& field, const Eigen::MatrixXd& rows,
                                           const DistributionOptions& opts = {});

// Per-unit contributions Ψ_i(y) as a units x grid matrix (NaN where undefined).
Eigen::MatrixXd unit_contributions(const CoefficientField& field, const Eigen::MatrixXd& rows,
                                   const DistributionOptions& opts = {});

}  // namespace hetdr
