#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "hetdr/panel.hpp"

namespace hetdr {

// Where a grid-valued quantile fell. LowerEdge: the first grid point already
// reaches τ, so the true crossing may lie below the grid. AboveGrid: no grid
// point reaches τ; value is +inf.
enum class QuantilePosition : unsigned char { Inside, LowerEdge, AboveGrid };

struct QuantileValue {
  double value = 0.0;
  QuantilePosition position = QuantilePosition::Inside;
  bool inside() const { return position == QuantilePosition::Inside; }
};

// φ(F, τ) = inf{y in grid: F(y) >= τ} for monotone tabulated F. Throws on
// non-monotone values.
QuantileValue left_inverse(std::span<const double> grid, std::span<const double> values, double tau);

// φ̃(F, τ): clip values to [0,1], sort them increasingly over the grid (the
// monotone rearrangement) and take the left inverse.
QuantileValue rearranged_inverse(std::span<const double> grid, std::span<const double> values, double tau);

// Several levels against one rearrangement.
std::vector<QuantileValue> rearranged_inverse(std::span<const double> grid, std::span<const double> values,
                                              std::span<const double> taus);

// Sorted, clipped copy of the values (the rearranged CDF).
std::vector<double> rearrange(std::span<const double> values);

struct QuantileEffectCurve {
  std::vector<double> levels;
  std::vector<double> values;        // φ̃(G, τ) - φ̃(F, τ)
  std::vector<QuantileValue> q_actual;
  std::vector<QuantileValue> q_counterfactual;
  std::vector<bool> valid;           // both quantiles inside the grid
};

QuantileEffectCurve quantile_effect(const ThresholdGrid& grid, std::span<const double> f,
                                    std::span<const double> g, std::span<const double> levels);

}  // namespace hetdr
