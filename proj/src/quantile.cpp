#include "hetdr/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hetdr/error.hpp"

namespace hetdr {
namespace {

QuantileValue at_index(std::span<const double> grid, std::size_t j) {
  if (j >= grid.size()) return {std::numeric_limits<double>::infinity(), QuantilePosition::AboveGrid};
  return {grid[j], j == 0 ? QuantilePosition::LowerEdge : QuantilePosition::Inside};
}

void check_sizes(std::span<const double> grid, std::span<const double> values) {
  if (grid.empty() || grid.size() != values.size()) {
    throw Error(ErrorCode::InvalidArgument, "grid and CDF values must be nonempty and of equal length");
  }
}

}  // namespace

QuantileValue left_inverse(std::span<const double> grid, std::span<const double> values, double tau) {
  check_sizes(grid, values);
  for (std::size_t j = 1; j < values.size(); ++j) {
    if (values[j] < values[j - 1]) {
      throw Error(ErrorCode::InvalidArgument, "left_inverse needs a monotone CDF; rearrange first");
    }
  }
  const auto it = std::lower_bound(values.begin(), values.end(), tau);
  return at_index(grid, static_cast<std::size_t>(it - values.begin()));
}

std::vector<double> rearrange(std::span<const double> values) {
  std::vector<double> out(values.begin(), values.end());
  for (auto& v : out) v = std::isnan(v) ? v : std::clamp(v, 0.0, 1.0);
  std::sort(out.begin(), out.end());
  return out;
}

QuantileValue rearranged_inverse(std::span<const double> grid, std::span<const double> values, double tau) {
  check_sizes(grid, values);
  // Count of values below τ; no need to materialize the sorted copy.
  std::size_t below = 0;
  for (double v : values) below += std::clamp(v, 0.0, 1.0) < tau ? 1 : 0;
  return at_index(grid, below);
}

std::vector<QuantileValue> rearranged_inverse(std::span<const double> grid, std::span<const double> values,
                                              std::span<const double> taus) {
  check_sizes(grid, values);
  const auto sorted = rearrange(values);
  std::vector<QuantileValue> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), tau);
    out.push_back(at_index(grid, static_cast<std::size_t>(it - sorted.begin())));
  }
  return out;
}

QuantileEffectCurve quantile_effect(const ThresholdGrid& grid, std::span<const double> f,
                                    std::span<const double> g, std::span<const double> levels) {
  QuantileEffectCurve out;
  out.levels.assign(levels.begin(), levels.end());
  out.q_actual = rearranged_inverse(grid.points, f, levels);
  out.q_counterfactual = rearranged_inverse(grid.points, g, levels);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const bool ok = out.q_actual[k].inside() && out.q_counterfactual[k].inside();
    out.valid.push_back(ok);
    out.values.push_back(ok ? out.q_counterfactual[k].value - out.q_actual[k].value
                            : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

}  // namespace hetdr
