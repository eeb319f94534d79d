#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hetdr/counterfactual.hpp"
#include "hetdr/dr_fit.hpp"
#include "hetdr/quantile.hpp"

namespace hetdr {

enum class ScaleMethod { Iqr, Sd };
ScaleMethod parse_scale(std::string_view name);
std::string to_string(ScaleMethod m);

// z_{0.75} - z_{0.25} of the standard normal.
inline constexpr double kNormalIqr = 1.3489795003921634;

struct BootstrapOptions {
  int draws = 500;
  double level = 0.95;
  ScaleMethod scale = ScaleMethod::Iqr;
  std::uint64_t seed = 20240607;
  // A rank-deficient resample is redrawn at most this many times.
  int max_retries = 10;
};

// Seed of draw b: a splitmix64 mix of (seed, b), so draws can run in any order.
std::uint64_t draw_seed(std::uint64_t seed, std::uint64_t draw);

// N indices drawn uniformly with replacement from {0..N-1}.
std::vector<std::size_t> resample_units(std::size_t n, std::uint64_t seed);
// Multiplicity of each unit in resample_units(n, seed).
Eigen::VectorXd resample_counts(std::size_t n, std::uint64_t seed);

struct ScaleEstimate {
  double value = 0.0;
  bool degenerate = false;  // zero spread; value floored at 1e-12
};

// sd: sample standard deviation; iqr: (q75 - q25)/1.34898 with type-7
// quantiles, falling back to sd when the quartiles tie. NaN draws are ignored.
ScaleEstimate scale_estimate(std::span<const double> draws, ScaleMethod method);

struct BootstrapBand {
  std::string target;
  std::vector<double> points;  // grid points or quantile levels
  Eigen::VectorXd estimate;
  Eigen::VectorXd scale;
  Eigen::VectorXd lower, upper;
  Eigen::VectorXd pointwise_critical;  // per-point p-quantile of |Δ*|/s*
  std::vector<bool> included;          // points entering the sup
  double critical = 0.0;
  int draws = 0;
  ScaleMethod scale_method = ScaleMethod::Iqr;
  bool studentized = true;
  bool degenerate = false;
  bool low_draws = false;

  // truth inside [lower, upper] at every included point
  bool covers(const Eigen::VectorXd& truth) const;
  bool covers_at(std::size_t k, double truth) const;
};

// Bands from a draws x points matrix of bootstrap deviations θ*_b - θ̂ (NaN
// entries skipped). Studentized: q = p-quantile of sup_k |Δ_bk|/s_k;
// conservative: q = p-quantile of sup_k |Δ_bk| with unit scale.
BootstrapBand studentized_band(std::vector<double> points, const Eigen::VectorXd& estimate,
                               const Eigen::MatrixXd& deviations, const BootstrapOptions& opts,
                               std::vector<bool> included = {});
BootstrapBand conservative_band(std::vector<double> points, const Eigen::VectorXd& estimate,
                                const Eigen::MatrixXd& deviations, const BootstrapOptions& opts,
                                std::vector<bool> included = {});

struct ProjectionDraws {
  std::vector<double> grid;
  Eigen::VectorXd estimate;     // η' vec θ̂(y)
  Eigen::MatrixXd deviations;   // draws x grid: η' vec(θ̂*_b(y) - θ̂(y))
  int redraws = 0;
};

// One shared unit resample per draw across all thresholds; no first-stage refits.
ProjectionDraws bootstrap_projection(const CoefficientField& field, const Eigen::MatrixXd& z,
                                     const Eigen::MatrixXd& w, const Eigen::VectorXd& eta,
                                     const BootstrapOptions& opts);
BootstrapBand band_projection(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                              const Eigen::VectorXd& eta, const BootstrapOptions& opts);
BootstrapBand band_conservative(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& eta, const BootstrapOptions& opts);

// Everything that defines F̂_t and Ĝ_t.
struct CounterfactualSpec {
  Eigen::MatrixXd z, w;
  CharTransform g;
  CovariateTransform h;
  long period = 1;
  DistributionOptions dist;
};

// Called once per draw with the resampling counts used for F̂* and for Ĝ*.
using DrawHook = std::function<void(int draw, const Eigen::VectorXd& f_counts, const Eigen::VectorXd& g_counts)>;

struct DistributionDraws {
  ThresholdGrid grid;
  Eigen::VectorXd f, g;              // estimates F̂_t, Ĝ_t
  Eigen::MatrixXd f_draws, g_draws;  // draws x grid
  int redraws = 0;
};

DistributionDraws bootstrap_distribution(const CoefficientField& field, const CounterfactualSpec& spec,
                                         const BootstrapOptions& opts, const DrawHook& hook = {});

// Studentized band for Ĝ_t over the grid.
BootstrapBand band_distribution(const CoefficientField& field, const CounterfactualSpec& spec,
                                const BootstrapOptions& opts);

struct QeBand {
  QuantileEffectCurve curve;
  BootstrapBand band;
  std::vector<double> sentinel_share;  // fraction of draws with a sentinel quantile, per level
};

// Levels invalid on the sample, or with sentinels in more than 1% of draws,
// are dropped from the sup; throws AllLevelsDropped when none remain.
QeBand band_qe(const CoefficientField& field, const CounterfactualSpec& spec, std::span<const double> levels,
               const BootstrapOptions& opts, const DrawHook& hook = {});
QeBand band_qe(const DistributionDraws& draws, std::span<const double> levels, const BootstrapOptions& opts);

}  // namespace hetdr
