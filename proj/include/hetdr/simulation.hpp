#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hetdr/bootstrap.hpp"
#include "hetdr/debias.hpp"
#include "hetdr/panel.hpp"

namespace hetdr {

// ---- linear toy model: y_it = β_i + e_it, β_i ~ N(θ, Var(β)) -------------

struct ToyDesign {
  int n = 100;
  int t = 10;
  std::vector<double> variances{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double theta = 1.0;
  int reps = 1000;
  int draws = 500;
  std::uint64_t seed = 1;
};

struct ToyRow {
  double variance = 0.0;
  double true_sd = 0.0;  // sqrt(1/(NT) + Var(β)/N)
  double plugin_over = 0.0;
  double plugin_under = 0.0;
  double bootstrap = 0.0;
};

std::vector<ToyRow> toy_experiment(const ToyDesign& design);

// ---- dynamic DR design ---------------------------------------------------
// Pr(y_t <= y | y_{t-1}) = Φ(y_{t-1} θ(y)(w_i + γ̄_i)). In the estimation
// orientation Λ(-x'β) with x = y_{t-1} this is β_i(y) = -θ(y)(w_i + γ̄_i), so the
// projection of β_i(y) on w_i recovers -θ(y).

double theta_curve(double y);    // 3 sgn(y-2)(y-2)^2
double theta_inverse(double u);  // 2 + sgn(u) sqrt(|u|/3)

struct DynamicDrDesign {
  int n = 300;
  int t = 100;
};

struct SimulatedPanel {
  PanelDataset data;  // periods 0..T, z = w = (w_i)
  Eigen::VectorXd w, gamma, y0;
};

SimulatedPanel generate_dynamic_dr(const DynamicDrDesign& design, std::uint64_t seed);

// x_it = y_{i(t-1)}: one lag, no constant, no covariates.
DesignOptions dynamic_dr_design_options();
// {1.7, 1.8, ..., 2.3}
ThresholdGrid dynamic_dr_grid();
// -θ(y) at each grid point.
Eigen::VectorXd dynamic_dr_truth(const ThresholdGrid& grid);

enum class InferenceMethod { Proposed, NoDebias, ConserBoot, PluginOver, PluginUnder };
std::string to_string(InferenceMethod m);
InferenceMethod parse_method(const std::string& name);

struct CoverageDesign {
  int n = 300;
  int t = 100;
  int reps = 200;
  int draws = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  std::vector<InferenceMethod> methods{InferenceMethod::Proposed, InferenceMethod::NoDebias,
                                       InferenceMethod::ConserBoot, InferenceMethod::PluginOver,
                                       InferenceMethod::PluginUnder};
};

struct CoverageResult {
  std::vector<InferenceMethod> methods;
  std::vector<double> coverage;                // per method
  std::vector<std::vector<char>> covered;      // [rep][method]
  std::vector<std::vector<double>> critical;   // [rep][method]
  std::vector<Eigen::MatrixXd> half_width;     // per method: reps x grid
};

CoverageResult coverage_experiment(const CoverageDesign& design);

// ---- quantile effects of raising w_i at t = 1 -----------------------------

struct QteDesign {
  int n = 200;
  int t = 50;
  double shift = 0.5;
  int reps = 200;
  int draws = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  std::vector<double> levels{0.15, 0.25, 0.5, 0.75, 0.85};
  std::vector<DebiasMethod> methods{DebiasMethod::None, DebiasMethod::Analytical, DebiasMethod::Jackknife};
  double grid_lo = 1.45;
  double grid_hi = 2.55;
  double grid_step = 0.0005;
  std::size_t oracle_units = 1000000;
  std::uint64_t oracle_seed = 987654321;
};

struct QteMethodResult {
  DebiasMethod method = DebiasMethod::None;
  std::vector<double> mse;            // per level
  std::vector<double> coverage;       // per level, pointwise 95%
  double joint_coverage = 0.0;
  std::vector<int> valid_reps;        // per level
  Eigen::MatrixXd estimates;          // reps x levels (NaN when a quantile hit the grid edge)
};

struct QteResult {
  std::vector<double> levels;
  std::vector<double> truth;            // exact, by quadrature
  std::vector<double> truth_simulated;  // common-random-numbers oracle, for reference
  std::vector<QteMethodResult> methods;
};

// True QE at t = 1 by simulating `units` draws of (y0, w, γ̄, e) through both
// the actual and the shifted model with common random numbers.
std::vector<double> true_quantile_effect(const std::vector<double>& levels, double shift, std::size_t units,
                                         std::uint64_t seed);

// Population CDF of y_i1 when w_i is raised by `shift`:
//   E[Φ(θ(y) y_0 (w + shift + γ̄))]
// by Gauss-Legendre quadrature over y_0 and the triangular law of w + γ̄.
double period_one_cdf(double y, double shift);
// Exact QE at t = 1 by inverting period_one_cdf. The median effect is zero by
// symmetry, where a simulated oracle is least accurate (zero density at y = 2).
std::vector<double> true_quantile_effect_exact(const std::vector<double>& levels, double shift);

QteResult qte_experiment(const QteDesign& design);

// ---- homogeneous Gaussian AR(1): y_t = μ + ρ y_{t-1} + σ e_t --------------
// Pr(y_t <= y | y_{t-1}) = Φ(-x'β) exactly, with x = (1, y_{t-1}) and
// β(y) = ((μ - y)/σ, ρ/σ).

struct HomogeneousDesign {
  int n = 500;
  int t = 500;
  double mu = 0.0;
  double rho = 0.5;
  double sigma = 1.0;
};

PanelDataset generate_homogeneous(const HomogeneousDesign& design, std::uint64_t seed);

}  // namespace hetdr
