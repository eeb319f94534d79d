#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "hetdr/dr_fit.hpp"

namespace hetdr {

// Relative rank tolerance for the pivoted-QR solves of the second stage.
inline constexpr double kRankTolerance = 1e-10;

// Two-stage least squares of unit coefficients on characteristics z_i with
// instruments w_i at one threshold:
//   Π = (Σ z w')(Σ w w')^{-1},  ẑ_i = Π w_i,  θ = Σ β ẑ' (Σ ẑ ẑ')^{-1}.
struct ProjectionEstimate {
  double y = 0.0;
  std::vector<std::size_t> units;  // units that entered (usable at y)
  Eigen::MatrixXd theta;           // d_x x d_z
  Eigen::MatrixXd pi;              // d_z x d_w first stage
  Eigen::MatrixXd zhat;            // row k: ẑ' of units[k]
  Eigen::MatrixXd gamma;           // row k: γ̂' = (β̂ - θ̂ ẑ)' of units[k]
  Eigen::MatrixXd s_wz;            // Π'(Π M_ww Π')^{-1} with M_ww the average of w w'
};

// Sufficient statistics of one threshold's projection; weights allow the
// cross-sectional bootstrap to reuse them with resampling counts.
class ProjectionMoments {
 public:
  ProjectionMoments(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w);

  // θ from count-weighted moments; throws RankDeficient.
  Eigen::MatrixXd theta(const Eigen::VectorXd& weights) const;
  Eigen::MatrixXd theta() const;
  Eigen::MatrixXd first_stage(const Eigen::VectorXd& weights) const;

  Eigen::Index rows() const { return beta_.rows(); }

 private:
  Eigen::MatrixXd beta_, z_, w_;
};

// Rows of z and w are the full panel; only units usable at grid point j enter.
ProjectionEstimate project(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                           std::size_t j);
std::vector<ProjectionEstimate> project_all(const CoefficientField& field, const Eigen::MatrixXd& z,
                                            const Eigen::MatrixXd& w);

// Solve for X in X * A = B via pivoted QR of A'; throws RankDeficient.
Eigen::MatrixXd solve_right(const Eigen::MatrixXd& b, const Eigen::MatrixXd& a, const char* what);

struct PluginVariances {
  Eigen::MatrixXd v_psi;      // (1/N) Σ (S'ww'S) ⊗ Σ̂_i
  Eigen::MatrixXd v_gamma;    // (1/N) Σ (S'ww'S) ⊗ γ̂γ̂'
  Eigen::MatrixXd sigma_over;   // V̂_ψ/(NT) + V̂_γ/N
  Eigen::MatrixXd sigma_under;  // V̂_ψ/(NT)
  double n = 0.0;
  double t = 0.0;  // mean usable periods of the entering units
};

// Per-unit sandwiches must be attached (see attach_sandwiches). vec() stacks
// the columns of θ, so entry (r, c) sits at c * d_x + r.
PluginVariances plugin_variances(const CoefficientField& field, const ProjectionEstimate& proj,
                                 const Eigen::MatrixXd& w);

}  // namespace hetdr
