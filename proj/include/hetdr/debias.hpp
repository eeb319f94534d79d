#pragma once

#include <Eigen/Dense>
#include <string>
#include <string_view>

#include "hetdr/dr_fit.hpp"

namespace hetdr {

enum class DebiasMethod { None, Analytical, Jackknife };

DebiasMethod parse_debias(std::string_view name);
std::string to_string(DebiasMethod m);

struct LongRunVariance {
  Eigen::MatrixXd xi;
  int lags = 0;
};

// Bartlett-weighted HAC matrix of a score series (rows = periods):
//   Ξ = (1/T) Σ_t ψ_t ψ_t' + (1/T) Σ_{h=1..L} (1 - h/L) Σ_{t>h} (ψ_t ψ_{t-h}' + ψ_{t-h} ψ_t').
LongRunVariance newey_west(const Eigen::MatrixXd& scores, int lags);

// floor(T^{1/3})
int default_nw_lags(Eigen::Index periods);

// Σ̂ = H^{-1} Ξ H^{-1} with H the per-period average information matrix.
Eigen::MatrixXd sandwich_variance(const DrFit& fit, const LongRunVariance& lrv);
Eigen::MatrixXd sandwich_variance(const Eigen::MatrixXd& hessian, const LongRunVariance& lrv);

// First-order bias B of the DR estimator, E[β̃ - β] ≈ B / T, evaluated at beta:
//   B = H^{-1} [ ½ Σ_{k,l} E∂³ℓ_t/∂β∂β_k∂β_l · V_kl  -  Σ_{j=0..L} w_j E[(H_t - H) H^{-1} ψ_{t-j}] ]
// where H is the average information, V = H^{-1} Ξ H^{-1} and w_j the Bartlett
// weights of newey_west.
Eigen::VectorXd analytical_bias(const UnitDesign& design, double y, const Link& link, const Eigen::VectorXd& beta,
                                int lags);
Eigen::VectorXd analytical_bias(const UnitDesign& design, const DrFit& fit, const Link& link, int lags);

struct DebiasOptions {
  DebiasMethod method = DebiasMethod::Analytical;
  // Newey-West lags; negative selects floor(T_i^{1/3}) per unit.
  int nw_lags = -1;
  FitOptions fit;
};

// Fills FieldCell::sigma for every usable cell from the first-stage fits.
void attach_sandwiches(CoefficientField& field, int nw_lags = -1);

// β̂ = β̃ - B̂/T with B̂ evaluated at each cell's current coefficient, so a
// second application refines rather than repeats the correction.
CoefficientField debias_analytical(const CoefficientField& field, int nw_lags = -1);

// Half-panel jackknife: β̂ = 2β̃ - (β̃⁽¹⁾ + β̃⁽²⁾)/2 over the first and second
// halves of each usable window (odd windows drop their first period).
CoefficientField debias_jackknife(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid,
                                  const Link& link, const FitOptions& opts = {}, int nw_lags = -1);

// Fit, attach sandwiches and apply the configured correction.
CoefficientField estimate_field(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid, const Link& link,
                                const DebiasOptions& opts);

}  // namespace hetdr
