#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "hetdr/link.hpp"
#include "hetdr/panel.hpp"

namespace hetdr {

struct FitOptions {
  int max_iter = 100;
  // Convergence when the mean score has Euclidean norm below tol.
  double tol = 1e-9;
  // Declared separated once ||beta|| exceeds this while the likelihood still improves.
  double separation_norm = 50.0;
  // Newton steps are replaced by gradient steps above this condition number.
  double max_condition = 1e10;
  // Emit a warning for every cell whose fit throws.
  bool log_failures = true;
};

// Converged fits whose Hessian falls below this multiple of the largest
// eigenvalue of x'x/T are reported as separated.
inline constexpr double kSeparationCurvature = 1e-7;

enum class FitStatus { Converged, Separated, MaxIterExceeded };

// Distribution-regression fit of one unit at one threshold y: binary regression
// of 1{y_it <= y} with success probability Λ(-x_it'β).
struct DrFit {
  double threshold = 0.0;
  Eigen::VectorXd beta;
  FitStatus status = FitStatus::Converged;
  // Row t is the per-period score ∂ℓ_t/∂β at beta.
  Eigen::MatrixXd scores;
  // Per-period average of -∂²ℓ_t/∂β∂β'; positive definite at a proper optimum.
  Eigen::MatrixXd hessian;
  double loglik = 0.0;
  int iterations = 0;
};

DrFit fit_unit_threshold(const UnitDesign& design, double y, const Link& link, const FitOptions& opts = {});

// Score series and averaged Hessian of the DR log-likelihood at an arbitrary beta.
struct ScoreHessian {
  Eigen::MatrixXd scores;
  Eigen::MatrixXd hessian;
  double loglik = 0.0;
};
ScoreHessian score_hessian(const UnitDesign& design, double y, const Link& link, const Eigen::VectorXd& beta);

enum class CellStatus : unsigned char {
  BelowRange,
  AboveRange,
  Converged,
  Separated,
  MaxIterExceeded,
  Failed,
  // Jackknife could not fit a half window; the first-stage estimate is kept.
  HalfPanelFallback,
};

const char* to_string(CellStatus s);

struct FieldCell {
  CellStatus status = CellStatus::Failed;
  int fit = -1;              // index into CoefficientField::fits[i], -1 when nothing was fitted
  Eigen::VectorXd beta;      // coefficient used downstream (debiased when a correction ran)
  Eigen::VectorXd beta_raw;  // first-stage estimate
  Eigen::MatrixXd sigma;     // asymptotic variance of sqrt(T)(beta_raw - beta); empty if unavailable

  // Enters projections and bias terms.
  bool usable() const { return status == CellStatus::Converged || status == CellStatus::HalfPanelFallback; }
  // Has a coefficient vector, possibly from a separated or non-converged fit.
  bool has_beta() const { return beta.size() > 0; }
  bool has_sigma() const { return sigma.size() > 0; }
};

// Per-unit, per-threshold coefficients on a common grid. A unit's first-stage
// coefficient is a step function in y that only changes when y crosses one of
// the unit's own outcomes, so grid points sharing an indicator pattern share
// one fit.
class CoefficientField {
 public:
  ThresholdGrid grid;
  Link link;
  std::vector<UnitDesign> designs;
  std::vector<std::vector<DrFit>> fits;     // distinct fits per unit
  std::vector<std::vector<FieldCell>> cells;  // [unit][grid point]
  std::string correction = "none";

  std::size_t units() const { return cells.size(); }
  int dim() const { return designs.empty() ? 0 : designs.front().layout.dim(); }
  const FieldCell& cell(std::size_t i, std::size_t j) const { return cells[i][j]; }
  double periods(std::size_t i) const { return static_cast<double>(designs[i].periods()); }

  // Right-continuous step accessor with jumps at grid points; empty when y is
  // below the grid or the covering cell carries no coefficient.
  std::optional<Eigen::VectorXd> beta_at(std::size_t i, double y) const;

  int count(std::size_t j, CellStatus s) const;
  // Units whose cell at grid point j enters projections (N_01 among fitted cells).
  std::vector<std::size_t> usable_units(std::size_t j) const;
};

CoefficientField fit_field(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid, const Link& link,
                           const FitOptions& opts = {});

}  // namespace hetdr
