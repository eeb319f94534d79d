#include "hetdr/dr_fit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"

namespace hetdr {
namespace {

struct Evaluation {
  double loglik = 0.0;
  Eigen::VectorXd gradient;  // sum over t
  Eigen::MatrixXd info;      // sum over t of -∂²ℓ_t
};

double loglik_only(const UnitDesign& d, double y, const Link& link, const Eigen::VectorXd& beta) {
  double ll = 0.0;
  for (Eigen::Index t = 0; t < d.periods(); ++t) {
    const double s = -d.x.row(t).dot(beta);
    ll += link.loglik(s, d.y(t) <= y).value;
  }
  return ll;
}

Evaluation evaluate(const UnitDesign& d, double y, const Link& link, const Eigen::VectorXd& beta) {
  const Eigen::Index k = d.x.cols();
  Evaluation e;
  e.gradient = Eigen::VectorXd::Zero(k);
  e.info = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index t = 0; t < d.periods(); ++t) {
    const double s = -d.x.row(t).dot(beta);
    const auto l = link.loglik(s, d.y(t) <= y);
    e.loglik += l.value;
    // s = -x'β, so ∂ℓ/∂β = -ℓ'(s) x and ∂²ℓ/∂β∂β' = ℓ''(s) x x'.
    e.gradient.noalias() -= l.d1 * d.x.row(t).transpose();
    e.info.noalias() -= l.d2 * d.x.row(t).transpose() * d.x.row(t);
  }
  return e;
}

}  // namespace

const char* to_string(CellStatus s) {
  switch (s) {
    case CellStatus::BelowRange: return "below_range";
    case CellStatus::AboveRange: return "above_range";
    case CellStatus::Converged: return "converged";
    case CellStatus::Separated: return "separated";
    case CellStatus::MaxIterExceeded: return "max_iter";
    case CellStatus::Failed: return "failed";
    case CellStatus::HalfPanelFallback: return "half_panel_fallback";
  }
  return "unknown";
}

ScoreHessian score_hessian(const UnitDesign& d, double y, const Link& link, const Eigen::VectorXd& beta) {
  const Eigen::Index T = d.periods(), k = d.x.cols();
  ScoreHessian out;
  out.scores.resize(T, k);
  out.hessian = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double s = -d.x.row(t).dot(beta);
    const auto l = link.loglik(s, d.y(t) <= y);
    out.loglik += l.value;
    out.scores.row(t) = -l.d1 * d.x.row(t);
    out.hessian.noalias() -= l.d2 * d.x.row(t).transpose() * d.x.row(t);
  }
  out.hessian /= static_cast<double>(T);
  return out;
}

DrFit fit_unit_threshold(const UnitDesign& d, double y, const Link& link, const FitOptions& opts) {
  if (classify(d, y) != Identification::Identified) {
    throw Error(ErrorCode::NotIdentified, "threshold outside [min, max) of the unit's outcomes");
  }
  const Eigen::Index k = d.x.cols();
  const double T = static_cast<double>(d.periods());
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
    if (qr.rank() < k) throw Error(ErrorCode::RankDeficient, "design matrix is not of full column rank");
  }

  DrFit fit;
  fit.threshold = y;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  auto e = evaluate(d, y, link, beta);
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    if (e.gradient.norm() / T < opts.tol) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(e.info);
    const auto diag = ldlt.vectorD();
    const double dmax = diag.cwiseAbs().maxCoeff();
    const double dmin = diag.minCoeff();
    const bool well_conditioned = ldlt.info() == Eigen::Success && dmin > 0 && dmax / dmin < opts.max_condition;
    if (well_conditioned) {
      dir = ldlt.solve(e.gradient);
    } else {
      // Ill-conditioned: scaled gradient ascent.
      const double scale = std::max(e.info.diagonal().maxCoeff(), 1e-8);
      dir = e.gradient / scale;
    }

    double step = 1.0;
    Eigen::VectorXd trial = beta + dir;
    double ll_trial = loglik_only(d, y, link, trial);
    while (ll_trial < e.loglik - 1e-12 * std::abs(e.loglik) && step > 1e-10) {
      step *= 0.5;
      trial = beta + step * dir;
      ll_trial = loglik_only(d, y, link, trial);
    }
    const bool improved = ll_trial > e.loglik;
    beta = trial;
    e = evaluate(d, y, link, beta);
    if (beta.norm() > opts.separation_norm && improved) {
      fit.status = FitStatus::Separated;
      ++it;
      break;
    }
    if (step <= 1e-10) {
      // No ascent possible along the direction; treat as converged if the score is small.
      converged = e.gradient.norm() / T < std::sqrt(opts.tol);
      ++it;
      break;
    }
  }
  if (fit.status != FitStatus::Separated) {
    fit.status = converged ? FitStatus::Converged : FitStatus::MaxIterExceeded;
  }
  fit.iterations = it;
  fit.beta = beta;
  auto sh = score_hessian(d, y, link, beta);
  if (fit.status == FitStatus::Converged) {
    // A vanishing score can also mean the index ran off to ±inf in some
    // direction: the Hessian then collapses relative to the design's scale.
    const Eigen::MatrixXd gram = d.x.transpose() * d.x / T;
    const double hmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sh.hessian).eigenvalues().minCoeff();
    const double gmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
    if (hmin < kSeparationCurvature * gmax) fit.status = FitStatus::Separated;
  }
  fit.scores = std::move(sh.scores);
  fit.hessian = std::move(sh.hessian);
  fit.loglik = sh.loglik;
  return fit;
}

std::optional<Eigen::VectorXd> CoefficientField::beta_at(std::size_t i, double y) const {
  const long j = grid.locate(y);
  if (j < 0) return std::nullopt;
  const auto& c = cells[i][static_cast<std::size_t>(j)];
  if (!c.has_beta()) return std::nullopt;
  return c.beta;
}

int CoefficientField::count(std::size_t j, CellStatus s) const {
  int n = 0;
  for (const auto& row : cells) n += row[j].status == s ? 1 : 0;
  return n;
}

std::vector<std::size_t> CoefficientField::usable_units(std::size_t j) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i][j].usable()) out.push_back(i);
  return out;
}

namespace {

CellStatus cell_status(FitStatus s) {
  switch (s) {
    case FitStatus::Converged: return CellStatus::Converged;
    case FitStatus::Separated: return CellStatus::Separated;
    case FitStatus::MaxIterExceeded: return CellStatus::MaxIterExceeded;
  }
  return CellStatus::Failed;
}

}  // namespace

CoefficientField fit_field(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid, const Link& link,
                           const FitOptions& opts) {
  if (designs.empty()) throw Error(ErrorCode::EmptyPanel, "no units to fit");
  CoefficientField field;
  field.grid = grid;
  field.link = link;
  field.designs = designs;
  const std::size_t n = designs.size(), g = grid.size();
  field.fits.resize(n);
  field.cells.assign(n, std::vector<FieldCell>(g));

  parallel_for(n, [&](std::size_t i) {
    const auto& d = designs[i];
    std::vector<double> sorted(d.y.data(), d.y.data() + d.y.size());
    std::sort(sorted.begin(), sorted.end());
    const auto T = static_cast<long>(sorted.size());
    std::map<long, int> by_count;  // #{y_it <= y} -> fit index
    auto& fits = field.fits[i];
    for (std::size_t j = 0; j < g; ++j) {
      auto& cell = field.cells[i][j];
      const double y = grid[j];
      const long c = std::upper_bound(sorted.begin(), sorted.end(), y) - sorted.begin();
      if (c == 0) {
        cell.status = CellStatus::BelowRange;
        continue;
      }
      if (c == T) {
        cell.status = CellStatus::AboveRange;
        continue;
      }
      auto it = by_count.find(c);
      if (it == by_count.end()) {
        int idx = -1;
        try {
          fits.push_back(fit_unit_threshold(d, y, link, opts));
          idx = static_cast<int>(fits.size()) - 1;
        } catch (const Error& err) {
          if (opts.log_failures) {
            std::ostringstream msg;
            msg << "unit " << i << " at y=" << y << ": " << err.what();
            log::warn(msg.str());
          }
        }
        it = by_count.emplace(c, idx).first;
      }
      cell.fit = it->second;
      if (cell.fit < 0) {
        cell.status = CellStatus::Failed;
        continue;
      }
      const auto& f = fits[static_cast<std::size_t>(cell.fit)];
      cell.status = cell_status(f.status);
      cell.beta = f.beta;
      cell.beta_raw = f.beta;
    }
  });

  int separated = 0, failed = 0;
  for (std::size_t j = 0; j < g; ++j) {
    separated += field.count(j, CellStatus::Separated);
    failed += field.count(j, CellStatus::MaxIterExceeded) + field.count(j, CellStatus::Failed);
  }
  if (separated + failed > 0) {
    log::info("fit_field: " + std::to_string(separated) + " separated and " + std::to_string(failed) +
              " failed cells");
  }
  return field;
}

}  // namespace hetdr
