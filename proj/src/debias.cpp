#include "hetdr/debias.hpp"

#include <cmath>
#include <map>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"

namespace hetdr {

DebiasMethod parse_debias(std::string_view name) {
  if (name == "none") return DebiasMethod::None;
  if (name == "analytical") return DebiasMethod::Analytical;
  if (name == "jackknife") return DebiasMethod::Jackknife;
  throw Error(ErrorCode::InvalidArgument,
              "unknown debias method '" + std::string(name) + "' (expected analytical|jackknife|none)");
}

std::string to_string(DebiasMethod m) {
  switch (m) {
    case DebiasMethod::None: return "none";
    case DebiasMethod::Analytical: return "analytical";
    case DebiasMethod::Jackknife: return "jackknife";
  }
  return "none";
}

int default_nw_lags(Eigen::Index periods) {
  return static_cast<int>(std::floor(std::cbrt(static_cast<double>(periods)) + 1e-12));
}

LongRunVariance newey_west(const Eigen::MatrixXd& scores, int lags) {
  const Eigen::Index T = scores.rows();
  if (lags < 0) throw Error(ErrorCode::InvalidArgument, "Newey-West lags must be nonnegative");
  if (lags >= T) throw Error(ErrorCode::InvalidArgument, "Newey-West lags must be smaller than T");
  LongRunVariance out;
  out.lags = lags;
  out.xi = scores.transpose() * scores;
  for (int h = 1; h <= lags; ++h) {
    const double weight = 1.0 - static_cast<double>(h) / lags;
    if (weight <= 0.0) continue;
    const Eigen::MatrixXd gamma = scores.bottomRows(T - h).transpose() * scores.topRows(T - h);
    out.xi += weight * (gamma + gamma.transpose());
  }
  out.xi /= static_cast<double>(T);
  return out;
}

Eigen::MatrixXd sandwich_variance(const Eigen::MatrixXd& hessian, const LongRunVariance& lrv) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(hessian);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularMatrix, "singular Hessian in sandwich variance");
  const Eigen::MatrixXd hinv = lu.inverse();
  Eigen::MatrixXd s = hinv * lrv.xi * hinv;
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd sandwich_variance(const DrFit& fit, const LongRunVariance& lrv) {
  return sandwich_variance(fit.hessian, lrv);
}

Eigen::VectorXd analytical_bias(const UnitDesign& d, double y, const Link& link, const Eigen::VectorXd& beta,
                                int lags) {
  const Eigen::Index T = d.periods(), k = d.x.cols();
  const double Td = static_cast<double>(T);
  Eigen::MatrixXd psi(T, k);
  Eigen::VectorXd d2(T), d3(T);
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double s = -d.x.row(t).dot(beta);
    const auto l = link.loglik(s, d.y(t) <= y);
    psi.row(t) = -l.d1 * d.x.row(t);
    d2(t) = l.d2;
    d3(t) = l.d3;
    info.noalias() -= l.d2 * d.x.row(t).transpose() * d.x.row(t);
  }
  info /= Td;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(info);
  lu.setThreshold(1e-12);
  if (!lu.isInvertible()) throw Error(ErrorCode::SingularMatrix, "singular Hessian in bias estimate");
  const Eigen::MatrixXd hinv = lu.inverse();
  const auto lrv = newey_west(psi, lags);
  const Eigen::MatrixXd V = hinv * lrv.xi * hinv;

  // Curvature: ∂³ℓ_t/∂β_r∂β_k∂β_l = -ℓ'''(s_t) x_r x_k x_l.
  Eigen::VectorXd curvature = Eigen::VectorXd::Zero(k);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd x = d.x.row(t).transpose();
    curvature -= d3(t) * x.dot(V * x) * x;
  }
  curvature /= Td;

  // Covariance between the Hessian at t and earlier scores, H_t - H = -(ℓ''(s_t) x x' + info).
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(k);
  const Eigen::MatrixXd u = psi * hinv.transpose();  // row t: (H^{-1} ψ_t)'
  for (int j = 0; j <= lags; ++j) {
    const double weight = j == 0 ? 1.0 : 1.0 - static_cast<double>(j) / lags;
    if (weight <= 0.0) continue;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(k);
    for (Eigen::Index t = j; t < T; ++t) {
      const Eigen::VectorXd x = d.x.row(t).transpose();
      const Eigen::VectorXd ut = u.row(t - j).transpose();
      acc += (-d2(t) * x.dot(ut)) * x - info * ut;
    }
    cross += weight * acc / Td;
  }
  return hinv * (0.5 * curvature - cross);
}

Eigen::VectorXd analytical_bias(const UnitDesign& design, const DrFit& fit, const Link& link, int lags) {
  return analytical_bias(design, fit.threshold, link, fit.beta, lags);
}

namespace {

int lags_for(const UnitDesign& d, int nw_lags) {
  int L = nw_lags < 0 ? default_nw_lags(d.periods()) : nw_lags;
  if (L >= d.periods()) L = static_cast<int>(d.periods()) - 1;
  return L;
}

}  // namespace

void attach_sandwiches(CoefficientField& field, int nw_lags) {
  parallel_for(field.units(), [&](std::size_t i) {
    const auto& d = field.designs[i];
    const int L = lags_for(d, nw_lags);
    std::map<int, Eigen::MatrixXd> cache;
    for (auto& cell : field.cells[i]) {
      if (!cell.usable() || cell.fit < 0) continue;
      auto it = cache.find(cell.fit);
      if (it == cache.end()) {
        const auto& f = field.fits[i][static_cast<std::size_t>(cell.fit)];
        Eigen::MatrixXd s;
        try {
          s = sandwich_variance(f, newey_west(f.scores, L));
        } catch (const Error& e) {
          log::warn("unit " + std::to_string(i) + ": " + e.what());
        }
        it = cache.emplace(cell.fit, std::move(s)).first;
      }
      cell.sigma = it->second;
    }
  });
}

CoefficientField debias_analytical(const CoefficientField& field, int nw_lags) {
  CoefficientField out = field;
  bool missing_sigma = false;
  for (const auto& row : out.cells)
    for (const auto& c : row)
      if (c.usable() && !c.has_sigma()) missing_sigma = true;
  if (missing_sigma) attach_sandwiches(out, nw_lags);

  parallel_for(out.units(), [&](std::size_t i) {
    const auto& d = out.designs[i];
    const int L = lags_for(d, nw_lags);
    const double T = static_cast<double>(d.periods());
    std::map<int, Eigen::VectorXd> corrected;
    for (auto& cell : out.cells[i]) {
      if (cell.status != CellStatus::Converged || cell.fit < 0) continue;
      auto it = corrected.find(cell.fit);
      if (it == corrected.end()) {
        const auto& f = out.fits[i][static_cast<std::size_t>(cell.fit)];
        Eigen::VectorXd b = cell.beta_raw;
        try {
          b = cell.beta_raw - analytical_bias(d, f.threshold, out.link, cell.beta, L) / T;
        } catch (const Error& e) {
          log::warn("unit " + std::to_string(i) + ": bias correction skipped, " + e.what());
        }
        it = corrected.emplace(cell.fit, std::move(b)).first;
      }
      cell.beta = it->second;
    }
  });
  out.correction = "analytical";
  return out;
}

CoefficientField debias_jackknife(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid,
                                  const Link& link, const FitOptions& opts, int nw_lags) {
  CoefficientField full = fit_field(designs, grid, link, opts);
  attach_sandwiches(full, nw_lags);

  std::vector<UnitDesign> first, second;
  first.reserve(designs.size());
  second.reserve(designs.size());
  for (const auto& d : designs) {
    const Eigen::Index T = d.periods();
    const Eigen::Index start = T % 2;
    const Eigen::Index half = (T - start) / 2;
    if (half < 1) {
      // A single-row window identifies no threshold, so its halves are never used.
      first.push_back(d);
      second.push_back(d);
      continue;
    }
    first.push_back(slice_design(d, start, start + half));
    second.push_back(slice_design(d, start + half, T));
  }
  // Half windows legitimately fail more often; their failures become fallbacks below.
  FitOptions half_opts = opts;
  half_opts.log_failures = false;
  const CoefficientField f1 = fit_field(first, grid, link, half_opts);
  const CoefficientField f2 = fit_field(second, grid, link, half_opts);

  int fallbacks = 0;
  for (std::size_t i = 0; i < full.units(); ++i) {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      auto& cell = full.cells[i][j];
      if (cell.status != CellStatus::Converged) continue;
      const auto& a = f1.cells[i][j];
      const auto& b = f2.cells[i][j];
      if (a.status == CellStatus::Converged && b.status == CellStatus::Converged) {
        cell.beta = 2.0 * cell.beta_raw - 0.5 * (a.beta_raw + b.beta_raw);
      } else {
        cell.status = CellStatus::HalfPanelFallback;
        ++fallbacks;
      }
    }
  }
  if (fallbacks > 0) {
    log::info("jackknife: " + std::to_string(fallbacks) + " cells kept the first-stage estimate");
  }
  full.correction = "jackknife";
  return full;
}

CoefficientField estimate_field(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid, const Link& link,
                                const DebiasOptions& opts) {
  switch (opts.method) {
    case DebiasMethod::Jackknife: return debias_jackknife(designs, grid, link, opts.fit, opts.nw_lags);
    case DebiasMethod::Analytical: {
      auto field = fit_field(designs, grid, link, opts.fit);
      attach_sandwiches(field, opts.nw_lags);
      return debias_analytical(field, opts.nw_lags);
    }
    case DebiasMethod::None:
    default: {
      auto field = fit_field(designs, grid, link, opts.fit);
      attach_sandwiches(field, opts.nw_lags);
      return field;
    }
  }
}

}  // namespace hetdr
