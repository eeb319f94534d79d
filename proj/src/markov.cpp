#include "hetdr/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"

namespace hetdr {
namespace {

// Per-threshold input to a chain: a coefficient, or a probability fixed by the
// tail rule when the threshold lies outside the window's range.
struct ThresholdValue {
  std::optional<Eigen::VectorXd> beta;
  double fixed = 0.0;
};

Eigen::VectorXd state_row(const DesignLayout& layout, double prev) {
  Eigen::VectorXd x(layout.dim());
  if (layout.has_constant) x(0) = 1.0;
  x(layout.first_lag()) = prev;
  return x;
}

UnitMarkovChain assemble(const std::vector<double>& states, const DesignLayout& layout,
                         const std::vector<ThresholdValue>& values, const Link& link) {
  const auto K = static_cast<Eigen::Index>(states.size());
  if (K < 2) throw Error(ErrorCode::InvalidArgument, "a chain needs at least two distinct states");
  if (layout.lags != 1 || layout.n_v != 0) {
    throw Error(ErrorCode::InvalidArgument, "Markov chains need a single-lag design without covariates");
  }
  if (static_cast<Eigen::Index>(values.size()) < K - 1) {
    throw Error(ErrorCode::InvalidArgument, "need one coefficient per state below the maximum");
  }
  UnitMarkovChain c;
  c.states = states;
  c.q.resize(K, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd x = state_row(layout, states[static_cast<std::size_t>(k)]);
    for (Eigen::Index j = 0; j + 1 < K; ++j) {
      const auto& v = values[static_cast<std::size_t>(j)];
      c.q(j, k) = v.beta ? link.cdf(-x.dot(*v.beta)) : v.fixed;
    }
    c.q(K - 1, k) = 1.0;
    std::sort(c.q.col(k).data(), c.q.col(k).data() + K);
  }
  c.p = c.q;
  for (Eigen::Index j = K - 1; j > 0; --j) c.p.row(j) -= c.q.row(j - 1);
  return c;
}

void project_to_simplex(Eigen::VectorXd& pi) {
  pi = pi.cwiseMax(0.0);
  const double s = pi.sum();
  if (!(s > 0.0)) throw Error(ErrorCode::ReducibleChain, "ergodic vector vanished after clipping");
  pi /= s;
}

std::optional<Eigen::VectorXd> half_pi(const UnitDesign& half, const std::vector<double>& states, const Link& link,
                                       const FitOptions& fit, const CoefficientShift& shift, std::size_t unit) {
  const std::vector<double> thresholds(states.begin(), states.end() - 1);
  FitOptions quiet = fit;
  quiet.log_failures = false;
  const auto field = fit_field({half}, ThresholdGrid(thresholds), link, quiet);
  std::vector<ThresholdValue> values(thresholds.size());
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    const auto& cell = field.cells[0][j];
    if (cell.status == CellStatus::BelowRange) values[j].fixed = 0.0;
    else if (cell.status == CellStatus::AboveRange) values[j].fixed = 1.0;
    else if (cell.has_beta()) {
      values[j].beta = cell.beta_raw;
      if (shift) *values[j].beta += shift(unit, thresholds[j]);
    } else {
      return std::nullopt;
    }
  }
  try {
    return ergodic(assemble(states, half.layout, values, link).p);
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<double> unit_states(const UnitDesign& design) {
  std::vector<double> s(design.y.data(), design.y.data() + design.y.size());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

UnitMarkovChain build_chain(const std::vector<double>& states, const DesignLayout& layout,
                            const std::vector<Eigen::VectorXd>& coefs, const Link& link) {
  std::vector<ThresholdValue> values(coefs.size());
  for (std::size_t j = 0; j < coefs.size(); ++j) values[j].beta = coefs[j];
  auto c = assemble(states, layout, values, link);
  try {
    c.pi = ergodic(c.p);
    c.ergodic_ok = true;
  } catch (const Error&) {
    c.ergodic_ok = false;
  }
  return c;
}

Eigen::VectorXd ergodic(const Eigen::MatrixXd& p) {
  const Eigen::Index K = p.rows();
  if (p.cols() != K) throw Error(ErrorCode::InvalidArgument, "transition matrix must be square");
  Eigen::MatrixXd a(K + 1, K);
  a.topRows(K) = Eigen::MatrixXd::Identity(K, K) - p;
  a.row(K).setOnes();
  Eigen::VectorXd e = Eigen::VectorXd::Zero(K + 1);
  e(K) = 1.0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < K) throw Error(ErrorCode::ReducibleChain, "no unique ergodic distribution");
  Eigen::VectorXd pi = qr.solve(e);
  if (pi.minCoeff() < -1e-10) log::debug("ergodic: clipped negative stationary probabilities");
  project_to_simplex(pi);
  return pi;
}

std::vector<Eigen::VectorXd> unit_state_coefficients(const UnitDesign& design, const std::vector<double>& states,
                                                     const Link& link, const DebiasOptions& opts) {
  if (states.size() < 2) throw Error(ErrorCode::InvalidArgument, "a chain needs at least two distinct states");
  const std::vector<double> thresholds(states.begin(), states.end() - 1);
  const auto field = estimate_field({design}, ThresholdGrid(thresholds), link, opts);
  std::vector<Eigen::VectorXd> out;
  out.reserve(thresholds.size());
  for (std::size_t j = 0; j < thresholds.size(); ++j) {
    const auto& cell = field.cells[0][j];
    if (!cell.has_beta()) {
      throw Error(ErrorCode::NotIdentified, "no coefficient at state " + std::to_string(thresholds[j]));
    }
    out.push_back(cell.beta);
  }
  return out;
}

std::size_t ChainSet::n_ok() const {
  return static_cast<std::size_t>(std::count_if(chains.begin(), chains.end(), [](const auto& c) { return c.has_value(); }));
}

ChainSet build_chains(const std::vector<UnitDesign>& designs, const Link& link, const ChainOptions& opts,
                      const CoefficientShift& shift) {
  ChainSet out;
  out.chains.resize(designs.size());
  out.reasons.resize(designs.size());
  DebiasOptions coef_opts = opts.debias;
  if (opts.jackknife_pi) coef_opts.method = DebiasMethod::None;
  parallel_for(designs.size(), [&](std::size_t i) {
    const auto& d = designs[i];
    try {
      const auto states = unit_states(d);
      auto coefs = unit_state_coefficients(d, states, link, coef_opts);
      if (shift) {
        for (std::size_t j = 0; j < coefs.size(); ++j) coefs[j] += shift(i, states[j]);
      }
      auto chain = build_chain(states, d.layout, coefs, link);
      if (!chain.ergodic_ok) throw Error(ErrorCode::ReducibleChain, "no unique ergodic distribution");
      if (opts.jackknife_pi) {
        const Eigen::Index T = d.periods();
        const Eigen::Index start = T % 2, half = (T - start) / 2;
        const auto p1 = half_pi(slice_design(d, start, start + half), states, link, coef_opts.fit, shift, i);
        const auto p2 = half_pi(slice_design(d, start + half, T), states, link, coef_opts.fit, shift, i);
        if (p1 && p2) {
          Eigen::VectorXd corrected = 2.0 * chain.pi - 0.5 * (*p1 + *p2);
          project_to_simplex(corrected);
          chain.pi = corrected;
        }
      }
      out.chains[i] = std::move(chain);
    } catch (const Error& e) {
      out.reasons[i] = e.what();
    }
  });
  const auto flagged = designs.size() - out.n_ok();
  if (flagged > 0) log::warn(std::to_string(flagged) + " units flagged while building Markov chains");
  return out;
}

Eigen::VectorXd stationary_distribution(const ChainSet& chains, std::span<const double> grid) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  std::size_t n = 0;
  for (const auto& c : chains.chains) {
    if (!c) continue;
    ++n;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      double mass = 0.0;
      for (std::size_t k = 0; k < c->states.size() && c->states[k] <= grid[j]; ++k)
        mass += c->pi(static_cast<Eigen::Index>(k));
      f(static_cast<Eigen::Index>(j)) += mass;
    }
  }
  if (n == 0) throw Error(ErrorCode::EmptySet, "no usable chains");
  return f / static_cast<double>(n);
}

namespace {

Eigen::VectorXd start_below(const UnitMarkovChain& chain, double cut) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(chain.size());
  for (Eigen::Index k = 0; k < chain.size(); ++k)
    if (chain.states[static_cast<std::size_t>(k)] < cut) v(k) = chain.pi(k);
  const double s = v.sum();
  if (!(s > 0.0)) throw Error(ErrorCode::NoStatesBelow, "no stationary mass below the conditioning quantile");
  return v / s;
}

}  // namespace

double mobility(const UnitMarkovChain& chain, double y_p, double y_q, int h) {
  if (h < 0) throw Error(ErrorCode::InvalidArgument, "horizon must be nonnegative");
  Eigen::VectorXd v = start_below(chain, y_q);
  for (int s = 0; s < h; ++s) v = chain.p * v;
  double mass = 0.0;
  for (Eigen::Index k = 0; k < chain.size(); ++k)
    if (chain.states[static_cast<std::size_t>(k)] < y_p) mass += v(k);
  return mass;
}

Recurrence recurrence(const UnitMarkovChain& chain, double y_p, int max_h) {
  std::vector<Eigen::Index> below;
  for (Eigen::Index k = 0; k < chain.size(); ++k)
    if (chain.states[static_cast<std::size_t>(k)] < y_p) below.push_back(k);
  if (below.empty()) throw Error(ErrorCode::NoStatesBelow, "no states below the poverty line");
  if (static_cast<Eigen::Index>(below.size()) == chain.size()) {
    throw Error(ErrorCode::EmptySet, "no states above the poverty line");
  }
  const auto m = static_cast<Eigen::Index>(below.size());
  const Eigen::VectorXd full = start_below(chain, y_p);
  Eigen::MatrixXd sub(m, m);
  Eigen::VectorXd v0(m);
  for (Eigen::Index a = 0; a < m; ++a) {
    v0(a) = full(below[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = chain.p(below[static_cast<std::size_t>(a)], below[static_cast<std::size_t>(b)]);
  }
  Recurrence out;
  Eigen::VectorXd v = v0;
  double stay = 1.0;
  for (int h = 1; h <= max_h; ++h) {
    v = sub * v;
    const double next = v.sum();
    out.pmf.push_back(std::max(stay - next, 0.0));
    stay = next;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd::Identity(m, m) - sub);
  lu.setThreshold(1e-12);
  out.expected = std::numeric_limits<double>::infinity();
  if (lu.isInvertible()) {
    const double h = lu.solve(v0).sum();
    if (std::isfinite(h) && h >= 1.0 - 1e-9) out.expected = h;
  }
  return out;
}

MobilitySummary aggregate_mobility(std::span<const double> values, std::span<const double> levels) {
  std::vector<double> v;
  for (double x : values)
    if (!std::isnan(x)) v.push_back(x);
  if (v.empty()) throw Error(ErrorCode::EmptySet, "no units to aggregate");
  std::sort(v.begin(), v.end());
  MobilitySummary out;
  out.n = v.size();
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  out.levels.assign(levels.begin(), levels.end());
  for (double tau : levels) out.quantiles.push_back(empirical_quantile(v, tau));
  return out;
}

}  // namespace hetdr
