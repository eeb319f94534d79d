#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <span>
#include <vector>

#include "hetdr/debias.hpp"
#include "hetdr/link.hpp"
#include "hetdr/panel.hpp"

namespace hetdr {

// K-state chain on a unit's distinct outcomes. Column k of P is the law of the
// next state given previous state states[k].
struct UnitMarkovChain {
  std::vector<double> states;
  Eigen::MatrixXd q;  // rearranged CDF matrix: q(j, k) = Pr(next <= states[j] | prev = states[k])
  Eigen::MatrixXd p;  // first differences of q down each column
  Eigen::VectorXd pi;
  bool ergodic_ok = false;

  Eigen::Index size() const { return static_cast<Eigen::Index>(states.size()); }
};

// Distinct sorted outcomes of a unit's usable window.
std::vector<double> unit_states(const UnitDesign& design);

// coefs[j] = β(states[j]) for j < K-1 (the top threshold is the sure event).
// Requires a (1, y_{t-1}) or (y_{t-1}) design without covariates. Each column
// of Q is sorted across thresholds before differencing.
UnitMarkovChain build_chain(const std::vector<double>& states, const DesignLayout& layout,
                            const std::vector<Eigen::VectorXd>& coefs, const Link& link);

// Least-squares solution of [I - P; 1'] π = e_{K+1}, clipped to the simplex.
// Throws ReducibleChain when the stacked system is rank deficient.
Eigen::VectorXd ergodic(const Eigen::MatrixXd& p);

struct ChainOptions {
  DebiasOptions debias;
  // Correct π with a half-panel jackknife: 2π̂ - (π̂⁽¹⁾ + π̂⁽²⁾)/2.
  // Uses first-stage coefficients throughout, since the jackknife then removes
  // both the coefficient bias and the nonlinearity bias of π.
  bool jackknife_pi = false;
};

// Coefficients of a unit at each of its own states (below the maximum),
// debiased per opts; unusable thresholds fall back to whatever coefficient the
// fit produced, and throw NotIdentified when there is none.
std::vector<Eigen::VectorXd> unit_state_coefficients(const UnitDesign& design, const std::vector<double>& states,
                                                     const Link& link, const DebiasOptions& opts);

struct ChainSet {
  std::vector<std::optional<UnitMarkovChain>> chains;  // empty when the unit was flagged
  std::vector<std::string> reasons;                    // why a unit was flagged
  std::size_t n_ok() const;
};

// Optional shift(unit, y) is added to each coefficient, e.g. θ̂(y)[g(z_i) - z_i].
using CoefficientShift = std::function<Eigen::VectorXd(std::size_t unit, double y)>;

ChainSet build_chains(const std::vector<UnitDesign>& designs, const Link& link, const ChainOptions& opts,
                      const CoefficientShift& shift = {});

// F̂_∞(y) = (1/N) Σ_i Σ_{k: y_i^k <= y} π̂_ik over unflagged units.
Eigen::VectorXd stationary_distribution(const ChainSet& chains, std::span<const double> grid);

// Pr(y_{t+h} < y_p | y_t < y_q) starting from π̂ restricted below y_q.
double mobility(const UnitMarkovChain& chain, double y_p, double y_q, int h);

struct Recurrence {
  std::vector<double> pmf;  // pmf[h-1] = Pr(first time above y_p is h)
  double expected = 0.0;    // +inf when escape is impossible
};

Recurrence recurrence(const UnitMarkovChain& chain, double y_p, int max_h = 50);

struct MobilitySummary {
  double mean = 0.0;
  std::vector<double> levels;
  std::vector<double> quantiles;
  std::size_t n = 0;
};

// Mean and type-1 quantiles over included units; throws EmptySet.
MobilitySummary aggregate_mobility(std::span<const double> values, std::span<const double> levels);

}  // namespace hetdr
