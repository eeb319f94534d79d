#include "hetdr/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <atomic>
#include <memory>
#include <random>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"
#include "hetdr/projection.hpp"

namespace hetdr {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kScaleFloor = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Type-7 (linear interpolation) quantile of sorted data.
double quantile7(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

// Type-1 quantile of unsorted data; NaN when empty.
double quantile1(std::vector<double> v, double p) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  return empirical_quantile(v, p);
}

void check_options(const BootstrapOptions& opts) {
  if (opts.draws < 1) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one draw");
  if (!(opts.level > 0.0 && opts.level < 1.0)) throw Error(ErrorCode::InvalidArgument, "level must lie in (0,1)");
  if (opts.draws < 20) {
    log::warn("only " + std::to_string(opts.draws) + " bootstrap draws; critical values are unreliable");
  }
}

// Runs compute(b, counts) for every draw, redrawing rank-deficient resamples.
template <class Fn>
int for_each_draw(std::size_t n, const BootstrapOptions& opts, Fn&& compute) {
  std::atomic<int> redraws{0};
  parallel_for(static_cast<std::size_t>(opts.draws), [&](std::size_t b) {
    for (int r = 0;; ++r) {
      const auto seed = draw_seed(opts.seed, static_cast<std::uint64_t>(b) + (static_cast<std::uint64_t>(r) << 40));
      try {
        compute(static_cast<int>(b), resample_counts(n, seed));
        return;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::RankDeficient || r >= opts.max_retries) throw;
        ++redraws;
      }
    }
  });
  return redraws.load();
}

struct ProjectionSetup {
  std::vector<std::vector<std::size_t>> units;  // usable units per grid point
  std::vector<ProjectionMoments> moments;
  std::vector<Eigen::MatrixXd> theta;

  ProjectionSetup(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w) {
    const auto g = field.grid.size();
    units.resize(g);
    for (std::size_t j = 0; j < g; ++j) {
      units[j] = field.usable_units(j);
      const auto n = static_cast<Eigen::Index>(units[j].size());
      if (n == 0) throw Error(ErrorCode::EmptySet, "no identified units at y=" + std::to_string(field.grid[j]));
      Eigen::MatrixXd b(n, field.dim()), zs(n, z.cols()), ws(n, w.cols());
      for (Eigen::Index k = 0; k < n; ++k) {
        const auto i = units[j][static_cast<std::size_t>(k)];
        b.row(k) = field.cells[i][j].beta.transpose();
        zs.row(k) = z.row(static_cast<Eigen::Index>(i));
        ws.row(k) = w.row(static_cast<Eigen::Index>(i));
      }
      moments.emplace_back(b, zs, ws);
      theta.push_back(moments.back().theta());
    }
  }

  Eigen::MatrixXd theta_at(std::size_t j, const Eigen::VectorXd& counts) const {
    Eigen::VectorXd c(static_cast<Eigen::Index>(units[j].size()));
    for (std::size_t k = 0; k < units[j].size(); ++k) c(static_cast<Eigen::Index>(k)) = counts(static_cast<Eigen::Index>(units[j][k]));
    return moments[j].theta(c);
  }
};

double eta_vec(const Eigen::MatrixXd& theta, const Eigen::VectorXd& eta) {
  if (eta.size() != theta.size()) throw Error(ErrorCode::InvalidArgument, "selection vector has the wrong length");
  return eta.dot(Eigen::Map<const Eigen::VectorXd>(theta.data(), theta.size()));
}

}  // namespace

ScaleMethod parse_scale(std::string_view name) {
  if (name == "iqr") return ScaleMethod::Iqr;
  if (name == "sd") return ScaleMethod::Sd;
  throw Error(ErrorCode::InvalidArgument, "unknown scale method '" + std::string(name) + "' (expected iqr|sd)");
}

std::string to_string(ScaleMethod m) { return m == ScaleMethod::Iqr ? "iqr" : "sd"; }

std::uint64_t draw_seed(std::uint64_t seed, std::uint64_t draw) {
  return splitmix64(splitmix64(seed) ^ splitmix64(draw + 0x632be59bd9b4e019ULL));
}

std::vector<std::size_t> resample_units(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "cannot resample an empty set");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

Eigen::VectorXd resample_counts(std::size_t n, std::uint64_t seed) {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (auto i : resample_units(n, seed)) c(static_cast<Eigen::Index>(i)) += 1.0;
  return c;
}

ScaleEstimate scale_estimate(std::span<const double> draws, ScaleMethod method) {
  std::vector<double> v;
  v.reserve(draws.size());
  for (double x : draws)
    if (!std::isnan(x)) v.push_back(x);
  ScaleEstimate out;
  auto sd = [&v] {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  if (v.size() >= 2) {
    if (method == ScaleMethod::Sd) {
      out.value = sd();
    } else {
      std::sort(v.begin(), v.end());
      out.value = (quantile7(v, 0.75) - quantile7(v, 0.25)) / kNormalIqr;
      // Grid-valued statistics (quantiles) can tie on more than half the draws.
      if (!(out.value > kScaleFloor)) out.value = sd();
    }
  }
  if (!(out.value > kScaleFloor)) {
    out.value = kScaleFloor;
    out.degenerate = true;
  }
  return out;
}

bool BootstrapBand::covers_at(std::size_t k, double truth) const {
  const auto r = static_cast<Eigen::Index>(k);
  return lower(r) <= truth && truth <= upper(r);
}

bool BootstrapBand::covers(const Eigen::VectorXd& truth) const {
  for (std::size_t k = 0; k < points.size(); ++k)
    if (included[k] && !covers_at(k, truth(static_cast<Eigen::Index>(k)))) return false;
  return true;
}

namespace {

BootstrapBand make_band(std::vector<double> points, const Eigen::VectorXd& estimate, const Eigen::MatrixXd& dev,
                        const BootstrapOptions& opts, std::vector<bool> included, bool studentized) {
  const auto G = static_cast<Eigen::Index>(points.size());
  if (estimate.size() != G || dev.cols() != G) {
    throw Error(ErrorCode::InvalidArgument, "band inputs disagree on the number of points");
  }
  if (included.empty()) included.assign(points.size(), true);
  BootstrapBand band;
  band.points = std::move(points);
  band.estimate = estimate;
  band.draws = static_cast<int>(dev.rows());
  band.scale_method = opts.scale;
  band.studentized = studentized;
  band.low_draws = dev.rows() < 20;
  band.scale = Eigen::VectorXd::Ones(G);
  band.pointwise_critical = Eigen::VectorXd::Constant(G, kNaN);
  bool all_zero = true;
  for (Eigen::Index k = 0; k < G; ++k) {
    const Eigen::VectorXd col = dev.col(k);
    const auto s = scale_estimate(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), opts.scale);
    if (studentized) band.scale(k) = s.value;
    if (included[static_cast<std::size_t>(k)] && !s.degenerate) all_zero = false;
    std::vector<double> t;
    for (Eigen::Index b = 0; b < dev.rows(); ++b)
      if (!std::isnan(dev(b, k))) t.push_back(std::abs(dev(b, k)) / band.scale(k));
    band.pointwise_critical(k) = quantile1(std::move(t), opts.level);
  }
  band.degenerate = all_zero;
  std::vector<double> sups;
  sups.reserve(static_cast<std::size_t>(dev.rows()));
  for (Eigen::Index b = 0; b < dev.rows(); ++b) {
    double sup = 0.0;
    for (Eigen::Index k = 0; k < G; ++k) {
      if (!included[static_cast<std::size_t>(k)] || std::isnan(dev(b, k))) continue;
      sup = std::max(sup, std::abs(dev(b, k)) / band.scale(k));
    }
    sups.push_back(sup);
  }
  band.critical = quantile1(std::move(sups), opts.level);
  band.included = std::move(included);
  band.lower = band.estimate - band.critical * band.scale;
  band.upper = band.estimate + band.critical * band.scale;
  if (band.degenerate) log::warn("bootstrap draws are degenerate (no spread at any point)");
  return band;
}

}  // namespace

BootstrapBand studentized_band(std::vector<double> points, const Eigen::VectorXd& estimate,
                               const Eigen::MatrixXd& deviations, const BootstrapOptions& opts,
                               std::vector<bool> included) {
  return make_band(std::move(points), estimate, deviations, opts, std::move(included), true);
}

BootstrapBand conservative_band(std::vector<double> points, const Eigen::VectorXd& estimate,
                                const Eigen::MatrixXd& deviations, const BootstrapOptions& opts,
                                std::vector<bool> included) {
  return make_band(std::move(points), estimate, deviations, opts, std::move(included), false);
}

ProjectionDraws bootstrap_projection(const CoefficientField& field, const Eigen::MatrixXd& z,
                                     const Eigen::MatrixXd& w, const Eigen::VectorXd& eta,
                                     const BootstrapOptions& opts) {
  check_options(opts);
  const ProjectionSetup setup(field, z, w);
  const auto G = static_cast<Eigen::Index>(field.grid.size());
  ProjectionDraws out;
  out.grid = field.grid.points;
  out.estimate.resize(G);
  for (Eigen::Index j = 0; j < G; ++j) out.estimate(j) = eta_vec(setup.theta[static_cast<std::size_t>(j)], eta);
  out.deviations.resize(opts.draws, G);
  out.redraws = for_each_draw(field.units(), opts, [&](int b, const Eigen::VectorXd& counts) {
    Eigen::VectorXd row(G);
    for (Eigen::Index j = 0; j < G; ++j) {
      row(j) = eta_vec(setup.theta_at(static_cast<std::size_t>(j), counts), eta) - out.estimate(j);
    }
    out.deviations.row(b) = row.transpose();
  });
  return out;
}

BootstrapBand band_projection(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                              const Eigen::VectorXd& eta, const BootstrapOptions& opts) {
  const auto d = bootstrap_projection(field, z, w, eta, opts);
  auto band = studentized_band(d.grid, d.estimate, d.deviations, opts);
  band.target = "projection";
  return band;
}

BootstrapBand band_conservative(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& eta, const BootstrapOptions& opts) {
  const auto d = bootstrap_projection(field, z, w, eta, opts);
  auto band = conservative_band(d.grid, d.estimate, d.deviations, opts);
  band.target = "projection_conservative";
  return band;
}

namespace {

// Precomputed pieces of F̂_t and Ĝ_t so each draw only reweights units and,
// for a characteristic change, re-shifts the counterfactual indices.
class DistributionEngine {
 public:
  DistributionEngine(const CoefficientField& field, const CounterfactualSpec& spec) : field_(field) {
    const auto rows = reference_rows(field, spec.period);
    x_ = rows.x;
    hx_ = x_;
    // The transform sees only units observed at the reference period.
    std::vector<Eigen::Index> present;
    for (Eigen::Index i = 0; i < x_.rows(); ++i)
      if (x_.row(i).allFinite()) present.push_back(i);
    if (present.empty()) throw Error(ErrorCode::EmptySet, "no units observed at the reference period");
    if (!spec.h.is_identity()) {
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(present.size()), x_.cols());
      for (std::size_t k = 0; k < present.size(); ++k) sub.row(static_cast<Eigen::Index>(k)) = x_.row(present[k]);
      const Eigen::MatrixXd moved = spec.h.apply(sub, field.designs.front().layout);
      for (std::size_t k = 0; k < present.size(); ++k) hx_.row(present[k]) = moved.row(static_cast<Eigen::Index>(k));
    }
    psi_f_ = unit_contributions(field, x_, spec.dist);
    shift_ = !spec.g.is_identity();
    if (shift_) {
      dz_ = spec.g.apply(spec.z) - spec.z;
      projection_ = std::make_unique<ProjectionSetup>(field, spec.z, spec.w);
      const auto n = static_cast<Eigen::Index>(field.units());
      const auto g = static_cast<Eigen::Index>(field.grid.size());
      tail_ = Eigen::MatrixXd::Constant(n, g, kNaN);
      s0_ = Eigen::MatrixXd::Constant(n, g, kNaN);
      quad_ = Eigen::MatrixXd::Constant(n, g, kNaN);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!hx_.row(i).allFinite()) continue;
        const Eigen::VectorXd hx = hx_.row(i).transpose();
        for (Eigen::Index j = 0; j < g; ++j) {
          const auto& cell = field.cells[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          if (cell.status == CellStatus::BelowRange) tail_(i, j) = 0.0;
          else if (cell.status == CellStatus::AboveRange) tail_(i, j) = 1.0;
          else if (cell.has_beta()) {
            s0_(i, j) = -hx.dot(cell.beta);
            if (spec.dist.bias_correction && cell.usable() && cell.has_sigma()) quad_(i, j) = hx.dot(cell.sigma * hx);
          }
        }
      }
    } else {
      psi_g_ = spec.h.is_identity() ? psi_f_ : unit_contributions(field, hx_, spec.dist);
    }
  }

  Eigen::VectorXd f(const Eigen::VectorXd& counts) const { return average(psi_f_, counts); }

  Eigen::VectorXd g(const Eigen::VectorXd& counts) const {
    if (!shift_) return average(psi_g_, counts);
    const auto n = s0_.rows(), G = s0_.cols();
    Eigen::VectorXd out(G);
    const Link& link = field_.link;
    for (Eigen::Index j = 0; j < G; ++j) {
      const Eigen::MatrixXd theta = projection_->theta_at(static_cast<std::size_t>(j), counts);
      double sum = 0.0, weight = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double c = counts(i);
        if (c == 0.0) continue;
        double v = tail_(i, j);
        if (std::isnan(v)) {
          if (std::isnan(s0_(i, j))) continue;
          const double s = s0_(i, j) - hx_.row(i).dot(theta * dz_.row(i).transpose());
          v = link.cdf(s);
          if (!std::isnan(quad_(i, j))) v -= 0.5 * link.d2(s) * quad_(i, j) / field_.periods(static_cast<std::size_t>(i));
        }
        sum += c * v;
        weight += c;
      }
      out(j) = weight > 0.0 ? sum / weight : kNaN;
    }
    return out;
  }

 private:
  static Eigen::VectorXd average(const Eigen::MatrixXd& psi, const Eigen::VectorXd& counts) {
    Eigen::VectorXd out(psi.cols());
    for (Eigen::Index j = 0; j < psi.cols(); ++j) {
      double sum = 0.0, weight = 0.0;
      for (Eigen::Index i = 0; i < psi.rows(); ++i) {
        const double c = counts(i);
        if (c == 0.0 || std::isnan(psi(i, j))) continue;
        sum += c * psi(i, j);
        weight += c;
      }
      out(j) = weight > 0.0 ? sum / weight : kNaN;
    }
    return out;
  }

  const CoefficientField& field_;
  Eigen::MatrixXd x_, hx_, psi_f_, psi_g_, dz_, tail_, s0_, quad_;
  bool shift_ = false;
  std::unique_ptr<ProjectionSetup> projection_;
};

}  // namespace

DistributionDraws bootstrap_distribution(const CoefficientField& field, const CounterfactualSpec& spec,
                                         const BootstrapOptions& opts, const DrawHook& hook) {
  check_options(opts);
  const DistributionEngine engine(field, spec);
  const auto n = field.units();
  const auto G = static_cast<Eigen::Index>(field.grid.size());
  DistributionDraws out;
  out.grid = field.grid;
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  out.f = engine.f(ones);
  out.g = engine.g(ones);
  out.f_draws.resize(opts.draws, G);
  out.g_draws.resize(opts.draws, G);
  out.redraws = for_each_draw(n, opts, [&](int b, const Eigen::VectorXd& counts) {
    const Eigen::VectorXd gs = engine.g(counts);  // may throw RankDeficient before anything is stored
    out.g_draws.row(b) = gs.transpose();
    out.f_draws.row(b) = engine.f(counts).transpose();
    if (hook) hook(b, counts, counts);
  });
  return out;
}

BootstrapBand band_distribution(const CoefficientField& field, const CounterfactualSpec& spec,
                                const BootstrapOptions& opts) {
  const auto d = bootstrap_distribution(field, spec, opts);
  const Eigen::MatrixXd dev = d.g_draws.rowwise() - d.g.transpose();
  auto band = studentized_band(d.grid.points, d.g, dev, opts);
  band.target = "distribution";
  return band;
}

QeBand band_qe(const DistributionDraws& d, std::span<const double> levels, const BootstrapOptions& opts) {
  QeBand out;
  out.curve = quantile_effect(d.grid, std::span<const double>(d.f.data(), static_cast<std::size_t>(d.f.size())),
                              std::span<const double>(d.g.data(), static_cast<std::size_t>(d.g.size())), levels);
  const auto L = static_cast<Eigen::Index>(levels.size());
  const auto B = d.f_draws.rows();
  Eigen::MatrixXd dev(B, L);
  out.sentinel_share.assign(levels.size(), 0.0);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::VectorXd fb = d.f_draws.row(b).transpose(), gb = d.g_draws.row(b).transpose();
    const auto qe = quantile_effect(d.grid, std::span<const double>(fb.data(), static_cast<std::size_t>(fb.size())),
                                    std::span<const double>(gb.data(), static_cast<std::size_t>(gb.size())), levels);
    for (Eigen::Index k = 0; k < L; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      if (!qe.valid[kk]) out.sentinel_share[kk] += 1.0 / static_cast<double>(B);
      dev(b, k) = qe.valid[kk] && out.curve.valid[kk] ? qe.values[kk] - out.curve.values[kk] : kNaN;
    }
  }
  std::vector<bool> included(levels.size());
  for (std::size_t k = 0; k < levels.size(); ++k) {
    included[k] = out.curve.valid[k] && out.sentinel_share[k] <= 0.01;
    if (!included[k]) log::warn("quantile level " + std::to_string(levels[k]) + " dropped from the QE band");
  }
  if (std::none_of(included.begin(), included.end(), [](bool x) { return x; })) {
    throw Error(ErrorCode::AllLevelsDropped, "every quantile level hit the edge of the grid");
  }
  Eigen::VectorXd est(L);
  for (Eigen::Index k = 0; k < L; ++k) est(k) = out.curve.values[static_cast<std::size_t>(k)];
  out.band = studentized_band(std::vector<double>(levels.begin(), levels.end()), est, dev, opts, included);
  out.band.target = "quantile_effect";
  return out;
}

QeBand band_qe(const CoefficientField& field, const CounterfactualSpec& spec, std::span<const double> levels,
               const BootstrapOptions& opts, const DrawHook& hook) {
  return band_qe(bootstrap_distribution(field, spec, opts, hook), levels, opts);
}

}  // namespace hetdr
