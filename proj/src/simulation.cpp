#include "hetdr/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hetdr/counterfactual.hpp"
#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"
#include "hetdr/projection.hpp"

namespace hetdr {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sq(double x) { return x * x; }

double sd(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += sq(x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

std::vector<ToyRow> toy_experiment(const ToyDesign& d) {
  if (d.n < 2 || d.t < 1 || d.reps < 1 || d.draws < 2) throw Error(ErrorCode::InvalidArgument, "bad toy design");
  std::vector<ToyRow> rows;
  const double N = d.n, T = d.t;
  for (std::size_t v = 0; v < d.variances.size(); ++v) {
    const double var = d.variances[v];
    if (var < 0.0) throw Error(ErrorCode::InvalidArgument, "Var(beta) must be nonnegative");
    std::vector<double> over(static_cast<std::size_t>(d.reps)), under(over.size()), boot(over.size());
    const std::uint64_t vseed = draw_seed(d.seed, v);
    parallel_for(over.size(), [&](std::size_t r) {
      std::mt19937_64 rng(draw_seed(vseed, r));
      std::normal_distribution<double> normal;
      std::vector<double> bhat(static_cast<std::size_t>(d.n));
      double resid = 0.0;
      for (auto& b : bhat) {
        const double beta = d.theta + std::sqrt(var) * normal(rng);
        std::vector<double> y(static_cast<std::size_t>(d.t));
        for (auto& yt : y) yt = beta + normal(rng);
        double m = 0.0;
        for (double yt : y) m += yt;
        m /= T;
        for (double yt : y) resid += sq(yt - m);
        b = m;
      }
      double theta = 0.0;
      for (double b : bhat) theta += b;
      theta /= N;
      double between = 0.0;
      for (double b : bhat) between += sq(b - theta);
      under[r] = std::sqrt(resid / (N * N * T * T));
      over[r] = std::sqrt(resid / (N * N * T * T) + between / (N * N));
      std::vector<double> stars(static_cast<std::size_t>(d.draws));
      const std::uint64_t bseed = draw_seed(draw_seed(vseed, r), 0xb007);
      for (std::size_t b = 0; b < stars.size(); ++b) {
        const auto idx = resample_units(bhat.size(), draw_seed(bseed, b));
        double m = 0.0;
        for (auto i : idx) m += bhat[i];
        stars[b] = m / N;
      }
      boot[r] = sd(stars);
    });
    ToyRow row;
    row.variance = var;
    row.true_sd = std::sqrt(1.0 / (N * T) + var / N);
    for (std::size_t r = 0; r < over.size(); ++r) {
      row.plugin_over += over[r];
      row.plugin_under += under[r];
      row.bootstrap += boot[r];
    }
    row.plugin_over /= d.reps;
    row.plugin_under /= d.reps;
    row.bootstrap /= d.reps;
    rows.push_back(row);
  }
  return rows;
}

double theta_curve(double y) {
  const double u = y - 2.0;
  return 3.0 * (u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0)) * u * u;
}

double theta_inverse(double u) {
  const double s = u > 0 ? 1.0 : (u < 0 ? -1.0 : 0.0);
  return 2.0 + s * std::sqrt(std::abs(u) / 3.0);
}

SimulatedPanel generate_dynamic_dr(const DynamicDrDesign& d, std::uint64_t seed) {
  if (d.n < 1 || d.t < 2) throw Error(ErrorCode::InvalidArgument, "dynamic DR design needs N >= 1 and T >= 2");
  SimulatedPanel out;
  const auto n = static_cast<std::size_t>(d.n);
  out.w.resize(d.n);
  out.gamma.resize(d.n);
  out.y0.resize(d.n);
  out.data.units.resize(n);
  parallel_for(n, [&](std::size_t i) {
    std::mt19937_64 rng(draw_seed(seed, i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    const double w = 1.5 + unif(rng);
    const double g = unif(rng) - 0.5;
    const double y0 = 0.52 + unif(rng);
    auto& u = out.data.units[i];
    u.id = "u" + std::to_string(i);
    u.time.resize(static_cast<std::size_t>(d.t) + 1);
    u.y.resize(u.time.size());
    u.v.resize(static_cast<Eigen::Index>(u.time.size()), 0);
    u.time[0] = 0;
    u.y[0] = y0;
    for (std::size_t t = 1; t < u.y.size(); ++t) {
      u.time[t] = static_cast<long>(t);
      u.y[t] = theta_inverse(normal(rng) / (u.y[t - 1] * (w + g)));
    }
    out.w(static_cast<Eigen::Index>(i)) = w;
    out.gamma(static_cast<Eigen::Index>(i)) = g;
    out.y0(static_cast<Eigen::Index>(i)) = y0;
  });
  out.data.z = out.w;
  out.data.w = out.w;
  out.data.z_names = {"w"};
  out.data.w_names = {"w"};
  return out;
}

DesignOptions dynamic_dr_design_options() {
  DesignOptions o;
  o.lags = 1;
  o.include_constant = false;
  o.include_v = false;
  return o;
}

ThresholdGrid dynamic_dr_grid() {
  std::vector<double> pts;
  for (int k = 0; k <= 6; ++k) pts.push_back(1.7 + 0.1 * k);
  return ThresholdGrid(pts);
}

Eigen::VectorXd dynamic_dr_truth(const ThresholdGrid& grid) {
  Eigen::VectorXd t(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) t(static_cast<Eigen::Index>(j)) = -theta_curve(grid[j]);
  return t;
}

std::string to_string(InferenceMethod m) {
  switch (m) {
    case InferenceMethod::Proposed: return "proposed";
    case InferenceMethod::NoDebias: return "no_debias";
    case InferenceMethod::ConserBoot: return "conser_boot";
    case InferenceMethod::PluginOver: return "plugin_over";
    case InferenceMethod::PluginUnder: return "plugin_under";
  }
  return "proposed";
}

InferenceMethod parse_method(const std::string& name) {
  for (auto m : {InferenceMethod::Proposed, InferenceMethod::NoDebias, InferenceMethod::ConserBoot,
                 InferenceMethod::PluginOver, InferenceMethod::PluginUnder}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown inference method '" + name + "'");
}

CoverageResult coverage_experiment(const CoverageDesign& d) {
  if (d.reps < 1) throw Error(ErrorCode::InvalidArgument, "coverage experiment needs at least one replication");
  const auto grid = dynamic_dr_grid();
  const Eigen::VectorXd truth = dynamic_dr_truth(grid);
  const auto G = static_cast<Eigen::Index>(grid.size());
  const auto M = d.methods.size();
  const Link probit(LinkKind::Probit);
  const Eigen::VectorXd eta = Eigen::VectorXd::Ones(1);

  CoverageResult out;
  out.methods = d.methods;
  out.covered.assign(static_cast<std::size_t>(d.reps), std::vector<char>(M, 0));
  out.critical.assign(static_cast<std::size_t>(d.reps), std::vector<double>(M, kNaN));
  out.half_width.assign(M, Eigen::MatrixXd::Constant(d.reps, G, kNaN));

  const bool need_debiased = std::any_of(d.methods.begin(), d.methods.end(),
                                         [](auto m) { return m != InferenceMethod::NoDebias; });
  parallel_for(static_cast<std::size_t>(d.reps), [&](std::size_t r) {
    const std::uint64_t rseed = draw_seed(d.seed, r);
    const auto sim = generate_dynamic_dr({d.n, d.t}, rseed);
    const auto designs = build_regressors(sim.data, dynamic_dr_design_options());
    BootstrapOptions bopts;
    bopts.draws = d.draws;
    bopts.level = d.level;
    bopts.scale = ScaleMethod::Iqr;
    bopts.seed = draw_seed(rseed, 0xb007);
    DebiasOptions dopts;

    std::optional<CoefficientField> debiased;
    std::optional<ProjectionDraws> draws;
    if (need_debiased) {
      dopts.method = DebiasMethod::Analytical;
      debiased = estimate_field(designs, grid, probit, dopts);
      draws = bootstrap_projection(*debiased, sim.data.z, sim.data.w, eta, bopts);
    }
    std::optional<BootstrapBand> proposed;
    if (draws) proposed = studentized_band(draws->grid, draws->estimate, draws->deviations, bopts);

    for (std::size_t m = 0; m < M; ++m) {
      BootstrapBand band;
      switch (d.methods[m]) {
        case InferenceMethod::Proposed: band = *proposed; break;
        case InferenceMethod::ConserBoot:
          band = conservative_band(draws->grid, draws->estimate, draws->deviations, bopts);
          break;
        case InferenceMethod::NoDebias: {
          dopts.method = DebiasMethod::None;
          const auto raw = estimate_field(designs, grid, probit, dopts);
          const auto nd = bootstrap_projection(raw, sim.data.z, sim.data.w, eta, bopts);
          band = studentized_band(nd.grid, nd.estimate, nd.deviations, bopts);
          break;
        }
        case InferenceMethod::PluginOver:
        case InferenceMethod::PluginUnder: {
          // Plug-in standard errors with the proposed method's sup-t critical value.
          band = *proposed;
          band.studentized = false;
          for (Eigen::Index j = 0; j < G; ++j) {
            const auto proj = project(*debiased, sim.data.z, sim.data.w, static_cast<std::size_t>(j));
            const auto pv = plugin_variances(*debiased, proj, sim.data.w);
            const auto& s = d.methods[m] == InferenceMethod::PluginOver ? pv.sigma_over : pv.sigma_under;
            band.scale(j) = std::sqrt(eta.dot(s * eta));
          }
          band.lower = band.estimate - band.critical * band.scale;
          band.upper = band.estimate + band.critical * band.scale;
          break;
        }
      }
      out.covered[r][m] = band.covers(truth) ? 1 : 0;
      out.critical[r][m] = band.critical;
      out.half_width[m].row(static_cast<Eigen::Index>(r)) = (band.critical * band.scale).transpose();
    }
  });
  out.coverage.assign(M, 0.0);
  for (const auto& row : out.covered)
    for (std::size_t m = 0; m < M; ++m) out.coverage[m] += row[m];
  for (auto& c : out.coverage) c /= d.reps;
  return out;
}

std::vector<double> true_quantile_effect(const std::vector<double>& levels, double shift, std::size_t units,
                                         std::uint64_t seed) {
  if (units == 0) throw Error(ErrorCode::InvalidArgument, "oracle needs at least one unit");
  std::vector<double> actual(units), counter(units);
  constexpr std::size_t kBlock = 4096;
  const std::size_t blocks = (units + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](std::size_t b) {
    std::mt19937_64 rng(draw_seed(seed, b));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal;
    for (std::size_t i = b * kBlock; i < std::min(units, (b + 1) * kBlock); ++i) {
      const double w = 1.5 + unif(rng);
      const double g = unif(rng) - 0.5;
      const double y0 = 0.52 + unif(rng);
      const double e = normal(rng);
      actual[i] = theta_inverse(e / (y0 * (w + g)));
      counter[i] = theta_inverse(e / (y0 * (w + shift + g)));
    }
  });
  std::sort(actual.begin(), actual.end());
  std::sort(counter.begin(), counter.end());
  std::vector<double> qe;
  for (double tau : levels) qe.push_back(empirical_quantile(counter, tau) - empirical_quantile(actual, tau));
  return qe;
}

namespace {

struct GaussLegendre {
  std::vector<double> x, w;  // on [-1, 1]
  explicit GaussLegendre(int n) {
    for (int i = 1; i <= n; ++i) {
      double z = std::cos(M_PI * (i - 0.25) / (n + 0.5)), dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = z;
        for (int k = 2; k <= n; ++k) {
          const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
          p0 = p1;
          p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        const double dz = p1 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-15) break;
      }
      x.push_back(z);
      w.push_back(2.0 / ((1.0 - z * z) * dp * dp));
    }
  }
};

const GaussLegendre& gl_rule() {
  static const GaussLegendre rule(48);
  return rule;
}

}  // namespace

double period_one_cdf(double y, double shift) {
  const auto& gl = gl_rule();
  const double th = theta_curve(y);
  double total = 0.0;
  for (std::size_t a = 0; a < gl.x.size(); ++a) {
    const double y0 = 1.02 + 0.5 * gl.x[a];
    double inner = 0.0;
    // w + γ̄ has the triangular density c - 1 on [1,2] and 3 - c on [2,3].
    for (std::size_t b = 0; b < gl.x.size(); ++b) {
      const double lo = 1.5 + 0.5 * gl.x[b], hi = 2.5 + 0.5 * gl.x[b];
      inner += 0.5 * gl.w[b] * ((lo - 1.0) * 0.5 * std::erfc(-th * y0 * (lo + shift) / M_SQRT2) +
                                (3.0 - hi) * 0.5 * std::erfc(-th * y0 * (hi + shift) / M_SQRT2));
    }
    total += 0.5 * gl.w[a] * inner;
  }
  return total;
}

std::vector<double> true_quantile_effect_exact(const std::vector<double>& levels, double shift) {
  auto quantile = [](double tau, double s) {
    double lo = 0.0, hi = 4.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
      const double mid = 0.5 * (lo + hi);
      (period_one_cdf(mid, s) >= tau ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
  };
  std::vector<double> out;
  for (double tau : levels) out.push_back(quantile(tau, shift) - quantile(tau, 0.0));
  return out;
}

QteResult qte_experiment(const QteDesign& d) {
  if (d.reps < 1) throw Error(ErrorCode::InvalidArgument, "QTE experiment needs at least one replication");
  QteResult out;
  out.levels = d.levels;
  out.truth = true_quantile_effect_exact(d.levels, d.shift);
  out.truth_simulated = true_quantile_effect(d.levels, d.shift, d.oracle_units, d.oracle_seed);
  const auto grid = uniform_grid(d.grid_lo, d.grid_hi, d.grid_step);
  const Link probit(LinkKind::Probit);
  const auto L = d.levels.size();
  const auto M = d.methods.size();

  // [rep][method][level]: estimate, pointwise cover, joint cover
  std::vector<std::vector<std::vector<double>>> est(static_cast<std::size_t>(d.reps),
                                                    std::vector<std::vector<double>>(M, std::vector<double>(L, kNaN)));
  std::vector<std::vector<std::vector<char>>> cover(static_cast<std::size_t>(d.reps),
                                                    std::vector<std::vector<char>>(M, std::vector<char>(L, 0)));
  std::vector<std::vector<char>> joint(static_cast<std::size_t>(d.reps), std::vector<char>(M, 0));

  parallel_for(static_cast<std::size_t>(d.reps), [&](std::size_t r) {
    const std::uint64_t rseed = draw_seed(d.seed, r);
    const auto sim = generate_dynamic_dr({d.n, d.t}, rseed);
    const auto designs = build_regressors(sim.data, dynamic_dr_design_options());
    for (std::size_t m = 0; m < M; ++m) {
      DebiasOptions dopts;
      dopts.method = d.methods[m];
      const auto field = estimate_field(designs, grid, probit, dopts);
      CounterfactualSpec spec;
      spec.z = sim.data.z;
      spec.w = sim.data.w;
      spec.g = CharTransform::add_value(0, d.shift);
      spec.period = 1;
      spec.dist.bias_correction = d.methods[m] != DebiasMethod::None;
      BootstrapOptions bopts;
      bopts.draws = d.draws;
      bopts.level = d.level;
      bopts.seed = draw_seed(rseed, 0xb007 + m);
      try {
        const auto qe = band_qe(field, spec, d.levels, bopts);
        bool all = true;
        for (std::size_t k = 0; k < L; ++k) {
          est[r][m][k] = qe.curve.values[k];
          const auto kk = static_cast<Eigen::Index>(k);
          const double half = qe.band.pointwise_critical(kk) * qe.band.scale(kk);
          const bool ok = qe.band.included[k] && std::abs(qe.curve.values[k] - out.truth[k]) <= half;
          cover[r][m][k] = ok ? 1 : 0;
          const bool in_band = qe.band.included[k] && qe.band.covers_at(k, out.truth[k]);
          all = all && in_band;
        }
        joint[r][m] = all ? 1 : 0;
      } catch (const Error& e) {
        log::warn("QTE replication " + std::to_string(r) + " (" + to_string(d.methods[m]) + "): " + e.what());
      }
    }
  });

  for (std::size_t m = 0; m < M; ++m) {
    QteMethodResult res;
    res.method = d.methods[m];
    res.mse.assign(L, 0.0);
    res.coverage.assign(L, 0.0);
    res.valid_reps.assign(L, 0);
    res.estimates.resize(d.reps, static_cast<Eigen::Index>(L));
    for (std::size_t r = 0; r < static_cast<std::size_t>(d.reps); ++r) {
      for (std::size_t k = 0; k < L; ++k) {
        const double e = est[r][m][k];
        res.estimates(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = e;
        res.coverage[k] += cover[r][m][k];
        if (std::isnan(e)) continue;
        res.mse[k] += sq(e - out.truth[k]);
        ++res.valid_reps[k];
      }
      res.joint_coverage += joint[r][m];
    }
    for (std::size_t k = 0; k < L; ++k) {
      res.mse[k] = res.valid_reps[k] > 0 ? res.mse[k] / res.valid_reps[k] : kNaN;
      res.coverage[k] /= d.reps;
    }
    res.joint_coverage /= d.reps;
    out.methods.push_back(std::move(res));
  }
  return out;
}

PanelDataset generate_homogeneous(const HomogeneousDesign& d, std::uint64_t seed) {
  if (d.n < 1 || d.t < 2 || !(std::abs(d.rho) < 1.0) || !(d.sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "bad homogeneous design");
  }
  PanelDataset ds;
  ds.units.resize(static_cast<std::size_t>(d.n));
  const double mean = d.mu / (1.0 - d.rho);
  const double sd0 = d.sigma / std::sqrt(1.0 - d.rho * d.rho);
  parallel_for(ds.units.size(), [&](std::size_t i) {
    std::mt19937_64 rng(draw_seed(seed, i));
    std::normal_distribution<double> normal;
    auto& u = ds.units[i];
    u.id = "u" + std::to_string(i);
    u.time.resize(static_cast<std::size_t>(d.t) + 1);
    u.y.resize(u.time.size());
    u.v.resize(static_cast<Eigen::Index>(u.time.size()), 0);
    u.time[0] = 0;
    u.y[0] = mean + sd0 * normal(rng);
    for (std::size_t t = 1; t < u.y.size(); ++t) {
      u.time[t] = static_cast<long>(t);
      u.y[t] = d.mu + d.rho * u.y[t - 1] + d.sigma * normal(rng);
    }
  });
  ds.z = Eigen::MatrixXd::Ones(d.n, 1);
  ds.w = ds.z;
  ds.z_names = {"const"};
  ds.w_names = {"const"};
  return ds;
}

}  // namespace hetdr
