#include "commands.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hetdr/bootstrap.hpp"
#include "hetdr/counterfactual.hpp"
#include "hetdr/debias.hpp"
#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/markov.hpp"
#include "hetdr/panel.hpp"
#include "hetdr/projection.hpp"
#include "hetdr/quantile.hpp"
#include "hetdr/simulation.hpp"

#ifndef HETDR_VERSION
#define HETDR_VERSION "dev"
#endif

namespace hetdr::cli {

using nlohmann::json;

#define HETDR_CONFIG_FIELDS(X)                                                                                     \
  X(command) X(input) X(unit_col) X(time_col) X(outcome_col) X(z_constant) X(link) X(lags) X(constant)             \
  X(covariates) X(grid_levels) X(grid_points) X(debias) X(nw_lags) X(eta_coef) X(eta_char) X(transform)            \
  X(gtransform) X(period) X(levels) X(jackknife_pi) X(p_levels) X(q_levels) X(horizons) X(summary_levels)          \
  X(boot_b) X(boot_level) X(boot_scale) X(seed) X(sim) X(reps) X(draws) X(paper_scale) X(t_list) X(n_list) X(sim_n) X(sim_t) X(out)

void to_json(json& j, const RunConfig& c) {
#define X(f) j[#f] = c.f;
  HETDR_CONFIG_FIELDS(X)
#undef X
}

void from_json(const json& j, RunConfig& c) {
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
  HETDR_CONFIG_FIELDS(X)
#undef X
}

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// Minimal CSV builder; fields never contain separators except unit ids, which are quoted when needed.
class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) { row(header); }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) s_ << ',';
      const auto& f = fields[k];
      if (f.find_first_of(",\"\n") != std::string::npos) {
        s_ << '"';
        for (char c : f) s_ << (c == '"' ? "\"\"" : std::string(1, c));
        s_ << '"';
      } else {
        s_ << f;
      }
    }
    s_ << '\n';
  }
  std::string str() const { return s_.str(); }

 private:
  std::ostringstream s_;
};

bool check_levels(const std::vector<double>& v) {
  for (double p : v) {
    if (!(p > 0.0 && p < 1.0)) return false;
  }
  return true;
}

// ---- data pipeline --------------------------------------------------------

struct Pipeline {
  PanelDataset data;
  std::vector<UnitDesign> designs;
  ThresholdGrid grid;
  Link link;
  DebiasOptions debias;
};

Pipeline load(const RunConfig& cfg, bool markov) {
  Pipeline p;
  PanelSchema schema;
  schema.unit_column = cfg.unit_col;
  schema.time_column = cfg.time_col;
  schema.outcome_column = cfg.outcome_col;
  schema.z_constant = cfg.z_constant;
  p.data = load_panel(cfg.input, schema);
  DesignOptions dopts;
  dopts.lags = markov ? 1 : cfg.lags;
  dopts.include_constant = cfg.constant;
  dopts.include_v = markov ? false : cfg.covariates;
  p.designs = build_regressors(p.data, dopts);
  p.grid = cfg.grid_points.empty() ? pooled_threshold_grid(p.designs, cfg.grid_levels) : ThresholdGrid(cfg.grid_points);
  p.link = Link::parse(cfg.link);
  p.debias.method = parse_debias(cfg.debias);
  p.debias.nw_lags = cfg.nw_lags;
  return p;
}

std::vector<std::string> coef_names(const DesignLayout& layout, const std::vector<std::string>& v_names) {
  std::vector<std::string> out;
  if (layout.has_constant) out.emplace_back("const");
  for (int l = 1; l <= layout.lags; ++l) out.push_back("lag" + std::to_string(l));
  for (int k = 0; k < layout.n_v; ++k) out.push_back(k < static_cast<int>(v_names.size()) ? v_names[k] : "v" + std::to_string(k));
  return out;
}

BootstrapOptions boot_options(const RunConfig& cfg) {
  BootstrapOptions b;
  b.draws = cfg.boot_b;
  b.level = cfg.boot_level;
  b.scale = parse_scale(cfg.boot_scale);
  b.seed = cfg.seed;
  return b;
}

CounterfactualSpec counterfactual_spec(const RunConfig& cfg, const Pipeline& p) {
  CounterfactualSpec spec;
  spec.z = p.data.z;
  spec.w = p.data.w;
  spec.g = CharTransform::parse(cfg.gtransform, p.data.z_names);
  spec.h = CovariateTransform::parse(cfg.transform);
  spec.period = cfg.period;
  spec.dist.bias_correction = p.debias.method != DebiasMethod::None;
  return spec;
}

// F̂ and Ĝ without bootstrap.
std::pair<DistributionEstimate, DistributionEstimate> point_distributions(const CoefficientField& field,
                                                                          const CounterfactualSpec& spec) {
  const auto ref = reference_rows(field, spec.period);
  auto f = estimate_distribution(field, ref.x, spec.dist);
  const auto proj = project_all(field, spec.z, spec.w);
  const auto gfield = counterfactual_coefficients(field, proj, spec.z, spec.g);
  auto g = estimate_distribution(gfield, spec.h.apply(ref.x, field.designs.front().layout), spec.dist);
  return {std::move(f), std::move(g)};
}

// ---- subcommands ----------------------------------------------------------

Artifacts cmd_fit(const RunConfig& cfg) {
  const auto p = load(cfg, false);
  const auto field = estimate_field(p.designs, p.grid, p.link, p.debias);
  Csv csv({"unit", "y", "coef", "value", "status"});
  const auto names = coef_names(p.designs.front().layout, p.data.v_names);
  for (std::size_t i = 0; i < field.units(); ++i) {
    for (std::size_t j = 0; j < p.grid.size(); ++j) {
      const auto& c = field.cell(i, j);
      if (!c.has_beta()) {
        csv.row({p.data.units[i].id, num(p.grid[j]), "", "", to_string(c.status)});
        continue;
      }
      for (Eigen::Index k = 0; k < c.beta.size(); ++k) {
        csv.row({p.data.units[i].id, num(p.grid[j]), names[static_cast<std::size_t>(k)], num(c.beta(k)),
                 to_string(c.status)});
      }
    }
  }
  return {{"coefficients.csv", csv.str()}};
}

Artifacts cmd_project(const RunConfig& cfg) {
  const auto p = load(cfg, false);
  const auto field = estimate_field(p.designs, p.grid, p.link, p.debias);
  const auto proj = project_all(field, p.data.z, p.data.w);
  const auto names = coef_names(p.designs.front().layout, p.data.v_names);
  std::vector<std::string> header{"y", "units"};
  for (std::size_t c = 0; c < p.data.z_names.size(); ++c) {
    for (const auto& r : names) header.push_back("theta_" + r + "_" + p.data.z_names[c]);
  }
  Csv csv(header);
  for (const auto& pr : proj) {
    std::vector<std::string> row{num(pr.y), std::to_string(pr.units.size())};
    for (Eigen::Index c = 0; c < pr.theta.cols(); ++c) {
      for (Eigen::Index r = 0; r < pr.theta.rows(); ++r) row.push_back(num(pr.theta(r, c)));
    }
    csv.row(row);
  }
  Artifacts out{{"theta.csv", csv.str()}};
  if (cfg.boot_b > 0) {
    const int dx = field.dim();
    const auto dz = static_cast<int>(p.data.dim_z());
    const int r = cfg.eta_coef >= 0 ? cfg.eta_coef : std::max(0, p.designs.front().layout.first_lag());
    const int c = cfg.eta_char >= 0 ? cfg.eta_char : dz - 1;
    if (r >= dx || c >= dz) invalid("eta selects a coefficient outside the " + std::to_string(dx) + " x " + std::to_string(dz) + " theta");
    Eigen::VectorXd eta = Eigen::VectorXd::Zero(dx * dz);
    eta(c * dx + r) = 1.0;
    const auto band = band_projection(field, p.data.z, p.data.w, eta, boot_options(cfg));
    Csv b({"y", "estimate", "scale", "lower", "upper", "critical"});
    for (std::size_t j = 0; j < band.points.size(); ++j) {
      const auto k = static_cast<Eigen::Index>(j);
      b.row({num(band.points[j]), num(band.estimate(k)), num(band.scale(k)), num(band.lower(k)), num(band.upper(k)),
             num(band.critical)});
    }
    out["theta_band.csv"] = b.str();
  }
  return out;
}

Artifacts cmd_dist(const RunConfig& cfg) {
  const auto p = load(cfg, false);
  const auto field = estimate_field(p.designs, p.grid, p.link, p.debias);
  const auto spec = counterfactual_spec(cfg, p);
  const auto [f, g] = point_distributions(field, spec);
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(g.values.size(), std::nan("")), hi = lo;
  if (cfg.boot_b > 0) {
    const auto band = band_distribution(field, spec, boot_options(cfg));
    lo = band.lower;
    hi = band.upper;
  }
  Csv csv({"y", "F", "G", "G_lower", "G_upper", "n_below", "n_identified", "n_above"});
  for (std::size_t j = 0; j < p.grid.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    csv.row({num(p.grid[j]), num(f.values(k)), num(g.values(k)), num(lo(k)), num(hi(k)), std::to_string(f.n_below[j]),
             std::to_string(f.n_identified[j]), std::to_string(f.n_above[j])});
  }
  return {{"distribution.csv", csv.str()}};
}

Artifacts cmd_qe(const RunConfig& cfg) {
  const auto p = load(cfg, false);
  const auto field = estimate_field(p.designs, p.grid, p.link, p.debias);
  const auto spec = counterfactual_spec(cfg, p);
  Csv csv({"tau", "qe", "lower", "upper", "q_actual", "q_counterfactual", "included"});
  if (cfg.boot_b > 0) {
    const auto qe = band_qe(field, spec, cfg.levels, boot_options(cfg));
    for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      const bool in = qe.band.included[k];
      csv.row({num(cfg.levels[k]), num(qe.curve.values[k]), in ? num(qe.band.lower(kk)) : "nan",
               in ? num(qe.band.upper(kk)) : "nan", num(qe.curve.q_actual[k].value),
               num(qe.curve.q_counterfactual[k].value), in ? "1" : "0"});
    }
  } else {
    const auto [f, g] = point_distributions(field, spec);
    const auto curve = quantile_effect(p.grid, std::span<const double>(f.values.data(), p.grid.size()),
                                       std::span<const double>(g.values.data(), p.grid.size()), cfg.levels);
    for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
      csv.row({num(cfg.levels[k]), num(curve.values[k]), "nan", "nan", num(curve.q_actual[k].value),
               num(curve.q_counterfactual[k].value), curve.valid[k] ? "1" : "0"});
    }
  }
  return {{"quantile_effect.csv", csv.str()}};
}

ChainSet chains_for(const RunConfig& cfg, const Pipeline& p) {
  ChainOptions copts;
  copts.debias = p.debias;
  copts.jackknife_pi = cfg.jackknife_pi;
  const auto g = CharTransform::parse(cfg.gtransform, p.data.z_names);
  if (g.is_identity()) return build_chains(p.designs, p.link, copts);
  // θ̂(y)[g(z_i) - z_i] with θ̂ held constant between grid points (and at the first point below the grid).
  const auto field = estimate_field(p.designs, p.grid, p.link, p.debias);
  const auto proj = project_all(field, p.data.z, p.data.w);
  const Eigen::MatrixXd dz = g.apply(p.data.z) - p.data.z;
  const auto grid = p.grid;
  return build_chains(p.designs, p.link, copts, [proj, dz, grid](std::size_t i, double y) -> Eigen::VectorXd {
    const long j = std::max(0L, grid.locate(y));
    return proj[static_cast<std::size_t>(j)].theta * dz.row(static_cast<Eigen::Index>(i)).transpose();
  });
}

Artifacts cmd_markov(const RunConfig& cfg) {
  const auto p = load(cfg, true);
  const auto chains = chains_for(cfg, p);
  Csv csv({"unit", "state", "pi", "status"});
  for (std::size_t i = 0; i < chains.chains.size(); ++i) {
    const auto& c = chains.chains[i];
    if (!c) {
      csv.row({p.data.units[i].id, "nan", "nan", chains.reasons[i]});
      continue;
    }
    for (Eigen::Index k = 0; k < c->size(); ++k) {
      csv.row({p.data.units[i].id, num(c->states[static_cast<std::size_t>(k)]), num(c->pi(k)), "ok"});
    }
  }
  const auto finf = stationary_distribution(chains, p.grid.points);
  Csv cdf({"y", "F_stationary"});
  for (std::size_t j = 0; j < p.grid.size(); ++j) cdf.row({num(p.grid[j]), num(finf(static_cast<Eigen::Index>(j)))});
  return {{"stationary.csv", csv.str()}, {"stationary_cdf.csv", cdf.str()}};
}

Artifacts cmd_mobility(const RunConfig& cfg) {
  const auto p = load(cfg, true);
  const auto chains = chains_for(cfg, p);
  const auto yp = pooled_threshold_grid(p.designs, cfg.p_levels).points;
  const auto yq = pooled_threshold_grid(p.designs, cfg.q_levels).points;
  const auto nan = std::nan("");
  Csv csv({"p", "q", "h", "tau", "value", "units"});
  auto emit = [&](const std::string& p_, const std::string& q_, const std::string& h_, std::vector<double> values) {
    try {
      const auto s = aggregate_mobility(values, cfg.summary_levels);
      csv.row({p_, q_, h_, "mean", num(s.mean), std::to_string(s.n)});
      for (std::size_t k = 0; k < s.levels.size(); ++k) {
        csv.row({p_, q_, h_, num(s.levels[k]), num(s.quantiles[k]), std::to_string(s.n)});
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptySet) throw;
      csv.row({p_, q_, h_, "mean", "nan", "0"});
    }
  };
  for (std::size_t a = 0; a < yp.size(); ++a) {
    for (std::size_t b = 0; b < yq.size(); ++b) {
      for (int h : cfg.horizons) {
        std::vector<double> v;
        for (const auto& c : chains.chains) {
          if (!c) continue;
          try {
            v.push_back(mobility(*c, yp[a], yq[b], h));
          } catch (const Error&) {
            v.push_back(nan);
          }
        }
        emit(num(cfg.p_levels[a]), num(cfg.q_levels[b]), std::to_string(h), std::move(v));
      }
    }
  }
  Csv rec({"unit", "p", "y_p", "expected_recurrence"});
  for (std::size_t a = 0; a < yp.size(); ++a) {
    for (std::size_t i = 0; i < chains.chains.size(); ++i) {
      const auto& c = chains.chains[i];
      double h = nan;
      if (c) {
        try {
          h = recurrence(*c, yp[a]).expected;
        } catch (const Error&) {
        }
      }
      rec.row({p.data.units[i].id, num(cfg.p_levels[a]), num(yp[a]), num(h)});
    }
  }
  return {{"mobility.csv", csv.str()}, {"recurrence.csv", rec.str()}};
}

// ---- simulate -------------------------------------------------------------

Artifacts sim_toy(const RunConfig& cfg) {
  ToyDesign d;
  d.reps = cfg.reps > 0 ? cfg.reps : (cfg.paper_scale ? 5000 : 1000);
  d.draws = cfg.draws > 0 ? cfg.draws : 500;
  d.seed = cfg.seed;
  const auto rows = toy_experiment(d);
  Csv table({"var_beta", "true_sd", "bootstrap", "plugin_over", "plugin_under"});
  Csv longf({"var_beta", "series", "value"});
  for (const auto& r : rows) {
    table.row({num(r.variance), num(r.true_sd), num(r.bootstrap), num(r.plugin_over), num(r.plugin_under)});
    for (auto [name, v] : {std::pair<const char*, double>{"true_sd", r.true_sd}, {"bootstrap", r.bootstrap},
                           {"plugin_over", r.plugin_over}, {"plugin_under", r.plugin_under}}) {
      longf.row({num(r.variance), name, num(v)});
    }
  }
  return {{"toy.csv", table.str()}, {"toy_long.csv", longf.str()}};
}

Artifacts sim_coverage(const RunConfig& cfg) {
  std::vector<int> ts = cfg.t_list, ns = cfg.n_list;
  if (ts.empty()) ts = cfg.paper_scale ? std::vector<int>{50, 100, 200} : std::vector<int>{50, 100};
  if (ns.empty()) ns = cfg.paper_scale ? std::vector<int>{300, 400} : std::vector<int>{300};
  Csv table({"T", "N", "Proposed", "No-debias", "Conser-boot", "Plugin-over", "Plugin-under"});
  Csv longf({"T", "N", "method", "rep", "covered", "critical"});
  std::uint64_t cell = 0;
  for (int t : ts) {
    for (int n : ns) {
      CoverageDesign d;
      d.t = t;
      d.n = n;
      d.reps = cfg.reps > 0 ? cfg.reps : (cfg.paper_scale ? 1000 : 200);
      d.draws = cfg.draws > 0 ? cfg.draws : (cfg.paper_scale ? 500 : 200);
      d.level = cfg.boot_level;
      d.seed = draw_seed(cfg.seed, cell++);
      const auto r = coverage_experiment(d);
      std::vector<std::string> row{std::to_string(t), std::to_string(n)};
      for (double c : r.coverage) row.push_back(num(c));
      table.row(row);
      for (std::size_t rep = 0; rep < r.covered.size(); ++rep) {
        for (std::size_t m = 0; m < r.methods.size(); ++m) {
          longf.row({std::to_string(t), std::to_string(n), to_string(r.methods[m]), std::to_string(rep),
                     std::to_string(int(r.covered[rep][m])), num(r.critical[rep][m])});
        }
      }
    }
  }
  return {{"coverage.csv", table.str()}, {"coverage_long.csv", longf.str()}};
}

Artifacts sim_qte(const RunConfig& cfg) {
  QteDesign d;
  d.reps = cfg.reps > 0 ? cfg.reps : (cfg.paper_scale ? 1000 : 200);
  d.draws = cfg.draws > 0 ? cfg.draws : (cfg.paper_scale ? 500 : 200);
  d.level = cfg.boot_level;
  d.seed = cfg.seed;
  const auto r = qte_experiment(d);
  std::vector<std::string> header{"method"};
  for (double l : r.levels) header.push_back("mse_" + num(l));
  for (double l : r.levels) header.push_back("cov_" + num(l));
  header.emplace_back("joint");
  Csv table(header);
  Csv longf({"method", "rep", "tau", "estimate", "truth"});
  for (const auto& m : r.methods) {
    std::vector<std::string> row{to_string(m.method)};
    for (double x : m.mse) row.push_back(num(x * 1e6));
    for (double x : m.coverage) row.push_back(num(x));
    row.push_back(num(m.joint_coverage));
    table.row(row);
    for (Eigen::Index rep = 0; rep < m.estimates.rows(); ++rep) {
      for (std::size_t k = 0; k < r.levels.size(); ++k) {
        longf.row({to_string(m.method), std::to_string(rep), num(r.levels[k]),
                   num(m.estimates(rep, static_cast<Eigen::Index>(k))), num(r.truth[k])});
      }
    }
  }
  Csv truth({"tau", "qe_exact", "qe_simulated"});
  for (std::size_t k = 0; k < r.levels.size(); ++k) truth.row({num(r.levels[k]), num(r.truth[k]), num(r.truth_simulated[k])});
  return {{"qte.csv", table.str()}, {"qte_long.csv", longf.str()}, {"qte_truth.csv", truth.str()}};
}

// One dynamic-DR panel in the CLI's input format; w_i enters as characteristic z_w.
Artifacts sim_panel(const RunConfig& cfg) {
  const auto s = generate_dynamic_dr({cfg.sim_n, cfg.sim_t}, cfg.seed);
  Csv csv({"unit", "time", "y", "z_w"});
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    const auto& u = s.data.units[i];
    for (std::size_t t = 0; t < u.periods(); ++t) {
      csv.row({u.id, std::to_string(u.time[t]), num(u.y[t]), num(s.w(static_cast<Eigen::Index>(i)))});
    }
  }
  return {{"panel.csv", csv.str()}};
}

}  // namespace

void validate(const RunConfig& c) {
  static const std::vector<std::string> data_cmds{"fit", "project", "dist", "qe", "markov", "mobility"};
  const bool data = std::find(data_cmds.begin(), data_cmds.end(), c.command) != data_cmds.end();
  if (!data && c.command != "simulate") invalid("unknown command '" + c.command + "'");
  if (data && c.input.empty()) invalid("--input is required for '" + c.command + "'");
  if (c.lags < 0) invalid("--lags must be nonnegative");
  if (c.grid_points.empty() && (c.grid_levels.empty() || !check_levels(c.grid_levels))) {
    invalid("--grid-levels must lie in (0,1)");
  }
  if (!check_levels(c.levels)) invalid("--levels must lie in (0,1)");
  if (!check_levels(c.p_levels) || !check_levels(c.q_levels) || !check_levels(c.summary_levels)) {
    invalid("mobility levels must lie in (0,1)");
  }
  for (int h : c.horizons) {
    if (h < 1) invalid("--horizons must be positive");
  }
  if (c.boot_b < 0) invalid("--boot-b must be nonnegative");
  if (!(c.boot_level > 0.0 && c.boot_level < 1.0)) invalid("--boot-level must lie in (0,1)");
  if (c.reps < 0 || c.draws < 0) invalid("--reps and --draws must be nonnegative");
  for (int v : c.t_list) {
    if (v < 4) invalid("--t-list entries must be at least 4");
  }
  for (int v : c.n_list) {
    if (v < 10) invalid("--n-list entries must be at least 10");
  }
  if (c.sim != "toy" && c.sim != "coverage" && c.sim != "qte" && c.sim != "panel") {
    invalid("simulation must be toy, coverage, qte or panel");
  }
  if (c.sim_n < 2 || c.sim_t < 4) invalid("--n must be at least 2 and --t at least 4");
  (void)Link::parse(c.link);
  (void)parse_debias(c.debias);
  (void)parse_scale(c.boot_scale);
  (void)CovariateTransform::parse(c.transform);
}

Artifacts run(const RunConfig& cfg) {
  validate(cfg);
  if (cfg.command == "fit") return cmd_fit(cfg);
  if (cfg.command == "project") return cmd_project(cfg);
  if (cfg.command == "dist") return cmd_dist(cfg);
  if (cfg.command == "qe") return cmd_qe(cfg);
  if (cfg.command == "markov") return cmd_markov(cfg);
  if (cfg.command == "mobility") return cmd_mobility(cfg);
  if (cfg.paper_scale) log::warn("paper-scale simulation: expect a runtime of many hours");
  if (cfg.sim == "toy") return sim_toy(cfg);
  if (cfg.sim == "coverage") return sim_coverage(cfg);
  if (cfg.sim == "panel") return sim_panel(cfg);
  return sim_qte(cfg);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json make_manifest(const RunConfig& cfg, const Artifacts& artifacts) {
  json m;
  m["tool"] = "hetdr";
  m["version"] = HETDR_VERSION;
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["command"] = cfg.command;
  m["config"] = cfg;
  m["config_hash"] = fnv1a_hex(json(cfg).dump());
  m["seed"] = cfg.seed;
  if (!cfg.input.empty() && cfg.command != "simulate") {
    std::ifstream in(cfg.input, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    m["input_hash"] = fnv1a_hex(s.str());
  }
  json outs = json::object();
  for (const auto& [name, body] : artifacts) outs[name] = fnv1a_hex(body);
  m["outputs"] = outs;
  return m;
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) invalid("cannot write " + tmp.string());
    f << body;
    if (!f.flush()) invalid("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_artifacts(const RunConfig& cfg, const Artifacts& artifacts) {
  const std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  for (const auto& [name, body] : artifacts) write_atomic(dir / name, body);
  write_atomic(dir / "manifest.json", make_manifest(cfg, artifacts).dump(2) + "\n");
}

}  // namespace hetdr::cli
