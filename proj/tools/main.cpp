#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"

using hetdr::cli::RunConfig;

namespace {

void add_data_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--input", c.input, "panel CSV (unit,time,y,v_*,z_*,w_*)")->required();
  sub->add_option("--unit-col", c.unit_col, "unit id column");
  sub->add_option("--time-col", c.time_col, "period column");
  sub->add_option("--outcome-col", c.outcome_col, "outcome column");
  sub->add_option("--z-constant", c.z_constant, "prepend a constant to the characteristics");
  sub->add_option("--link", c.link, "logit | probit");
  sub->add_option("--lags", c.lags, "number of outcome lags");
  sub->add_option("--constant", c.constant, "include a constant in the design");
  sub->add_option("--covariates", c.covariates, "include v_* covariates in the design");
  sub->add_option("--grid-levels", c.grid_levels, "pooled-outcome quantile levels defining the threshold grid")
      ->delimiter(',');
  sub->add_option("--grid-points", c.grid_points, "explicit thresholds (override --grid-levels)")->delimiter(',');
  sub->add_option("--debias", c.debias, "none | analytical | jackknife");
  sub->add_option("--nw-lags", c.nw_lags, "Newey-West bandwidth; negative selects floor(T^(1/3))");
  sub->add_option("--out", c.out, "output directory");
}

void add_boot_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--boot-b", c.boot_b, "bootstrap draws (0 disables bands)");
  sub->add_option("--boot-level", c.boot_level, "band confidence level");
  sub->add_option("--boot-scale", c.boot_scale, "iqr | sd");
  sub->add_option("--seed", c.seed, "top-level seed");
}

void add_counterfactual_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--transform", c.transform, "covariate map h: none | flat:K | prog");
  sub->add_option("--gtransform", c.gtransform,
                  "characteristic map g: none | min:col=NAME,floor=V | add:col=NAME,delta=V");
  sub->add_option("--period", c.period, "reference period t");
}

void add_markov_options(CLI::App* sub, RunConfig& c) {
  sub->add_option("--gtransform", c.gtransform, "characteristic map g applied to every chain");
  sub->add_option("--jackknife-pi", c.jackknife_pi, "half-panel jackknife correction of the stationary law");
}

int finish(const RunConfig& cfg) {
  const auto artifacts = hetdr::cli::run(cfg);
  hetdr::cli::write_artifacts(cfg, artifacts);
  for (const auto& [name, body] : artifacts) std::cout << cfg.out << "/" << name << "\n";
  return 0;
}

int replay(const std::string& manifest_path, const std::string& out, bool check) {
  std::ifstream in(manifest_path);
  if (!in) throw hetdr::Error(hetdr::ErrorCode::InvalidArgument, "cannot open manifest " + manifest_path);
  const auto manifest = nlohmann::json::parse(in);
  auto cfg = manifest.at("config").get<RunConfig>();
  if (!out.empty()) cfg.out = out;
  const auto artifacts = hetdr::cli::run(cfg);
  int mismatches = 0;
  if (check) {
    const auto& expected = manifest.at("outputs");
    for (const auto& [name, body] : artifacts) {
      const bool same = expected.contains(name) && expected.at(name).get<std::string>() == hetdr::cli::fnv1a_hex(body);
      std::cout << (same ? "identical " : "DIFFERS   ") << name << "\n";
      mismatches += same ? 0 : 1;
    }
    if (expected.size() != artifacts.size()) ++mismatches;
  }
  hetdr::cli::write_artifacts(cfg, artifacts);
  return mismatches == 0 ? 0 : 3;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Expands `--config FILE` (key = value lines, # comments) into flags placed
// right after the subcommand; keys also given on the command line are skipped
// so explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv, const std::set<std::string>& subcommands,
                                       const std::set<std::string>& flags) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[k + 1];
      args.erase(args.begin() + static_cast<long>(k), args.begin() + static_cast<long>(k) + 2);
      break;
    }
    if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
      args.erase(args.begin() + static_cast<long>(k));
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw hetdr::Error(hetdr::ErrorCode::InvalidArgument, "cannot open config file " + path);
  std::set<std::string> given;
  for (const auto& a : args) {
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  }
  std::vector<std::string> injected;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw hetdr::Error(hetdr::ErrorCode::ParseError, path + ":" + std::to_string(n) + ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw hetdr::Error(hetdr::ErrorCode::ParseError, path + ":" + std::to_string(n) + ": empty key");
    if (given.count(key)) continue;
    if (flags.count(key)) {
      if (value == "true" || value == "1") injected.push_back("--" + key);
      continue;
    }
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  const auto sub = std::find_if(args.begin(), args.end(), [&](const std::string& a) { return subcommands.count(a) > 0; });
  if (sub == args.end()) throw hetdr::Error(hetdr::ErrorCode::InvalidArgument, "--config needs a subcommand");
  args.insert(sub + 1, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heterogeneous dynamic distribution regression for panels"};
  app.require_subcommand(1);
  app.set_version_flag("--version", HETDR_VERSION);
  unsigned threads = 0;
  bool verbose = false;
  app.add_option("--threads", threads, "worker threads (0 = all cores); results do not depend on it");
  app.add_flag("-v,--verbose", verbose, "log progress");

  RunConfig cfg;
  auto* fit = app.add_subcommand("fit", "per-unit, per-threshold coefficients");
  add_data_options(fit, cfg);

  auto* project = app.add_subcommand("project", "theta(y) and its uniform band");
  add_data_options(project, cfg);
  add_boot_options(project, cfg);
  project->add_option("--eta-coef", cfg.eta_coef, "band coefficient row (default: first lag)");
  project->add_option("--eta-char", cfg.eta_char, "band characteristic column (default: last)");

  auto* dist = app.add_subcommand("dist", "actual and counterfactual distributions");
  add_data_options(dist, cfg);
  add_boot_options(dist, cfg);
  add_counterfactual_options(dist, cfg);

  auto* qe = app.add_subcommand("qe", "quantile effects with a uniform band");
  add_data_options(qe, cfg);
  add_boot_options(qe, cfg);
  add_counterfactual_options(qe, cfg);
  qe->add_option("--levels", cfg.levels, "quantile levels")->delimiter(',');

  auto* markov = app.add_subcommand("markov", "per-unit stationary distributions");
  add_data_options(markov, cfg);
  add_markov_options(markov, cfg);

  auto* mob = app.add_subcommand("mobility", "mobility and recurrence-time tables");
  add_data_options(mob, cfg);
  add_markov_options(mob, cfg);
  mob->add_option("--p-levels", cfg.p_levels, "target levels p (y_p = pooled p-quantile)")->delimiter(',');
  mob->add_option("--q-levels", cfg.q_levels, "origin levels q")->delimiter(',');
  mob->add_option("--horizons", cfg.horizons, "horizons h")->delimiter(',');
  mob->add_option("--summary-levels", cfg.summary_levels, "cross-unit quantile levels")->delimiter(',');

  auto* sim = app.add_subcommand("simulate", "Monte Carlo experiments");
  sim->add_option("experiment", cfg.sim, "toy | coverage | qte | panel")->required();
  sim->add_option("--n", cfg.sim_n, "panel: units");
  sim->add_option("--t", cfg.sim_t, "panel: periods after the initial one");
  sim->add_option("--reps", cfg.reps, "replications (0 = default)");
  sim->add_option("--draws", cfg.draws, "bootstrap draws per replication (0 = default)");
  sim->add_option("--seed", cfg.seed, "top-level seed");
  sim->add_option("--boot-level", cfg.boot_level, "band confidence level");
  sim->add_flag("--paper-scale", cfg.paper_scale, "replication counts of the original study");
  sim->add_option("--t-list", cfg.t_list, "coverage: panel lengths")->delimiter(',');
  sim->add_option("--n-list", cfg.n_list, "coverage: cross-section sizes")->delimiter(',');
  sim->add_option("--out", cfg.out, "output directory");

  std::string manifest, replay_out;
  bool check = false;
  auto* rep = app.add_subcommand("replay", "re-run from a manifest");
  rep->add_option("manifest", manifest, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", replay_out, "output directory (default: the manifest's)");
  rep->add_flag("--check", check, "compare outputs with the manifest hashes; exit 3 on any difference");

  app.footer("Every subcommand also accepts --config FILE with `key = value` lines; flags override the file.");

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv, {"fit", "project", "dist", "qe", "markov", "mobility", "simulate"},
                         {"paper-scale", "verbose"});
  } catch (const hetdr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  hetdr::set_thread_count(threads);
  if (verbose) hetdr::log::set_level(hetdr::log::Level::Info);

  try {
    if (*rep) return replay(manifest, replay_out, check);
    cfg.command = app.get_subcommands().front()->get_name();
    return finish(cfg);
  } catch (const hetdr::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
