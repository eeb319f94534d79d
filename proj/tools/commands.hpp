#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace hetdr::cli {

// Everything a run depends on. Serialized verbatim into the manifest, so a
// manifest alone reproduces the run.
struct RunConfig {
  std::string command;

  // data
  std::string input;
  std::string unit_col = "unit";
  std::string time_col = "time";
  std::string outcome_col = "y";
  bool z_constant = true;

  // first stage
  std::string link = "logit";
  int lags = 1;
  bool constant = true;
  bool covariates = true;
  std::vector<double> grid_levels{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<double> grid_points;  // overrides grid_levels when non-empty
  std::string debias = "analytical";
  int nw_lags = -1;

  // projection band: η selects θ(coef, char); -1 picks the first lag / last characteristic
  int eta_coef = -1;
  int eta_char = -1;

  // counterfactuals
  std::string transform = "none";
  std::string gtransform = "none";
  long period = 1;
  std::vector<double> levels{0.1, 0.25, 0.5, 0.75, 0.9};

  // Markov / mobility
  bool jackknife_pi = false;
  std::vector<double> p_levels{0.1, 0.25, 0.5};
  std::vector<double> q_levels{0.1, 0.25, 0.5};
  std::vector<int> horizons{1, 2, 5, 10};
  std::vector<double> summary_levels{0.1, 0.25, 0.5, 0.75, 0.9};

  // bootstrap
  int boot_b = 500;
  double boot_level = 0.95;
  std::string boot_scale = "iqr";
  std::uint64_t seed = 20240607;

  // simulate
  std::string sim = "coverage";
  int reps = 0;   // 0: design default
  int draws = 0;  // 0: design default
  bool paper_scale = false;
  std::vector<int> t_list;
  std::vector<int> n_list;
  int sim_n = 200;  // panel: units
  int sim_t = 50;   // panel: periods after the initial one

  std::string out = "out";
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Rejects out-of-range settings before any work is done.
void validate(const RunConfig& cfg);

// Output files keyed by name; written only after the whole run succeeded.
using Artifacts = std::map<std::string, std::string>;

Artifacts run(const RunConfig& cfg);

// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

nlohmann::json make_manifest(const RunConfig& cfg, const Artifacts& artifacts);

// Writes every artifact plus manifest.json into cfg.out via temp file + rename.
void write_artifacts(const RunConfig& cfg, const Artifacts& artifacts);

}  // namespace hetdr::cli
