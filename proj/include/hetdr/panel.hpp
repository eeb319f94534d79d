#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hetdr {

// One unit's raw time series. Rows of `v` are periods.
struct UnitSeries {
  std::string id;
  std::vector<long> time;
  std::vector<double> y;
  Eigen::MatrixXd v;

  std::size_t periods() const { return y.size(); }
};

// Unbalanced panel plus time-invariant characteristics. Row i of `z` and `w`
// belongs to units[i]. Immutable after construction by convention.
struct PanelDataset {
  std::vector<UnitSeries> units;
  Eigen::MatrixXd z;
  Eigen::MatrixXd w;
  std::vector<std::string> v_names;
  std::vector<std::string> z_names;
  std::vector<std::string> w_names;

  std::size_t size() const { return units.size(); }
  Eigen::Index dim_z() const { return z.cols(); }
  Eigen::Index dim_w() const { return w.cols(); }

  // Throws on any violated dataset invariant.
  void validate() const;
};

struct PanelSchema {
  std::string unit_column = "unit";
  std::string time_column = "time";
  std::string outcome_column = "y";
  std::string v_prefix = "v_";
  std::string z_prefix = "z_";
  std::string w_prefix = "w_";
  // Prepend a constant column to z (and to w when instruments are taken from z).
  bool z_constant = true;
};

// CSV with header; see PanelSchema for the column conventions. When no `w_*`
// columns exist the instruments are the characteristics themselves.
PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema = {});
PanelDataset parse_panel(const std::string& csv_text, const PanelSchema& schema = {});

struct DesignOptions {
  int lags = 1;
  bool include_constant = true;
  bool include_v = true;
};

// Column layout of a design row: [1] [y_{t-1} .. y_{t-L}] [v_t'].
struct DesignLayout {
  bool has_constant = true;
  int lags = 1;
  int n_v = 0;

  int dim() const { return (has_constant ? 1 : 0) + lags + n_v; }
  // Index of y_{t-1}; -1 when lags == 0.
  int first_lag() const { return lags > 0 ? (has_constant ? 1 : 0) : -1; }
};

// Usable window of one unit after the first `lags` periods are consumed.
struct UnitDesign {
  Eigen::MatrixXd x;       // T_i x d
  Eigen::VectorXd y;       // T_i
  std::vector<long> time;  // period label of each row
  DesignLayout layout;

  Eigen::Index periods() const { return y.size(); }
  double min_outcome() const { return y.minCoeff(); }
  double max_outcome() const { return y.maxCoeff(); }
  // Row whose period label equals t; -1 when absent.
  Eigen::Index row_of(long t) const;
};

UnitDesign build_regressors(const UnitSeries& unit, const DesignOptions& opts);
std::vector<UnitDesign> build_regressors(const PanelDataset& ds, const DesignOptions& opts);

// Contiguous sub-window [begin, end) of a design, used by the half-panel jackknife.
UnitDesign slice_design(const UnitDesign& design, Eigen::Index begin, Eigen::Index end);

struct ThresholdGrid {
  std::vector<double> points;
  std::vector<double> levels;  // probability levels that produced the points, if any

  ThresholdGrid() = default;
  explicit ThresholdGrid(std::vector<double> pts, std::vector<double> lv = {});

  std::size_t size() const { return points.size(); }
  double operator[](std::size_t j) const { return points[j]; }
  // Index of the largest grid point <= y, or -1 when y is below the grid.
  long locate(double y) const;
};

// Type-1 empirical quantile (left-continuous inverse of the ECDF).
double empirical_quantile(std::span<const double> sorted, double level);

ThresholdGrid pooled_threshold_grid(const PanelDataset& ds, std::span<const double> levels);
ThresholdGrid pooled_threshold_grid(const std::vector<UnitDesign>& designs,
                                    std::span<const double> levels);
ThresholdGrid uniform_grid(double lo, double hi, double step);

enum class Identification : unsigned char { BelowRange, Identified, AboveRange };

struct IdentificationStatus {
  // status[i][j] for unit i and grid point j.
  std::vector<std::vector<Identification>> status;
  std::vector<int> n_below;       // N_0(y)
  std::vector<int> n_identified;  // N_01(y)
  std::vector<int> n_above;       // N_1(y)
};

// Identified iff min_t y_it <= y < max_t y_it over the usable window.
Identification classify(const UnitDesign& design, double y);
IdentificationStatus classify_identification(const std::vector<UnitDesign>& designs,
                                             const ThresholdGrid& grid);

}  // namespace hetdr
