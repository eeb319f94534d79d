#include "hetdr/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"

namespace hetdr {
namespace {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
      field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, std::size_t line_no, std::string_view column) {
  if (s.empty()) {
    throw Error(ErrorCode::MissingObservation,
                "empty value in column '" + std::string(column) + "' at line " + std::to_string(line_no));
  }
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::ParseError, "cannot parse '" + std::string(s) + "' in column '" +
                                           std::string(column) + "' at line " + std::to_string(line_no));
  }
  return value;
}

long parse_time(std::string_view s, std::size_t line_no) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::ParseError,
                "time index '" + std::string(s) + "' is not an integer at line " + std::to_string(line_no));
  }
  return value;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return !prefix.empty() && s.size() > prefix.size() && s.substr(0, prefix.size()) == prefix;
}

struct RawRow {
  long time;
  double y;
  std::vector<double> v, z, w;
  std::size_t line;
};

}  // namespace

void PanelDataset::validate() const {
  if (units.empty()) throw Error(ErrorCode::EmptyPanel, "panel has no units");
  if (z.rows() != static_cast<Eigen::Index>(units.size()) || w.rows() != z.rows()) {
    throw Error(ErrorCode::InvalidArgument, "characteristic matrices do not match the unit count");
  }
  if (w.cols() < z.cols()) {
    throw Error(ErrorCode::InvalidArgument, "dim(w) must be at least dim(z)");
  }
  std::unordered_map<std::string, int> seen;
  for (const auto& u : units) {
    if (!seen.emplace(u.id, 0).second) throw Error(ErrorCode::DuplicateKey, "unit id '" + u.id + "' repeated");
    if (u.time.size() != u.y.size()) throw Error(ErrorCode::InvalidArgument, "unit '" + u.id + "' is ragged");
    for (std::size_t t = 1; t < u.time.size(); ++t) {
      if (u.time[t] <= u.time[t - 1]) {
        throw Error(ErrorCode::InvalidArgument, "time not strictly increasing in unit '" + u.id + "'");
      }
    }
    if (u.periods() < 2) throw Error(ErrorCode::UnitTooShort, "unit '" + u.id + "' has fewer than 2 periods");
  }
}

PanelDataset parse_panel(const std::string& csv_text, const PanelSchema& schema) {
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyPanel, "empty input");
  auto header = split_csv_line(line);

  int unit_col = -1, time_col = -1, y_col = -1;
  std::vector<int> v_cols, z_cols, w_cols;
  PanelDataset ds;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    auto h = header[c];
    if (h == schema.unit_column) unit_col = c;
    else if (h == schema.time_column) time_col = c;
    else if (h == schema.outcome_column) y_col = c;
    else if (starts_with(h, schema.v_prefix)) { v_cols.push_back(c); ds.v_names.emplace_back(h); }
    else if (starts_with(h, schema.z_prefix)) { z_cols.push_back(c); ds.z_names.emplace_back(h); }
    else if (starts_with(h, schema.w_prefix)) { w_cols.push_back(c); ds.w_names.emplace_back(h); }
  }
  if (unit_col < 0) throw Error(ErrorCode::MissingColumn, "column '" + schema.unit_column + "' not found");
  if (time_col < 0) throw Error(ErrorCode::MissingColumn, "column '" + schema.time_column + "' not found");
  if (y_col < 0) throw Error(ErrorCode::MissingColumn, "column '" + schema.outcome_column + "' not found");

  // Preserve first-appearance order of units.
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<RawRow>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                                             " fields, header has " + std::to_string(header.size()));
    }
    std::string id(f[unit_col]);
    if (id.empty()) throw Error(ErrorCode::ParseError, "empty unit id at line " + std::to_string(line_no));
    RawRow r;
    r.line = line_no;
    r.time = parse_time(f[time_col], line_no);
    r.y = parse_double(f[y_col], line_no, header[y_col]);
    for (int c : v_cols) r.v.push_back(parse_double(f[c], line_no, header[c]));
    for (int c : z_cols) r.z.push_back(parse_double(f[c], line_no, header[c]));
    for (int c : w_cols) r.w.push_back(parse_double(f[c], line_no, header[c]));
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(std::move(r));
  }
  if (order.empty()) throw Error(ErrorCode::EmptyPanel, "no data rows");

  const auto n = static_cast<Eigen::Index>(order.size());
  const int dz_raw = static_cast<int>(z_cols.size());
  const int dw_raw = static_cast<int>(w_cols.size());
  const int c0 = schema.z_constant ? 1 : 0;
  Eigen::MatrixXd zraw(n, dz_raw), wraw(n, dw_raw);

  for (Eigen::Index i = 0; i < n; ++i) {
    auto& rs = rows[order[i]];
    std::sort(rs.begin(), rs.end(), [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    UnitSeries u;
    u.id = order[i];
    u.v.resize(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(v_cols.size()));
    for (std::size_t t = 0; t < rs.size(); ++t) {
      if (t > 0 && rs[t].time == rs[t - 1].time) {
        throw Error(ErrorCode::DuplicateKey, "duplicate (unit, time) = (" + u.id + ", " +
                                                 std::to_string(rs[t].time) + ") at line " +
                                                 std::to_string(rs[t].line));
      }
      if (t > 0 && rs[t].time != rs[t - 1].time + 1) {
        throw Error(ErrorCode::MissingObservation, "unit '" + u.id + "' has a gap between periods " +
                                                       std::to_string(rs[t - 1].time) + " and " +
                                                       std::to_string(rs[t].time));
      }
      u.time.push_back(rs[t].time);
      u.y.push_back(rs[t].y);
      for (std::size_t k = 0; k < v_cols.size(); ++k) u.v(static_cast<Eigen::Index>(t), k) = rs[t].v[k];
      for (int k = 0; k < dz_raw; ++k) {
        if (t == 0) zraw(i, k) = rs[t].z[k];
        else if (rs[t].z[k] != zraw(i, k))
          throw Error(ErrorCode::NonConstantCharacteristic,
                      "column '" + ds.z_names[k] + "' varies within unit '" + u.id + "'");
      }
      for (int k = 0; k < dw_raw; ++k) {
        if (t == 0) wraw(i, k) = rs[t].w[k];
        else if (rs[t].w[k] != wraw(i, k))
          throw Error(ErrorCode::NonConstantCharacteristic,
                      "column '" + ds.w_names[k] + "' varies within unit '" + u.id + "'");
      }
    }
    ds.units.push_back(std::move(u));
  }

  ds.z.resize(n, dz_raw + c0);
  if (c0) ds.z.col(0).setOnes();
  ds.z.rightCols(dz_raw) = zraw;
  if (c0) ds.z_names.insert(ds.z_names.begin(), "const");
  if (dw_raw == 0) {
    ds.w = ds.z;
    ds.w_names = ds.z_names;
  } else {
    ds.w.resize(n, dw_raw + c0);
    if (c0) ds.w.col(0).setOnes();
    ds.w.rightCols(dw_raw) = wraw;
    if (c0) ds.w_names.insert(ds.w_names.begin(), "const");
  }
  if (ds.z.cols() == 0) {
    throw Error(ErrorCode::InvalidArgument, "no characteristics: supply z_* columns or enable the constant");
  }
  ds.validate();
  return ds;
}

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_panel(ss.str(), schema);
}

Eigen::Index UnitDesign::row_of(long t) const {
  auto it = std::lower_bound(time.begin(), time.end(), t);
  if (it == time.end() || *it != t) return -1;
  return static_cast<Eigen::Index>(it - time.begin());
}

UnitDesign build_regressors(const UnitSeries& unit, const DesignOptions& opts) {
  if (opts.lags < 0) throw Error(ErrorCode::InvalidArgument, "lags must be nonnegative");
  const auto total = static_cast<Eigen::Index>(unit.periods());
  if (total < opts.lags + 1) {
    throw Error(ErrorCode::UnitTooShort, "unit '" + unit.id + "' has " + std::to_string(total) +
                                             " periods, needs at least " + std::to_string(opts.lags + 1));
  }
  UnitDesign d;
  d.layout.has_constant = opts.include_constant;
  d.layout.lags = opts.lags;
  d.layout.n_v = opts.include_v ? static_cast<int>(unit.v.cols()) : 0;
  const int dim = d.layout.dim();
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "empty design: no constant, lags or covariates");
  const Eigen::Index rows = total - opts.lags;
  d.x.resize(rows, dim);
  d.y.resize(rows);
  d.time.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index t = r + opts.lags;
    int c = 0;
    if (opts.include_constant) d.x(r, c++) = 1.0;
    for (int l = 1; l <= opts.lags; ++l) d.x(r, c++) = unit.y[static_cast<std::size_t>(t - l)];
    for (int k = 0; k < d.layout.n_v; ++k) d.x(r, c++) = unit.v(t, k);
    d.y(r) = unit.y[static_cast<std::size_t>(t)];
    d.time[static_cast<std::size_t>(r)] = unit.time[static_cast<std::size_t>(t)];
  }
  return d;
}

std::vector<UnitDesign> build_regressors(const PanelDataset& ds, const DesignOptions& opts) {
  std::vector<UnitDesign> out;
  out.reserve(ds.size());
  for (const auto& u : ds.units) out.push_back(build_regressors(u, opts));
  return out;
}

UnitDesign slice_design(const UnitDesign& design, Eigen::Index begin, Eigen::Index end) {
  if (begin < 0 || end > design.periods() || end - begin < 1) {
    throw Error(ErrorCode::InvalidArgument, "invalid design slice");
  }
  UnitDesign s;
  s.layout = design.layout;
  s.x = design.x.middleRows(begin, end - begin);
  s.y = design.y.segment(begin, end - begin);
  s.time.assign(design.time.begin() + begin, design.time.begin() + end);
  return s;
}

ThresholdGrid::ThresholdGrid(std::vector<double> pts, std::vector<double> lv)
    : points(std::move(pts)), levels(std::move(lv)) {
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, "threshold grid is empty");
  for (std::size_t j = 1; j < points.size(); ++j) {
    if (!(points[j] > points[j - 1])) throw Error(ErrorCode::InvalidArgument, "threshold grid not strictly increasing");
  }
}

long ThresholdGrid::locate(double y) const {
  auto it = std::upper_bound(points.begin(), points.end(), y);
  return static_cast<long>(it - points.begin()) - 1;
}

double empirical_quantile(std::span<const double> sorted, double level) {
  if (sorted.empty()) throw Error(ErrorCode::EmptySet, "quantile of an empty sample");
  if (!(level >= 0.0 && level <= 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level outside [0,1]");
  const double n = static_cast<double>(sorted.size());
  // Guard against n*level landing a hair above an integer through rounding.
  auto k = static_cast<std::size_t>(std::ceil(n * level - 1e-9));
  if (k == 0) k = 1;
  if (k > sorted.size()) k = sorted.size();
  return sorted[k - 1];
}

namespace {

ThresholdGrid grid_from_pool(std::vector<double> pool, std::span<const double> levels) {
  if (pool.empty()) throw Error(ErrorCode::EmptyPanel, "no outcomes to pool");
  if (levels.empty()) throw Error(ErrorCode::InvalidArgument, "no probability levels");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (!(levels[k] > 0.0 && levels[k] < 1.0)) throw Error(ErrorCode::InvalidArgument, "levels must lie in (0,1)");
    if (k > 0 && !(levels[k] > levels[k - 1])) throw Error(ErrorCode::InvalidArgument, "levels must increase");
  }
  std::sort(pool.begin(), pool.end());
  std::vector<double> pts, lv;
  for (double p : levels) {
    double q = empirical_quantile(pool, p);
    if (pts.empty() || q > pts.back()) {
      pts.push_back(q);
      lv.push_back(p);
    }
  }
  return ThresholdGrid(std::move(pts), std::move(lv));
}

}  // namespace

ThresholdGrid pooled_threshold_grid(const PanelDataset& ds, std::span<const double> levels) {
  std::vector<double> pool;
  for (const auto& u : ds.units) pool.insert(pool.end(), u.y.begin(), u.y.end());
  return grid_from_pool(std::move(pool), levels);
}

ThresholdGrid pooled_threshold_grid(const std::vector<UnitDesign>& designs, std::span<const double> levels) {
  std::vector<double> pool;
  for (const auto& d : designs) pool.insert(pool.end(), d.y.data(), d.y.data() + d.y.size());
  return grid_from_pool(std::move(pool), levels);
}

ThresholdGrid uniform_grid(double lo, double hi, double step) {
  if (!(hi > lo) || !(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "invalid uniform grid");
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> pts(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) pts[static_cast<std::size_t>(k)] = lo + step * static_cast<double>(k);
  return ThresholdGrid(std::move(pts));
}

Identification classify(const UnitDesign& design, double y) {
  if (y < design.min_outcome()) return Identification::BelowRange;
  if (y >= design.max_outcome()) return Identification::AboveRange;
  return Identification::Identified;
}

IdentificationStatus classify_identification(const std::vector<UnitDesign>& designs, const ThresholdGrid& grid) {
  IdentificationStatus s;
  const std::size_t g = grid.size();
  s.n_below.assign(g, 0);
  s.n_identified.assign(g, 0);
  s.n_above.assign(g, 0);
  s.status.resize(designs.size());
  for (std::size_t i = 0; i < designs.size(); ++i) {
    s.status[i].resize(g);
    for (std::size_t j = 0; j < g; ++j) {
      auto c = classify(designs[i], grid[j]);
      s.status[i][j] = c;
      switch (c) {
        case Identification::BelowRange: ++s.n_below[j]; break;
        case Identification::Identified: ++s.n_identified[j]; break;
        case Identification::AboveRange: ++s.n_above[j]; break;
      }
    }
  }
  return s;
}

}  // namespace hetdr
