#include "hetdr/counterfactual.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>

#include "hetdr/error.hpp"
#include "hetdr/log.hpp"
#include "hetdr/parallel.hpp"

namespace hetdr {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double parse_number(std::string_view s, std::string_view what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw Error(ErrorCode::ParseError, "cannot parse " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

// "a=1,b=2" -> map
std::map<std::string, std::string> parse_pairs(std::string_view s) {
  std::map<std::string, std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto item = s.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "expected key=value in '" + std::string(item) + "'");
    }
    out[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

Eigen::Index resolve_column(const std::string& name, const std::vector<std::string>& names) {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name || names[k] == "z_" + name) return static_cast<Eigen::Index>(k);
  }
  int idx = -1;
  auto [p, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
  if (ec == std::errc() && p == name.data() + name.size() && idx >= 0 &&
      static_cast<std::size_t>(idx) < names.size()) {
    return idx;
  }
  throw Error(ErrorCode::MissingColumn, "unknown characteristic column '" + name + "'");
}

int lag_column(const DesignLayout& layout) {
  const int c = layout.first_lag();
  if (c < 0) throw Error(ErrorCode::InvalidArgument, "tax transforms need a lagged outcome in the design");
  return c;
}

}  // namespace

CharTransform CharTransform::min_value(Eigen::Index col, double floor) {
  CharTransform g;
  g.kind = Kind::MinValue;
  g.column = col;
  g.value = floor;
  return g;
}

CharTransform CharTransform::add_value(Eigen::Index col, double delta) {
  CharTransform g;
  g.kind = Kind::AddValue;
  g.column = col;
  g.value = delta;
  return g;
}

CharTransform CharTransform::custom(Eigen::MatrixXd rows) {
  CharTransform g;
  g.kind = Kind::Custom;
  g.replacement = std::move(rows);
  return g;
}

CharTransform CharTransform::parse(std::string_view spec, const std::vector<std::string>& z_names) {
  if (spec.empty() || spec == "none" || spec == "identity") return identity();
  const auto colon = spec.find(':');
  const auto kind = spec.substr(0, colon);
  if (colon == std::string_view::npos) throw Error(ErrorCode::ParseError, "bad characteristic transform");
  auto kv = parse_pairs(spec.substr(colon + 1));
  if (!kv.count("col")) throw Error(ErrorCode::ParseError, "characteristic transform needs col=");
  const auto col = resolve_column(kv["col"], z_names);
  if (kind == "min") {
    if (!kv.count("floor")) throw Error(ErrorCode::ParseError, "min transform needs floor=");
    return min_value(col, parse_number(kv["floor"], "floor"));
  }
  if (kind == "add") {
    if (!kv.count("delta")) throw Error(ErrorCode::ParseError, "add transform needs delta=");
    return add_value(col, parse_number(kv["delta"], "delta"));
  }
  throw Error(ErrorCode::ParseError, "unknown characteristic transform '" + std::string(kind) + "'");
}

Eigen::MatrixXd CharTransform::apply(const Eigen::MatrixXd& z) const {
  switch (kind) {
    case Kind::Identity: return z;
    case Kind::MinValue: {
      Eigen::MatrixXd out = z;
      out.col(column) = out.col(column).cwiseMax(value);
      return out;
    }
    case Kind::AddValue: {
      Eigen::MatrixXd out = z;
      out.col(column).array() += value;
      return out;
    }
    case Kind::Custom:
      if (replacement.rows() != z.rows() || replacement.cols() != z.cols()) {
        throw Error(ErrorCode::InvalidArgument, "custom characteristic rows have the wrong shape");
      }
      return replacement;
  }
  return z;
}

CovariateTransform CovariateTransform::flat_tax(double kappa) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw Error(ErrorCode::InvalidArgument, "flat tax rate must lie in [0, 1)");
  CovariateTransform h;
  h.kind = Kind::FlatTax;
  h.kappa = kappa;
  return h;
}

CovariateTransform CovariateTransform::progressive_tax() {
  CovariateTransform h;
  h.kind = Kind::ProgressiveTax;
  return h;
}

CovariateTransform CovariateTransform::custom(Eigen::MatrixXd rows) {
  CovariateTransform h;
  h.kind = Kind::Custom;
  h.replacement = std::move(rows);
  return h;
}

CovariateTransform CovariateTransform::parse(std::string_view spec) {
  if (spec.empty() || spec == "none" || spec == "identity") return identity();
  if (spec == "prog") return progressive_tax();
  if (spec.starts_with("flat:")) return flat_tax(parse_number(spec.substr(5), "tax rate"));
  throw Error(ErrorCode::ParseError, "unknown covariate transform '" + std::string(spec) + "'");
}

Eigen::MatrixXd CovariateTransform::apply(const Eigen::MatrixXd& rows, const DesignLayout& layout) const {
  switch (kind) {
    case Kind::Identity: return rows;
    case Kind::FlatTax: return apply_flat_tax(rows, layout, kappa);
    case Kind::ProgressiveTax: return apply_progressive_tax(rows, layout);
    case Kind::Custom:
      if (replacement.rows() != rows.rows() || replacement.cols() != rows.cols()) {
        throw Error(ErrorCode::InvalidArgument, "custom covariate rows have the wrong shape");
      }
      return replacement;
  }
  return rows;
}

Eigen::MatrixXd apply_flat_tax(const Eigen::MatrixXd& rows, const DesignLayout& layout, double kappa) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw Error(ErrorCode::InvalidArgument, "flat tax rate must lie in [0, 1)");
  Eigen::MatrixXd out = rows;
  out.col(lag_column(layout)).array() += std::log1p(-kappa);
  return out;
}

Eigen::MatrixXd apply_progressive_tax(const Eigen::MatrixXd& rows, const DesignLayout& layout) {
  const int c = lag_column(layout);
  Eigen::MatrixXd out = rows;
  std::vector<double> lag;
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    if (std::isfinite(rows(i, c))) lag.push_back(rows(i, c));
  std::sort(lag.begin(), lag.end());
  const double n = static_cast<double>(lag.size());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    if (!std::isfinite(rows(i, c))) continue;
    const double rank = static_cast<double>(std::upper_bound(lag.begin(), lag.end(), rows(i, c)) - lag.begin()) / n;
    out(i, c) += std::log1p(-rank / 2.0);
  }
  return out;
}

CoefficientField counterfactual_coefficients(const CoefficientField& field,
                                             const std::vector<ProjectionEstimate>& projections,
                                             const Eigen::MatrixXd& z, const CharTransform& g) {
  CoefficientField out = field;
  if (g.is_identity()) return out;
  if (projections.size() != field.grid.size()) {
    throw Error(ErrorCode::InvalidArgument, "projections must cover the field's grid");
  }
  const Eigen::MatrixXd dz = g.apply(z) - z;
  for (std::size_t i = 0; i < out.units(); ++i) {
    for (std::size_t j = 0; j < out.grid.size(); ++j) {
      auto& cell = out.cells[i][j];
      if (!cell.has_beta()) continue;
      cell.beta += projections[j].theta * dz.row(static_cast<Eigen::Index>(i)).transpose();
    }
  }
  out.correction = field.correction + "+g";
  return out;
}

ReferenceRows reference_rows(const CoefficientField& field, long period) {
  ReferenceRows out;
  out.period = period;
  out.x = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(field.units()), field.dim(), kNaN);
  for (std::size_t i = 0; i < field.units(); ++i) {
    const auto r = field.designs[i].row_of(period);
    if (r < 0) {
      out.missing.push_back(i);
      continue;
    }
    out.x.row(static_cast<Eigen::Index>(i)) = field.designs[i].x.row(r);
  }
  if (!out.missing.empty()) {
    log::warn(std::to_string(out.missing.size()) + " units have no observation at period " +
              std::to_string(period) + " and are excluded");
  }
  return out;
}

double unit_contribution(const FieldCell& cell, const Eigen::VectorXd& x, const Link& link, double periods,
                         bool bias_correction) {
  switch (cell.status) {
    case CellStatus::BelowRange: return 0.0;
    case CellStatus::AboveRange: return 1.0;
    default: break;
  }
  if (!cell.has_beta()) return kNaN;
  const double s = -x.dot(cell.beta);
  double v = link.cdf(s);
  if (bias_correction && cell.usable() && cell.has_sigma()) {
    v -= 0.5 * link.d2(s) * x.dot(cell.sigma * x) / periods;
  }
  return v;
}

Eigen::MatrixXd unit_contributions(const CoefficientField& field, const Eigen::MatrixXd& rows,
                                   const DistributionOptions& opts) {
  const auto n = static_cast<Eigen::Index>(field.units());
  const auto g = static_cast<Eigen::Index>(field.grid.size());
  if (rows.rows() != n || rows.cols() != field.dim()) {
    throw Error(ErrorCode::InvalidArgument, "reference rows must have one design row per unit");
  }
  Eigen::MatrixXd psi = Eigen::MatrixXd::Constant(n, g, kNaN);
  parallel_for(field.units(), [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!rows.row(r).allFinite()) return;
    const Eigen::VectorXd x = rows.row(r).transpose();
    for (Eigen::Index j = 0; j < g; ++j) {
      psi(r, j) = unit_contribution(field.cells[i][static_cast<std::size_t>(j)], x, field.link, field.periods(i),
                                    opts.bias_correction);
    }
  });
  return psi;
}

DistributionEstimate estimate_distribution(const CoefficientField& field, const Eigen::MatrixXd& rows,
                                           const DistributionOptions& opts) {
  const Eigen::MatrixXd psi = unit_contributions(field, rows, opts);
  const auto g = field.grid.size();
  DistributionEstimate out;
  out.grid = field.grid;
  out.values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
  out.bias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g));
  out.n_below.assign(g, 0);
  out.n_identified.assign(g, 0);
  out.n_above.assign(g, 0);
  for (Eigen::Index i = 0; i < psi.rows(); ++i)
    if (rows.row(i).allFinite()) ++out.n_units;

  int skipped = 0;
  for (std::size_t j = 0; j < g; ++j) {
    const auto c = static_cast<Eigen::Index>(j);
    double sum = 0.0, bias = 0.0;
    int used = 0;
    for (std::size_t i = 0; i < field.units(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (!rows.row(r).allFinite()) continue;
      const double v = psi(r, c);
      if (std::isnan(v)) {
        ++skipped;
        continue;
      }
      const auto& cell = field.cells[i][j];
      if (cell.status == CellStatus::BelowRange) ++out.n_below[j];
      else if (cell.status == CellStatus::AboveRange) ++out.n_above[j];
      else {
        ++out.n_identified[j];
        if (opts.bias_correction && cell.usable() && cell.has_sigma()) {
          const Eigen::VectorXd x = rows.row(r).transpose();
          bias += field.link.cdf(-x.dot(cell.beta)) - v;
        }
      }
      sum += v;
      ++used;
    }
    out.values(c) = used > 0 ? sum / used : kNaN;
    out.bias(c) = used > 0 ? bias / used : 0.0;
  }
  if (skipped > 0) log::warn(std::to_string(skipped) + " unit-threshold cells without a coefficient were skipped");
  return out;
}

}  // namespace hetdr
