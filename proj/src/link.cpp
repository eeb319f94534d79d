#include "hetdr/link.hpp"

#include <cmath>
#include <numbers>

#include "hetdr/error.hpp"

namespace hetdr {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double logistic(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double normal_cdf(double s) { return 0.5 * std::erfc(-s * kInvSqrt2); }
double normal_pdf(double s) { return kInvSqrt2Pi * std::exp(-0.5 * s * s); }

// Below this the erfc route underflows; an asymptotic series takes over.
constexpr double kProbitTail = -37.0;

LogDerivs probit_log_cdf(double s) {
  double r = 0.0, log_cdf = 0.0;
  if (s > kProbitTail) {
    const double cdf = normal_cdf(s);
    r = normal_pdf(s) / cdf;
    log_cdf = std::log(cdf);
  } else {
    const double u = 1.0 / (s * s);
    const double series = 1.0 - u + 3.0 * u * u - 15.0 * u * u * u;
    r = -s / series;
    log_cdf = -0.5 * s * s - std::log(-s) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log(series);
  }
  const double sr = s + r;
  return {log_cdf, r, -r * sr, r * (sr * (s + 2.0 * r) - 1.0)};
}

LogDerivs logit_log_cdf(double s) {
  const double lam = logistic(s);
  const double dlam = lam * (1.0 - lam);
  const double log_cdf = s >= 0 ? -std::log1p(std::exp(-s)) : s - std::log1p(std::exp(s));
  return {log_cdf, 1.0 - lam, -dlam, -dlam * (1.0 - 2.0 * lam)};
}

}  // namespace

Link Link::parse(std::string_view name) {
  if (name == "logit") return Link(LinkKind::Logit);
  if (name == "probit") return Link(LinkKind::Probit);
  throw Error(ErrorCode::InvalidArgument, "unknown link '" + std::string(name) + "' (expected logit|probit)");
}

double Link::cdf(double s) const { return kind_ == LinkKind::Logit ? logistic(s) : normal_cdf(s); }

double Link::pdf(double s) const {
  if (kind_ == LinkKind::Logit) {
    const double l = logistic(s);
    return l * (1.0 - l);
  }
  return normal_pdf(s);
}

double Link::d2(double s) const {
  if (kind_ == LinkKind::Logit) {
    const double l = logistic(s);
    return l * (1.0 - l) * (1.0 - 2.0 * l);
  }
  return -s * normal_pdf(s);
}

double Link::d3(double s) const {
  if (kind_ == LinkKind::Logit) {
    const double l = logistic(s);
    const double dl = l * (1.0 - l);
    return dl * (1.0 - 6.0 * dl);
  }
  return (s * s - 1.0) * normal_pdf(s);
}

double Link::eval(int order, double s) const {
  switch (order) {
    case 0: return cdf(s);
    case 1: return pdf(s);
    case 2: return d2(s);
    case 3: return d3(s);
    default: throw Error(ErrorCode::InvalidArgument, "link derivative order must be 0..3");
  }
}

double Link::inverse(double p) const {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "link inverse needs p in (0,1)");
  if (kind_ == LinkKind::Logit) return std::log(p / (1.0 - p));
  // Guarded Newton: keep a bracket and bisect whenever a step leaves it.
  double lo = -40.0, hi = 40.0, s = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double f = normal_cdf(s) - p;
    if (f > 0) hi = s;
    else lo = s;
    const double d = normal_pdf(s);
    double next = d > 0 ? s - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - s) <= 1e-15 * std::max(1.0, std::abs(s))) return next;
    s = next;
  }
  return s;
}

LogDerivs Link::log_cdf(double s) const {
  return kind_ == LinkKind::Logit ? logit_log_cdf(s) : probit_log_cdf(s);
}

IndexLoglik Link::loglik(double s, bool success) const {
  static const double kLogFloor = std::log(kProbFloor);
  if (success) {
    const auto d = log_cdf(s);
    return {std::max(d.d0, kLogFloor), d.d1, d.d2, d.d3};
  }
  const auto d = log_cdf(-s);
  return {std::max(d.d0, kLogFloor), -d.d1, d.d2, -d.d3};
}

}  // namespace hetdr
