#pragma once

#include <string>
#include <string_view>

namespace hetdr {

enum class LinkKind { Logit, Probit };

// Derivatives of log Λ at s; log(1 - Λ(s)) follows from the symmetry
// 1 - Λ(s) = Λ(-s) shared by both links.
struct LogDerivs {
  double d0;  // log Λ(s)
  double d1;
  double d2;
  double d3;
};

// Binary log-likelihood contribution b*log Λ(s) + (1-b)*log(1-Λ(s)) and its
// first three derivatives with respect to the index s.
struct IndexLoglik {
  double value;
  double d1;
  double d2;
  double d3;
};

class Link {
 public:
  explicit Link(LinkKind kind = LinkKind::Logit) : kind_(kind) {}

  // "logit" | "probit"
  static Link parse(std::string_view name);

  LinkKind kind() const { return kind_; }
  std::string name() const { return kind_ == LinkKind::Logit ? "logit" : "probit"; }

  double cdf(double s) const;
  double pdf(double s) const;
  double d2(double s) const;
  double d3(double s) const;
  // order in 0..3
  double eval(int order, double s) const;
  // Λ^{-1}(p) for p in (0,1).
  double inverse(double p) const;

  LogDerivs log_cdf(double s) const;
  IndexLoglik loglik(double s, bool success) const;

 private:
  LinkKind kind_;
};

// Probabilities inside log-likelihood values are clamped to this band.
inline constexpr double kProbFloor = 1e-12;

}  // namespace hetdr
