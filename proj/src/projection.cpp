#include "hetdr/projection.hpp"

#include <string>

#include "hetdr/error.hpp"
#include "hetdr/parallel.hpp"

namespace hetdr {

Eigen::MatrixXd solve_right(const Eigen::MatrixXd& b, const Eigen::MatrixXd& a, const char* what) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.transpose());
  qr.setThreshold(kRankTolerance);
  if (qr.rank() < a.rows()) {
    throw Error(ErrorCode::RankDeficient, std::string("rank-deficient ") + what);
  }
  return qr.solve(b.transpose()).transpose();
}

ProjectionMoments::ProjectionMoments(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& z,
                                     const Eigen::MatrixXd& w)
    : beta_(beta), z_(z), w_(w) {
  if (beta.rows() != z.rows() || z.rows() != w.rows()) {
    throw Error(ErrorCode::InvalidArgument, "projection inputs disagree on the number of units");
  }
  if (w.cols() < z.cols()) {
    throw Error(ErrorCode::InvalidArgument, "need at least as many instruments as characteristics");
  }
}

Eigen::MatrixXd ProjectionMoments::first_stage(const Eigen::VectorXd& c) const {
  const Eigen::MatrixXd cw = w_.array().colwise() * c.array();
  const Eigen::MatrixXd mww = w_.transpose() * cw;
  const Eigen::MatrixXd mzw = z_.transpose() * cw;
  return solve_right(mzw, mww, "instrument moment matrix");
}

Eigen::MatrixXd ProjectionMoments::theta(const Eigen::VectorXd& c) const {
  if (c.size() != rows()) throw Error(ErrorCode::InvalidArgument, "weight vector has the wrong length");
  const Eigen::MatrixXd cw = w_.array().colwise() * c.array();
  const Eigen::MatrixXd mww = w_.transpose() * cw;
  const Eigen::MatrixXd pi = solve_right(z_.transpose() * cw, mww, "instrument moment matrix");
  const Eigen::MatrixXd mbw = beta_.transpose() * cw;
  return solve_right(mbw * pi.transpose(), pi * mww * pi.transpose(), "fitted characteristic moments");
}

Eigen::MatrixXd ProjectionMoments::theta() const { return theta(Eigen::VectorXd::Ones(rows())); }

ProjectionEstimate project(const CoefficientField& field, const Eigen::MatrixXd& z, const Eigen::MatrixXd& w,
                           std::size_t j) {
  if (static_cast<std::size_t>(z.rows()) != field.units() || static_cast<std::size_t>(w.rows()) != field.units()) {
    throw Error(ErrorCode::InvalidArgument, "characteristics must have one row per unit");
  }
  ProjectionEstimate out;
  out.y = field.grid[j];
  out.units = field.usable_units(j);
  const auto n = static_cast<Eigen::Index>(out.units.size());
  if (n == 0) throw Error(ErrorCode::EmptySet, "no identified units at y=" + std::to_string(out.y));
  const int dx = field.dim();
  Eigen::MatrixXd b(n, dx), zs(n, z.cols()), ws(n, w.cols());
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = out.units[static_cast<std::size_t>(k)];
    b.row(k) = field.cells[i][j].beta.transpose();
    zs.row(k) = z.row(static_cast<Eigen::Index>(i));
    ws.row(k) = w.row(static_cast<Eigen::Index>(i));
  }
  const ProjectionMoments m(b, zs, ws);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  out.pi = m.first_stage(ones);
  out.theta = m.theta(ones);
  out.zhat = ws * out.pi.transpose();
  out.gamma = b - out.zhat * out.theta.transpose();
  const Eigen::MatrixXd mww = ws.transpose() * ws / static_cast<double>(n);
  // Π M Π' is symmetric, so Π'(Π M Π')^{-1} solves X (Π M Π') = Π'.
  out.s_wz = solve_right(out.pi.transpose(), out.pi * mww * out.pi.transpose(), "fitted characteristic moments");
  return out;
}

std::vector<ProjectionEstimate> project_all(const CoefficientField& field, const Eigen::MatrixXd& z,
                                            const Eigen::MatrixXd& w) {
  std::vector<ProjectionEstimate> out(field.grid.size());
  parallel_for(out.size(), [&](std::size_t j) { out[j] = project(field, z, w, j); });
  return out;
}

namespace {

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
  return out;
}

}  // namespace

PluginVariances plugin_variances(const CoefficientField& field, const ProjectionEstimate& proj,
                                 const Eigen::MatrixXd& w) {
  const auto j = static_cast<std::size_t>(field.grid.locate(proj.y));
  const Eigen::Index dx = field.dim(), dz = proj.theta.cols();
  const Eigen::Index dim = dx * dz;
  PluginVariances out;
  out.v_psi = Eigen::MatrixXd::Zero(dim, dim);
  out.v_gamma = Eigen::MatrixXd::Zero(dim, dim);
  out.sigma_under = Eigen::MatrixXd::Zero(dim, dim);
  const double n = static_cast<double>(proj.units.size());
  double t_sum = 0.0;
  for (std::size_t k = 0; k < proj.units.size(); ++k) {
    const auto i = proj.units[k];
    const auto& cell = field.cells[i][j];
    if (!cell.has_sigma()) {
      throw Error(ErrorCode::InvalidArgument, "unit " + std::to_string(i) + " has no long-run variance at y=" +
                                                  std::to_string(proj.y));
    }
    const Eigen::VectorXd sw = proj.s_wz.transpose() * w.row(static_cast<Eigen::Index>(i)).transpose();
    const Eigen::MatrixXd outer = sw * sw.transpose();
    const Eigen::VectorXd g = proj.gamma.row(static_cast<Eigen::Index>(k)).transpose();
    const Eigen::MatrixXd kp = kron(outer, cell.sigma);
    out.v_psi += kp;
    out.v_gamma += kron(outer, g * g.transpose());
    out.sigma_under += kp / field.periods(i);
    t_sum += field.periods(i);
  }
  out.n = n;
  out.t = t_sum / n;
  out.v_psi /= n;
  out.v_gamma /= n;
  // Each unit's sandwich is scaled by its own T_i; with a balanced panel this is V̂_ψ/(NT).
  out.sigma_under /= n * n;
  out.sigma_over = out.sigma_under + out.v_gamma / n;
  return out;
}

}  // namespace hetdr
