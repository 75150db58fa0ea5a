#include "ddac/inference.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::inference {

Residuals estimate_sigma(const Vector& y, const Vector& fitted_sums) {
  if (y.size() != fitted_sums.size())
    fail(ErrorKind::ShapeMismatch, fmt::format("response has {} rows, fitted sums {}", y.size(), fitted_sums.size()));
  Residuals out;
  out.eps = y - fitted_sums;
  out.sigma = y.size() > 0 ? out.eps.norm() / std::sqrt(static_cast<double>(y.size())) : 0.0;
  return out;
}

Vector debias_block(const Vector& beta_k, const Matrix& psi_tilde_k, const Matrix& f, const Vector& eps, double pdn,
                    std::size_t n) {
  if (psi_tilde_k.cols() != beta_k.size() || psi_tilde_k.rows() != f.cols() || f.rows() != eps.size() ||
      f.rows() != f.cols())
    fail(ErrorKind::ShapeMismatch, "debias_block: inconsistent block, operator, or residual shapes");
  const Vector f_eps = f * eps;
  return beta_k + (pdn / static_cast<double>(n)) * (psi_tilde_k.transpose() * f_eps);
}

Matrix scaling_matrix(const Matrix& psi_tilde_k, const Matrix& f, double sigma, double pdn, std::size_t n) {
  if (!(sigma > 0.0)) fail(ErrorKind::SigmaZero, fmt::format("sigma_hat = {}", sigma));
  if (psi_tilde_k.rows() != f.rows())
    fail(ErrorKind::ShapeMismatch, "scaling_matrix: block rows do not match the operator");
  const Matrix ft_psi = f.transpose() * psi_tilde_k;
  Matrix inner = ft_psi.transpose() * ft_psi;
  inner = 0.5 * (inner + inner.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(inner);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (!(min_eig > 1e-12)) fail(ErrorKind::NearSingularInner, fmt::format("min eigenvalue {:.3e}", min_eig));
  const double scale = static_cast<double>(n) / (pdn * sigma);
  Matrix m = eig.eigenvectors() * (scale * eig.eigenvalues().cwiseSqrt().cwiseInverse()).asDiagonal() *
             eig.eigenvectors().transpose();
  return 0.5 * (m + m.transpose());
}

std::string to_string(Decision d) { return d == Decision::Reject ? "reject" : "accept"; }

TestReport evaluate_statistic(double statistic, std::size_t dof, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, fmt::format("alpha must lie in (0, 1), got {}", alpha));
  if (!(statistic >= 0.0)) fail(ErrorKind::InvalidArgument, fmt::format("statistic must be nonnegative, got {}", statistic));
  TestReport report;
  report.statistic = statistic;
  report.dof = dof;
  report.alpha = alpha;
  report.p_value = chi2_sf(statistic, static_cast<double>(dof));
  report.decision = report.p_value < alpha ? Decision::Reject : Decision::Accept;
  return report;
}

}  // namespace ddac::inference
