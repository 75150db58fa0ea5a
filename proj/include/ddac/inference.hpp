#pragma once

#include <cstddef>
#include <string>

#include "ddac/core.hpp"

namespace ddac::inference {

/// P(X <= x) for X ~ chi2(dof), via the regularized lower incomplete gamma.
double chi2_cdf(double x, double dof);
/// Upper tail P(X > x), computed directly so small p-values keep precision.
double chi2_sf(double x, double dof);
/// Inverse of chi2_cdf by bracketed root finding; |error| <= 1e-9.
double chi2_quantile(double dof, double prob);

struct Residuals {
  Vector eps;
  double sigma = 0.0;
};

/// eps = y - fitted_sums, sigma = ||eps|| / sqrt(n).
Residuals estimate_sigma(const Vector& y, const Vector& fitted_sums);

/// beta_u = beta_k + (p d_n / n) psi_tilde_k^T F eps. `pdn` is the total
/// design width (p * d_n when every block has d_n columns).
Vector debias_block(const Vector& beta_k, const Matrix& psi_tilde_k, const Matrix& f, const Vector& eps, double pdn,
                    std::size_t n);

/// (psi_tilde_k^T F F^T psi_tilde_k)^(-1/2) * n / (p d_n sigma).
Matrix scaling_matrix(const Matrix& psi_tilde_k, const Matrix& f, double sigma, double pdn, std::size_t n);

struct DebiasedBlock {
  Vector beta_u;
  Matrix m_hat;
};

enum class Decision { Reject, Accept };
std::string to_string(Decision d);

struct TestReport {
  std::size_t feature = 0;  // global, 0-based
  std::size_t machine = 0;  // 0-based
  std::size_t local = 0;    // 0-based
  double statistic = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  double alpha = 0.05;
  Decision decision = Decision::Accept;
  double sigma_hat = 0.0;
};

/// T = ||M beta_u||^2 against chi2(dof) at level alpha.
TestReport evaluate_statistic(double statistic, std::size_t dof, double alpha);

}  // namespace ddac::inference
