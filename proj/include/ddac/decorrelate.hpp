#pragma once

#include <cstdint>
#include <vector>

#include "ddac/core.hpp"

namespace ddac::decorrelate {

/// The n x n operator F = (G + rI)^(-1/2) for the aggregated Gram G.
struct DecorrelationOperator {
  Matrix f;
  double r = 1.0;
  /// Smallest eigenvalue of G + rI after clipping negative eigenvalues of G.
  double eigen_floor = 0.0;
};

/// psi * psi^T for one worker's n x (p_i d_n) standardized design. A worker
/// without columns contributes the zero matrix; pass its row count explicitly.
Matrix local_gram(const Matrix& psi_std);
Matrix local_gram(const Matrix& psi_std, Eigen::Index n);

DecorrelationOperator compute_f(const Matrix& gram_sum, double r);

Matrix apply_f(const DecorrelationOperator& op, const Matrix& target);
Vector apply_f(const DecorrelationOperator& op, const Vector& target);

/// tr(a^T b) / (||a||_F ||b||_F).
double quasi_correlation(const Matrix& a, const Matrix& b);

/// Five-number summary plus the median of absolute values.
struct Quantiles {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double median_abs = 0;
};
Quantiles summarize(std::vector<double> values);

struct QuasiCorrelationSummary {
  std::vector<double> before;  // rho_ij between standardized blocks
  std::vector<double> after;   // rho~_ij between decorrelated blocks
  Quantiles before_q;
  Quantiles after_q;
};

/// Samples an equicorrelated Gaussian design (0 <= rho < 1), builds the
/// standardized blocks and F (r = 1), and compares pairwise quasi-correlations
/// before and after decorrelation over at most `max_pairs` random pairs.
QuasiCorrelationSummary quasi_correlation_study(std::size_t n, std::size_t p, double rho, std::size_t dn,
                                                std::uint64_t seed, std::size_t max_pairs = 2000, double r = 1.0);

}  // namespace ddac::decorrelate
