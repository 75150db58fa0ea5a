#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddac/core.hpp"

namespace ddac::grouplasso {

/// Thin QR factors of each decorrelated block, stored side by side.
struct OrthoBlocks {
  Matrix q;  // n x W; block k occupies columns [offsets[k], offsets[k] + widths[k])
  std::vector<Matrix> r;
  std::vector<Eigen::Index> offsets;
  std::vector<Eigen::Index> widths;

  std::size_t count() const { return widths.size(); }
  Eigen::Index rows() const { return q.rows(); }
  Eigen::Index total_width() const { return q.cols(); }
  auto block(std::size_t k) const { return q.middleCols(offsets[k], widths[k]); }
};

/// Factors every block of `psi_tilde` (block widths given in order). R has a
/// positive diagonal.
OrthoBlocks qr_blocks(const Matrix& psi_tilde, std::span<const Eigen::Index> widths);

struct SolverOptions {
  double tolerance = 1e-7;  // max Euclidean change of any block in one sweep
  std::size_t max_sweeps = 10000;
  bool record_objective = false;
};

struct BackfitResult {
  Vector theta;
  std::size_t sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // after each sweep, when recorded
};

/// (1/n)||y - Q theta||^2 + lambda * sum_k ||Q_k theta_k||.
double objective(const Vector& y, const OrthoBlocks& blocks, const Vector& theta, double lambda);

/// Cyclic block soft-thresholding. Blocks are orthonormal, so each update
/// theta_k <- (1 - n lambda / (2 ||P_k||))_+ P_k is the exact block minimizer.
BackfitResult backfit(const Vector& y, const OrthoBlocks& blocks, double lambda,
                      const std::optional<Vector>& warm_start = std::nullopt, const SolverOptions& options = {});

/// Largest violation of the subgradient optimality conditions.
double kkt_residual(const Vector& y, const OrthoBlocks& blocks, const Vector& theta, double lambda);

struct LambdaPath {
  std::vector<double> values;  // descending
  bool degenerate = false;     // y is orthogonal to every block
};

/// lambda_1 = max_k (2/n) ||Q_k^T y|| down to ratio * lambda_1 geometrically.
LambdaPath lambda_path(const Vector& y, const OrthoBlocks& blocks, std::size_t count = 500, double ratio = 1e-3);

/// Min: argmin of the CV curve. OneSe: largest lambda whose CV error is
/// within one standard error of that minimum (cv.gglasso's default).
enum class CvRule { Min, OneSe };
std::string to_string(CvRule rule);
CvRule parse_cv_rule(const std::string& text);

struct CvResult {
  double lambda = 0.0;  // argmin
  std::size_t index = 0;
  double lambda_1se = 0.0;
  std::size_t index_1se = 0;
  std::vector<double> cv_errors;
  std::vector<double> cv_se;  // standard error of the fold errors

  std::size_t chosen(CvRule rule) const { return rule == CvRule::Min ? index : index_1se; }
};

/// K-fold CV over the rows of (y, Q). Each fold re-orthonormalizes the
/// training rows of every block and fits the whole path with warm starts;
/// the loss is held-out squared error. Ties go to the larger lambda.
CvResult cross_validate(const Vector& y, const OrthoBlocks& blocks, const LambdaPath& path, std::size_t folds,
                        std::uint64_t seed, const SolverOptions& options = {});

struct GroupLassoFit {
  Vector theta;
  double lambda = 0.0;
  std::vector<double> path;
  std::vector<double> cv_errors;
  std::vector<std::size_t> active;  // blocks with nonzero theta
  std::size_t iterations = 0;
  bool converged = true;
};

/// Path + CV + final warm-started fit at the chosen lambda.
GroupLassoFit fit_cv(const Vector& y, const OrthoBlocks& blocks, std::size_t folds, std::uint64_t seed,
                     const SolverOptions& options = {}, std::size_t path_length = 500, CvRule rule = CvRule::Min);

/// beta_k = R_k^{-1} theta_k per block; zero blocks stay exactly zero.
Vector back_solve(const std::vector<Matrix>& r_blocks, std::span<const Eigen::Index> offsets, const Vector& theta);
inline Vector back_solve(const OrthoBlocks& blocks, const Vector& theta) {
  return back_solve(blocks.r, blocks.offsets, theta);
}

}  // namespace ddac::grouplasso
