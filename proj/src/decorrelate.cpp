#include "ddac/decorrelate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>

#include "ddac/errors.hpp"
#include "ddac/spline.hpp"
#include "ddac/synthgen.hpp"

namespace ddac::decorrelate {

Matrix local_gram(const Matrix& psi_std) { return local_gram(psi_std, psi_std.rows()); }

Matrix local_gram(const Matrix& psi_std, Eigen::Index n) {
  Matrix gram = Matrix::Zero(n, n);
  if (psi_std.cols() == 0) return gram;
  if (psi_std.rows() != n) fail(ErrorKind::ShapeMismatch, "design rows do not match n");
  gram.selfadjointView<Eigen::Lower>().rankUpdate(psi_std);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
  return gram;
}

DecorrelationOperator compute_f(const Matrix& gram_sum, double r) {
  if (gram_sum.rows() != gram_sum.cols()) fail(ErrorKind::ShapeMismatch, "Gram must be square");
  if (!(r > 0.0)) fail(ErrorKind::InvalidArgument, "ridge r must be positive");
  const Matrix sym = 0.5 * (gram_sum + gram_sum.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success || !eig.eigenvalues().allFinite())
    fail(ErrorKind::NonFiniteEigenvalue, "eigendecomposition of the aggregated Gram failed");
  const Vector shifted = eig.eigenvalues().cwiseMax(0.0).array() + r;
  const Vector inv_root = shifted.cwiseSqrt().cwiseInverse();
  DecorrelationOperator op;
  op.r = r;
  op.eigen_floor = shifted.minCoeff();
  op.f = eig.eigenvectors() * inv_root.asDiagonal() * eig.eigenvectors().transpose();
  op.f = 0.5 * (op.f + op.f.transpose());
  return op;
}

Matrix apply_f(const DecorrelationOperator& op, const Matrix& target) {
  if (target.rows() != op.f.cols())
    fail(ErrorKind::ShapeMismatch, fmt::format("target has {} rows, F is {}x{}", target.rows(), op.f.rows(), op.f.cols()));
  return op.f * target;
}

Vector apply_f(const DecorrelationOperator& op, const Vector& target) {
  if (target.size() != op.f.cols())
    fail(ErrorKind::ShapeMismatch, fmt::format("target has {} rows, F is {}x{}", target.size(), op.f.rows(), op.f.cols()));
  return op.f * target;
}

double quasi_correlation(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail(ErrorKind::ShapeMismatch, "blocks differ in shape");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::ZeroBlock, "quasi-correlation of a zero block");
  const double value = (a.array() * b.array()).sum() / (na * nb);
  return std::clamp(value, -1.0, 1.0);
}

Quantiles summarize(std::vector<double> values) {
  Quantiles q;
  if (values.empty()) return q;
  auto at = [](const std::vector<double>& sorted, double prob) {
    // Linear interpolation between order statistics.
    const double pos = prob * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  std::vector<double> abs_values(values.size());
  std::transform(values.begin(), values.end(), abs_values.begin(), [](double v) { return std::abs(v); });
  std::sort(values.begin(), values.end());
  std::sort(abs_values.begin(), abs_values.end());
  q.min = values.front();
  q.q1 = at(values, 0.25);
  q.median = at(values, 0.5);
  q.q3 = at(values, 0.75);
  q.max = values.back();
  q.median_abs = at(abs_values, 0.5);
  return q;
}

QuasiCorrelationSummary quasi_correlation_study(std::size_t n, std::size_t p, double rho, std::size_t dn,
                                                std::uint64_t seed, std::size_t max_pairs, double r) {
  if (p < 2) fail(ErrorKind::InvalidArgument, "need at least two features to form pairs");
  Rng rng(seed);
  const Matrix x = synthgen::equicorrelated_normal(n, p, rho, rng);

  Matrix psi(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p * dn));
  std::vector<Eigen::Index> offsets(p + 1, 0);
  for (std::size_t j = 0; j < p; ++j) {
    const auto design = spline::make_feature_design(x.col(static_cast<Eigen::Index>(j)), dn, j);
    offsets[j + 1] = offsets[j] + design.standardized.cols();
    psi.middleCols(offsets[j], design.standardized.cols()) = design.standardized;
  }
  psi.conservativeResize(Eigen::NoChange, offsets[p]);

  const auto op = compute_f(local_gram(psi), r);
  const Matrix psi_tilde = apply_f(op, psi);

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const std::size_t total_pairs = p * (p - 1) / 2;
  if (total_pairs <= max_pairs) {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) pairs.emplace_back(i, j);
  } else {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    while (pairs.size() < max_pairs) {
      auto i = static_cast<std::size_t>(rng.below(p));
      auto j = static_cast<std::size_t>(rng.below(p));
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (seen.emplace(i, j).second) pairs.emplace_back(i, j);
    }
  }

  QuasiCorrelationSummary out;
  auto block = [&](const Matrix& m, std::size_t j) { return m.middleCols(offsets[j], offsets[j + 1] - offsets[j]); };
  for (const auto& [i, j] : pairs) {
    if (offsets[i + 1] - offsets[i] != offsets[j + 1] - offsets[j]) continue;  // collapsed knots
    out.before.push_back(quasi_correlation(block(psi, i), block(psi, j)));
    out.after.push_back(quasi_correlation(block(psi_tilde, i), block(psi_tilde, j)));
  }
  out.before_q = summarize(out.before);
  out.after_q = summarize(out.after);
  return out;
}

}  // namespace ddac::decorrelate
