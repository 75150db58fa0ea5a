#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ddac/core.hpp"

namespace ddac::spline {

/// Per-feature basis dimension ceil(0.1 * n^(1/3) * ln n), never below 3.
std::size_t compute_dn(std::size_t n);

/// Clamped B-spline basis on [lower, upper] with knots at empirical quantiles.
struct BSplineBasis {
  std::size_t feature_index = 0;
  int degree = 3;
  std::vector<double> interior_knots;
  double lower = 0.0;
  double upper = 1.0;

  /// Number of basis functions: interior knots + degree + 1.
  std::size_t dn() const { return interior_knots.size() + static_cast<std::size_t>(degree) + 1; }
  /// Full clamped knot vector (boundary knots repeated degree + 1 times).
  std::vector<double> knot_vector() const;
  /// Writes the dn() basis values at x into out; x is clamped to [lower, upper].
  void evaluate(double x, std::span<double> out) const;
};

/// Builds a basis with `dn` functions. For dn >= 4 this is cubic with dn - 4
/// interior knots at the order statistics ceil(t * n / (dn - 3)), t = 1..dn-4;
/// dn = 3 gives a quadratic with no interior knots. Tied or boundary-coincident
/// quantiles are collapsed, so the result may carry fewer functions.
BSplineBasis build_basis(const Eigen::Ref<const Vector>& x, std::size_t dn, std::size_t feature_index = 0);

/// Row i holds the basis functions evaluated at x_i (points clamped to the boundary).
Matrix evaluate_block(const BSplineBasis& basis, const Eigen::Ref<const Vector>& x);

struct DesignBlock {
  std::size_t feature_index = 0;
  Matrix raw;
  Matrix standardized;
  Vector col_means;
  Vector col_sds;
};

/// Centers each column and scales it to unit sample sd (divisor n - 1).
DesignBlock standardize(Matrix raw, std::size_t feature_index = 0);

/// Maps covariate values to the standardized columns used by the fitting
/// pipeline. The underlying cubic basis has width() + 1 functions; the first is
/// dropped so that the centered columns stay linearly independent.
struct FeatureEncoder {
  BSplineBasis basis;
  Vector means;
  Vector sds;

  std::size_t width() const { return static_cast<std::size_t>(means.size()); }
  Matrix encode(const Eigen::Ref<const Vector>& x) const;
};

struct FeatureDesign {
  FeatureEncoder encoder;
  Matrix standardized;  // n x width
};

/// Standardized, intercept-free design block of `dn` columns for one covariate.
FeatureDesign make_feature_design(const Eigen::Ref<const Vector>& x, std::size_t dn, std::size_t feature_index);

}  // namespace ddac::spline
