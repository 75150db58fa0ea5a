#include "ddac/spline.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::spline {

std::size_t compute_dn(std::size_t n) {
  if (n < 2) fail(ErrorKind::InvalidArgument, "compute_dn needs n >= 2");
  const double nd = static_cast<double>(n);
  const auto dn = static_cast<std::size_t>(std::ceil(0.1 * std::cbrt(nd) * std::log(nd)));
  return std::max<std::size_t>(dn, 3);
}

std::vector<double> BSplineBasis::knot_vector() const {
  std::vector<double> knots;
  knots.reserve(interior_knots.size() + 2 * static_cast<std::size_t>(degree + 1));
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), lower);
  knots.insert(knots.end(), interior_knots.begin(), interior_knots.end());
  knots.insert(knots.end(), static_cast<std::size_t>(degree + 1), upper);
  return knots;
}

void BSplineBasis::evaluate(double x, std::span<double> out) const {
  const std::size_t count = dn();
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  x = std::clamp(x, lower, upper);

  // Knot span s with t[s] <= x < t[s+1]; the right boundary belongs to the last span.
  const auto p = static_cast<std::size_t>(degree);
  std::size_t span = count - 1;
  if (x < upper) {
    const auto it = std::upper_bound(interior_knots.begin(), interior_knots.end(), x);
    span = p + static_cast<std::size_t>(it - interior_knots.begin());
  }
  const auto knots = knot_vector();

  // Cox-de Boor triangle for the p + 1 functions that are nonzero on the span.
  double local[8] = {1.0};
  double left[8];
  double right[8];
  for (std::size_t r = 1; r <= p; ++r) {
    left[r] = x - knots[span + 1 - r];
    right[r] = knots[span + r] - x;
    double saved = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      const double temp = local[k] / (right[k + 1] + left[r - k]);
      local[k] = saved + right[k + 1] * temp;
      saved = left[r - k] * temp;
    }
    local[r] = saved;
  }
  for (std::size_t k = 0; k <= p; ++k) out[span - p + k] = local[k];
}

BSplineBasis build_basis(const Eigen::Ref<const Vector>& x, std::size_t dn, std::size_t feature_index) {
  if (dn < 3) fail(ErrorKind::InvalidArgument, fmt::format("basis needs at least 3 functions, got {}", dn));
  std::vector<double> sorted(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());
  const auto distinct = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
  if (distinct < dn)
    fail(ErrorKind::DegenerateColumn,
         fmt::format("feature {} has {} distinct values, basis needs {}", feature_index + 1, distinct, dn));
  sorted.assign(x.data(), x.data() + x.size());
  std::sort(sorted.begin(), sorted.end());

  BSplineBasis basis;
  basis.feature_index = feature_index;
  basis.lower = sorted.front();
  basis.upper = sorted.back();
  if (dn == 3) {
    basis.degree = 2;
    return basis;
  }
  basis.degree = 3;
  const std::size_t n = sorted.size();
  const std::size_t interior = dn - 4;
  for (std::size_t t = 1; t <= interior; ++t) {
    // 1-based order statistic at ceil(t * n / (dn - 3)).
    const auto pos = (t * n + (dn - 3) - 1) / (dn - 3);
    const double knot = sorted[pos - 1];
    if (knot <= basis.lower || knot >= basis.upper) continue;
    if (!basis.interior_knots.empty() && knot <= basis.interior_knots.back()) continue;
    basis.interior_knots.push_back(knot);
  }
  return basis;
}

Matrix evaluate_block(const BSplineBasis& basis, const Eigen::Ref<const Vector>& x) {
  const auto count = static_cast<Eigen::Index>(basis.dn());
  Matrix out(x.size(), count);
  std::vector<double> row(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    basis.evaluate(x(i), row);
    for (Eigen::Index k = 0; k < count; ++k) out(i, k) = row[static_cast<std::size_t>(k)];
  }
  return out;
}

DesignBlock standardize(Matrix raw, std::size_t feature_index) {
  const auto n = raw.rows();
  if (n < 2) fail(ErrorKind::TooFewRows, "standardize needs at least 2 rows");
  DesignBlock block;
  block.feature_index = feature_index;
  block.col_means = raw.colwise().mean().transpose();
  block.standardized = raw.rowwise() - block.col_means.transpose();
  block.col_sds = (block.standardized.colwise().squaredNorm() / static_cast<double>(n - 1)).cwiseSqrt().transpose();
  for (Eigen::Index k = 0; k < block.col_sds.size(); ++k) {
    const double scale = std::max(1.0, raw.col(k).cwiseAbs().maxCoeff());
    if (!(block.col_sds(k) > 1e-12 * scale))
      fail(ErrorKind::ConstantBasisColumn, fmt::format("feature {}, basis column {}", feature_index + 1, k + 1));
    block.standardized.col(k) /= block.col_sds(k);
  }
  block.raw = std::move(raw);
  return block;
}

Matrix FeatureEncoder::encode(const Eigen::Ref<const Vector>& x) const {
  const Matrix full = evaluate_block(basis, x);
  Matrix out = full.rightCols(full.cols() - 1);
  out.rowwise() -= means.transpose();
  out.array().rowwise() /= sds.transpose().array();
  return out;
}

FeatureDesign make_feature_design(const Eigen::Ref<const Vector>& x, std::size_t dn, std::size_t feature_index) {
  auto basis = build_basis(x, dn + 1, feature_index);
  const Matrix full = evaluate_block(basis, x);
  auto block = standardize(full.rightCols(full.cols() - 1), feature_index);
  FeatureDesign design;
  design.encoder = FeatureEncoder{std::move(basis), std::move(block.col_means), std::move(block.col_sds)};
  design.standardized = std::move(block.standardized);
  return design;
}

}  // namespace ddac::spline
