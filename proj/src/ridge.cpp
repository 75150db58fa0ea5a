#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>
#include <fmt/format.h>

#include "ddac/errors.hpp"
#include "ddac/runtime.hpp"

namespace ddac::runtime {

namespace {

// Ridge solutions for many penalties share one SVD.
struct SvdRidge {
  Matrix u, v;
  Vector s;

  explicit SvdRidge(const Matrix& x) {
    Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU();
    v = svd.matrixV();
    s = svd.singularValues();
  }

  Vector solve(const Vector& y, double penalty) const {
    const Vector uty = u.transpose() * y;
    Vector scaled(s.size());
    const double cutoff = s.size() > 0 ? 1e-12 * s(0) : 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double denom = s(i) * s(i) + penalty;
      scaled(i) = (s(i) > cutoff && denom > 0.0) ? s(i) * uty(i) / denom : 0.0;
    }
    return v * scaled;
  }
};

}  // namespace

Vector ridge_solve(const Matrix& x, const Vector& y, double penalty) {
  if (x.rows() != y.size()) fail(ErrorKind::ShapeMismatch, "ridge_solve: rows differ");
  if (!(penalty >= 0.0)) fail(ErrorKind::InvalidArgument, "ridge penalty must be nonnegative");
  if (x.cols() == 0) return Vector(0);
  return SvdRidge(x).solve(y, penalty);
}

std::vector<double> ridge_grid(const Matrix& x, std::size_t count) {
  if (count < 2) fail(ErrorKind::InvalidArgument, "ridge grid needs at least two points");
  const double scale = x.cols() > 0 ? x.colwise().squaredNorm().mean() : 1.0;
  std::vector<double> grid(count);
  const double lo = std::log(1e-4), hi = std::log(1e4);
  for (std::size_t t = 0; t < count; ++t)
    grid[t] = scale * std::exp(lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(count - 1));
  return grid;
}

RidgeFit ridge_refine(const Vector& y, const Matrix& psi, std::size_t folds, std::uint64_t seed,
                      std::optional<std::vector<double>> grid) {
  const auto n = static_cast<std::size_t>(y.size());
  if (psi.rows() != y.size()) fail(ErrorKind::ShapeMismatch, "ridge_refine: rows differ");
  if (static_cast<std::size_t>(psi.cols()) > 4 * n)
    fail(ErrorKind::OverSelected, fmt::format("{} selected columns exceed 4n = {}", psi.cols(), 4 * n));

  RidgeFit fit;
  fit.intercept = y.mean();
  if (psi.cols() == 0) {
    fit.beta = Vector(0);
    return fit;
  }
  if (folds < 2 || folds > n) fail(ErrorKind::InvalidArgument, fmt::format("need 2 <= folds <= n, got {}", folds));
  fit.grid = grid ? std::move(*grid) : ridge_grid(psi);
  std::sort(fit.grid.begin(), fit.grid.end());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  std::vector<double> sse(fit.grid.size(), 0.0);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds, hi = (f + 1) * n / folds;
    std::vector<bool> held(n, false);
    for (std::size_t i = lo; i < hi; ++i) held[order[i]] = true;
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i) (held[i] ? test : train).push_back(static_cast<Eigen::Index>(i));

    const Matrix x_train = psi(train, Eigen::all);
    const Matrix x_test = psi(test, Eigen::all);
    const Vector y_train = y(train);
    const Vector y_test = y(test);
    const double center = y_train.mean();
    const SvdRidge svd(x_train);
    const Vector y_centered = y_train.array() - center;
    for (std::size_t t = 0; t < fit.grid.size(); ++t) {
      const Vector b = svd.solve(y_centered, fit.grid[t]);
      sse[t] += ((y_test.array() - center).matrix() - x_test * b).squaredNorm();
    }
  }
  fit.cv_errors.resize(sse.size());
  std::size_t best = 0;
  for (std::size_t t = 0; t < sse.size(); ++t) {
    fit.cv_errors[t] = sse[t] / static_cast<double>(n);
    if (fit.cv_errors[t] <= fit.cv_errors[best]) best = t;  // grid ascends, so ties keep the larger penalty
  }
  fit.penalty = fit.grid[best];
  const Vector y_centered = y.array() - fit.intercept;
  fit.beta = ridge_solve(psi, y_centered, fit.penalty);
  return fit;
}

}  // namespace ddac::runtime
