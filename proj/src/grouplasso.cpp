#include "ddac/grouplasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::grouplasso {

namespace {

std::vector<Eigen::Index> offsets_for(std::span<const Eigen::Index> widths) {
  std::vector<Eigen::Index> offsets(widths.size());
  Eigen::Index at = 0;
  for (std::size_t k = 0; k < widths.size(); ++k) {
    offsets[k] = at;
    at += widths[k];
  }
  return offsets;
}

// Thin QR of one block with a positive R diagonal.
void factor_block(const Eigen::Ref<const Matrix>& block, Eigen::Ref<Matrix> q_out, Matrix& r_out, std::size_t k) {
  const auto n = block.rows();
  const auto w = block.cols();
  if (n < w) fail(ErrorKind::RankDeficientBlock, fmt::format("block {} has {} rows < {} columns", k + 1, n, w));
  Eigen::HouseholderQR<Matrix> qr(block);
  r_out = qr.matrixQR().topRows(w).triangularView<Eigen::Upper>();
  q_out = qr.householderQ() * Matrix::Identity(n, w);
  const double scale = std::max(1.0, r_out.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index j = 0; j < w; ++j) {
    if (!(std::abs(r_out(j, j)) > 1e-10 * scale))
      fail(ErrorKind::RankDeficientBlock, fmt::format("block {} is rank deficient (|R_jj| = {:.3g})", k + 1, r_out(j, j)));
    if (r_out(j, j) < 0) {
      r_out.row(j) *= -1.0;
      q_out.col(j) *= -1.0;
    }
  }
}

// Cyclic block soft-thresholding. With W <= 3n columns the solver works in
// covariance form (G = Q^T Q and c = Q^T r, so a block update costs O(W d));
// wider designs keep the residual r instead. Slow stretches of the path get
// Anderson extrapolation or a Newton step on the active set; either is kept
// only if it lowers the objective, and convergence is always certified by a
// plain sweep.
class BlockSolver {
 public:
  BlockSolver(const Vector& y, const OrthoBlocks& blocks, Vector theta)
      : y_(y),
        blocks_(blocks),
        n_(static_cast<double>(blocks.rows())),
        covariance_(blocks.total_width() <= 3 * blocks.rows()),
        theta_(std::move(theta)),
        active_(blocks.count()) {
    if (covariance_) {
      gram_ = blocks.q.transpose() * blocks.q;
      qty_ = blocks.q.transpose() * y;
      yy_ = y.squaredNorm();
    }
    refresh();
  }

  const Vector& theta() const { return theta_; }

  BackfitResult solve(double lambda, const SolverOptions& options) {
    BackfitResult out;
    const double threshold = 0.5 * n_ * lambda;
    auto record = [&] {
      if (options.record_objective) out.objective_trace.push_back(current_objective(lambda));
    };
    std::size_t stalled = 0;  // inner sweeps spent at this lambda
    predict(lambda);
    while (out.sweeps < options.max_sweeps) {
      refresh();
      const double change = sweep(threshold, false);
      ++out.sweeps;
      record();
      if (change <= options.tolerance) {
        out.converged = true;
        break;
      }
      history_.assign(1, theta_);
      while (out.sweeps < options.max_sweeps) {
        const double inner = sweep(threshold, true);
        ++out.sweeps;
        ++stalled;
        if (inner <= options.tolerance) {
          record();
          break;
        }
        history_.push_back(theta_);
        if (history_.size() == kAndersonDepth + 1) {
          if (stalled >= kNewtonAfter) {
            newton(lambda);
          } else {
            extrapolate(lambda);
          }
          history_.assign(1, theta_);
        }
        record();
      }
    }
    out.theta = theta_;
    return out;
  }

 private:
  static constexpr std::size_t kAndersonDepth = 5;
  static constexpr std::size_t kNewtonAfter = 10;

  Eigen::VectorBlock<Vector> segment(std::size_t k) { return theta_.segment(blocks_.offsets[k], blocks_.widths[k]); }

  // Q_k^T r for the current iterate.
  Vector correlation(std::size_t k) const {
    if (covariance_) return c_.segment(blocks_.offsets[k], blocks_.widths[k]);
    return blocks_.block(k).transpose() * resid_;
  }

  // Recomputes c or r from scratch; incremental updates drift over long runs.
  void refresh() {
    if (covariance_)
      c_ = qty_ - gram_ * theta_;
    else
      resid_ = residual_at(theta_);
    for (std::size_t k = 0; k < blocks_.count(); ++k) active_[k] = segment(k).squaredNorm() > 0.0;
  }

  Vector residual_at(const Vector& theta) const {
    Vector r = y_;
    for (std::size_t k = 0; k < blocks_.count(); ++k) {
      const auto tk = theta.segment(blocks_.offsets[k], blocks_.widths[k]);
      if (tk.squaredNorm() > 0.0) r.noalias() -= blocks_.block(k) * tk;
    }
    return r;
  }

  double objective_at(const Vector& theta, double lambda) const {
    double penalty = 0.0;
    for (std::size_t k = 0; k < blocks_.count(); ++k)
      penalty += theta.segment(blocks_.offsets[k], blocks_.widths[k]).norm();
    const double rss = covariance_ ? std::max(0.0, yy_ - 2.0 * theta.dot(qty_) + theta.dot(gram_ * theta))
                                   : residual_at(theta).squaredNorm();
    return rss / n_ + lambda * penalty;
  }
  double current_objective(double lambda) const {
    if (covariance_) return objective_at(theta_, lambda);
    double penalty = 0.0;
    for (std::size_t k = 0; k < blocks_.count(); ++k)
      penalty += theta_.segment(blocks_.offsets[k], blocks_.widths[k]).norm();
    return resid_.squaredNorm() / n_ + lambda * penalty;
  }

  void adopt(Vector candidate) {
    theta_ = std::move(candidate);
    refresh();
  }

  // Along a geometric lambda grid consecutive solutions move almost linearly,
  // so the secant step from the last two solutions is a better warm start.
  void predict(double lambda) {
    Vector current = theta_;
    if (previous_.size() == theta_.size() && lambda < previous_lambda_) {
      Vector candidate = 2.0 * theta_ - previous_;
      for (std::size_t k = 0; k < blocks_.count(); ++k) {
        const auto off = blocks_.offsets[k], w = blocks_.widths[k];
        if (theta_.segment(off, w).squaredNorm() == 0.0) candidate.segment(off, w).setZero();
      }
      if (objective_at(candidate, lambda) < current_objective(lambda)) adopt(std::move(candidate));
    }
    previous_ = std::move(current);
    previous_lambda_ = lambda;
  }

  // Anderson extrapolation over the last few active-set iterates.
  void extrapolate(double lambda) {
    const auto depth = static_cast<Eigen::Index>(history_.size() - 1);
    Matrix u(theta_.size(), depth);
    for (Eigen::Index i = 0; i < depth; ++i) u.col(i) = history_[i + 1] - history_[i];
    Matrix g = u.transpose() * u;
    g.diagonal().array() += 1e-10 * g.trace() + 1e-300;
    const Vector z = g.ldlt().solve(Vector::Ones(depth));
    const double total = z.sum();
    if (!z.allFinite() || !(std::abs(total) > 0.0)) return;
    Vector candidate = Vector::Zero(theta_.size());
    for (Eigen::Index i = 0; i < depth; ++i) candidate += (z(i) / total) * history_[i + 1];
    if (objective_at(candidate, lambda) < current_objective(lambda)) adopt(std::move(candidate));
  }

  // Damped Newton steps on the blocks that are currently nonzero, where the
  // objective is smooth. The Hessian factor is reused while the active set
  // stays the same (across lambdas too) and refreshed only when a step fails.
  void newton(double lambda) {
    std::vector<Eigen::Index> cols;
    std::vector<std::size_t> act;
    for (std::size_t k = 0; k < blocks_.count(); ++k) {
      if (segment(k).squaredNorm() == 0.0) continue;
      act.push_back(k);
      for (Eigen::Index j = 0; j < blocks_.widths[k]; ++j) cols.push_back(blocks_.offsets[k] + j);
    }
    if (cols.empty()) return;
    const auto wa = static_cast<Eigen::Index>(cols.size());

    auto factor = [&]() -> bool {
      Matrix h;
      if (covariance_) {
        h = (2.0 / n_) * gram_(cols, cols);
      } else {
        const Matrix qa = blocks_.q(Eigen::all, cols);
        h = (2.0 / n_) * (qa.transpose() * qa);
      }
      Eigen::Index at = 0;
      for (auto k : act) {
        const auto w = blocks_.widths[k];
        const Vector tk = segment(k);
        const double norm = tk.norm();
        const Vector u = tk / norm;
        h.block(at, at, w, w) += (lambda / norm) * (Matrix::Identity(w, w) - u * u.transpose());
        at += w;
      }
      h.diagonal().array() += 1e-12 * h.diagonal().maxCoeff();
      hessian_.compute(h);
      hessian_cols_ = hessian_.info() == Eigen::Success ? cols : std::vector<Eigen::Index>{};
      return !hessian_cols_.empty();
    };

    bool fresh = false;
    if (hessian_cols_ != cols) {
      if (!factor()) return;
      fresh = true;
    }
    for (int iter = 0; iter < 8; ++iter) {
      Vector grad(wa);
      Eigen::Index at = 0;
      for (auto k : act) {
        const auto w = blocks_.widths[k];
        const Vector tk = segment(k);
        const double norm = tk.norm();
        if (norm == 0.0) return;  // a block hit zero; leave it to the sweeps
        grad.segment(at, w) = -(2.0 / n_) * correlation(k) + (lambda / norm) * tk;
        at += w;
      }
      const Vector step = hessian_.solve(-grad);
      const double decrement = -grad.dot(step);
      bool moved = false;
      double t = 1.0;
      if (step.allFinite() && decrement > 0.0) {
        const double f0 = current_objective(lambda);
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
          Vector candidate = theta_;
          for (Eigen::Index i = 0; i < wa; ++i) candidate(cols[static_cast<std::size_t>(i)]) += t * step(i);
          if (objective_at(candidate, lambda) < f0 - 0.25 * t * decrement) {
            adopt(std::move(candidate));
            moved = true;
            break;
          }
        }
      }
      if (!moved) {
        if (fresh || !factor()) return;
        fresh = true;
        continue;
      }
      if (t * step.lpNorm<Eigen::Infinity>() < 1e-10) return;
    }
  }

  double sweep(double threshold, bool active_only) {
    double max_change = 0.0;
    Vector partial, delta;
    for (std::size_t k = 0; k < blocks_.count(); ++k) {
      if (active_only && !active_[k]) continue;
      const auto off = blocks_.offsets[k], w = blocks_.widths[k];
      auto theta_k = segment(k);
      if (covariance_)
        partial = theta_k + c_.segment(off, w);
      else
        partial = theta_k + blocks_.block(k).transpose() * resid_;
      const double norm = partial.norm();
      if (norm <= threshold) {
        partial.setZero();
      } else {
        partial *= 1.0 - threshold / norm;
      }
      delta = partial - theta_k;
      const double change = delta.norm();
      if (change > 0.0) {
        if (covariance_)
          c_.noalias() -= gram_.middleCols(off, w) * delta;
        else
          resid_.noalias() -= blocks_.block(k) * delta;
        theta_k = partial;
      }
      active_[k] = norm > threshold;
      max_change = std::max(max_change, change);
    }
    return max_change;
  }

  const Vector& y_;
  const OrthoBlocks& blocks_;
  double n_;
  bool covariance_;
  Matrix gram_;
  Vector qty_;
  double yy_ = 0.0;
  Vector theta_;
  Vector c_;
  Vector resid_;
  std::vector<bool> active_;
  std::vector<Vector> history_;
  Vector previous_;
  double previous_lambda_ = 0.0;
  Eigen::LLT<Matrix> hessian_;
  std::vector<Eigen::Index> hessian_cols_;
};

void check_shapes(const Vector& y, const OrthoBlocks& blocks) {
  if (y.size() != blocks.rows())
    fail(ErrorKind::ShapeMismatch, fmt::format("response has {} rows, blocks {}", y.size(), blocks.rows()));
}

}  // namespace

OrthoBlocks qr_blocks(const Matrix& psi_tilde, std::span<const Eigen::Index> widths) {
  OrthoBlocks out;
  out.widths.assign(widths.begin(), widths.end());
  out.offsets = offsets_for(widths);
  const Eigen::Index total = std::accumulate(widths.begin(), widths.end(), Eigen::Index{0});
  if (total != psi_tilde.cols())
    fail(ErrorKind::ShapeMismatch, fmt::format("block widths sum to {}, design has {} columns", total, psi_tilde.cols()));
  out.q.resize(psi_tilde.rows(), total);
  out.r.resize(widths.size());
  for (std::size_t k = 0; k < widths.size(); ++k)
    factor_block(psi_tilde.middleCols(out.offsets[k], widths[k]), out.q.middleCols(out.offsets[k], widths[k]), out.r[k], k);
  return out;
}

double objective(const Vector& y, const OrthoBlocks& blocks, const Vector& theta, double lambda) {
  check_shapes(y, blocks);
  double penalty = 0.0;
  for (std::size_t k = 0; k < blocks.count(); ++k)
    penalty += (blocks.block(k) * theta.segment(blocks.offsets[k], blocks.widths[k])).norm();
  return (y - blocks.q * theta).squaredNorm() / static_cast<double>(y.size()) + lambda * penalty;
}

BackfitResult backfit(const Vector& y, const OrthoBlocks& blocks, double lambda, const std::optional<Vector>& warm_start,
                      const SolverOptions& options) {
  check_shapes(y, blocks);
  if (!(lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda must be nonnegative");
  Vector start = warm_start ? *warm_start : Vector::Zero(blocks.total_width());
  if (start.size() != blocks.total_width()) fail(ErrorKind::ShapeMismatch, "warm start has the wrong length");
  BlockSolver solver(y, blocks, std::move(start));
  return solver.solve(lambda, options);
}

double kkt_residual(const Vector& y, const OrthoBlocks& blocks, const Vector& theta, double lambda) {
  check_shapes(y, blocks);
  const Vector resid = blocks.q * theta - y;
  const double scale = 2.0 / static_cast<double>(y.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < blocks.count(); ++k) {
    const Vector grad = scale * (blocks.block(k).transpose() * resid);
    const auto theta_k = theta.segment(blocks.offsets[k], blocks.widths[k]);
    const double norm = theta_k.norm();
    const double violation = norm > 0.0 ? (grad + lambda * theta_k / norm).norm() : std::max(0.0, grad.norm() - lambda);
    worst = std::max(worst, violation);
  }
  return worst;
}

LambdaPath lambda_path(const Vector& y, const OrthoBlocks& blocks, std::size_t count, double ratio) {
  check_shapes(y, blocks);
  if (blocks.count() == 0) fail(ErrorKind::InvalidArgument, "lambda path needs at least one block");
  if (count < 2) fail(ErrorKind::InvalidArgument, "lambda path needs at least two values");
  double lambda_max = 0.0;
  for (std::size_t k = 0; k < blocks.count(); ++k)
    lambda_max = std::max(lambda_max, (blocks.block(k).transpose() * y).norm());
  lambda_max *= 2.0 / static_cast<double>(y.size());

  LambdaPath path;
  path.degenerate = !(lambda_max > 0.0);
  path.values.resize(count);
  const double log_ratio = std::log(ratio);
  for (std::size_t t = 0; t < count; ++t)
    path.values[t] = lambda_max * std::exp(log_ratio * static_cast<double>(t) / static_cast<double>(count - 1));
  path.values.front() = lambda_max;
  return path;
}

CvResult cross_validate(const Vector& y, const OrthoBlocks& blocks, const LambdaPath& path, std::size_t folds,
                        std::uint64_t seed, const SolverOptions& options) {
  check_shapes(y, blocks);
  const auto n = static_cast<std::size_t>(y.size());
  if (folds < 2 || folds > n) fail(ErrorKind::InvalidArgument, fmt::format("need 2 <= folds <= n, got {}", folds));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);

  const auto steps = path.values.size();
  std::vector<double> sse(steps, 0.0);
  std::vector<double> fourth(steps, 0.0);  // sum of squared per-row losses
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    std::vector<bool> held(n, false);
    for (std::size_t i = lo; i < hi; ++i) held[order[i]] = true;
    std::vector<Eigen::Index> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) (held[i] ? test_rows : train_rows).push_back(static_cast<Eigen::Index>(i));

    const Matrix q_train = blocks.q(train_rows, Eigen::all);
    const Matrix q_test = blocks.q(test_rows, Eigen::all);
    const Vector y_train = y(train_rows);
    const Vector y_test = y(test_rows);

    // Re-orthonormalize the training rows; held-out predictions map back
    // through the training R factor.
    auto fold_blocks = qr_blocks(q_train, blocks.widths);
    Matrix predictor(q_test.rows(), q_test.cols());
    for (std::size_t k = 0; k < blocks.count(); ++k) {
      const auto cols = q_test.middleCols(blocks.offsets[k], blocks.widths[k]);
      predictor.middleCols(blocks.offsets[k], blocks.widths[k]) =
          fold_blocks.r[k].triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(cols);
    }

    BlockSolver solver(y_train, fold_blocks, Vector::Zero(blocks.total_width()));
    for (std::size_t t = 0; t < steps; ++t) {
      solver.solve(path.values[t], options);
      const Vector loss = (y_test - predictor * solver.theta()).array().square();
      sse[t] += loss.sum();
      fourth[t] += loss.squaredNorm();
    }
  }

  CvResult out;
  out.cv_errors.resize(steps);
  out.cv_se.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const double rows = static_cast<double>(n);
    out.cv_errors[t] = sse[t] / rows;
    // spread of the n held-out losses, as cv.gglasso computes it
    const double spread = std::max(0.0, fourth[t] / rows - out.cv_errors[t] * out.cv_errors[t]);
    out.cv_se[t] = std::sqrt(spread / (rows - 1.0));
  }
  out.index = 0;
  for (std::size_t t = 1; t < steps; ++t)
    if (out.cv_errors[t] < out.cv_errors[out.index]) out.index = t;
  out.lambda = path.values[out.index];
  const double bound = out.cv_errors[out.index] + out.cv_se[out.index];
  out.index_1se = 0;
  while (out.cv_errors[out.index_1se] > bound) ++out.index_1se;
  out.lambda_1se = path.values[out.index_1se];
  return out;
}

std::string to_string(CvRule rule) { return rule == CvRule::Min ? "min" : "1se"; }

CvRule parse_cv_rule(const std::string& text) {
  if (text == "min") return CvRule::Min;
  if (text == "1se") return CvRule::OneSe;
  fail(ErrorKind::InvalidArgument, fmt::format("unknown cv rule '{}' (min | 1se)", text));
}

GroupLassoFit fit_cv(const Vector& y, const OrthoBlocks& blocks, std::size_t folds, std::uint64_t seed,
                     const SolverOptions& options, std::size_t path_length, CvRule rule) {
  GroupLassoFit fit;
  const auto path = lambda_path(y, blocks, path_length);
  fit.path = path.values;
  if (path.degenerate) {
    fit.theta = Vector::Zero(blocks.total_width());
    fit.lambda = 0.0;
    fit.cv_errors.assign(path.values.size(), y.squaredNorm() / static_cast<double>(y.size()));
    return fit;
  }
  const auto cv = cross_validate(y, blocks, path, folds, seed, options);
  fit.cv_errors = cv.cv_errors;
  const auto chosen = cv.chosen(rule);
  fit.lambda = path.values[chosen];

  BlockSolver solver(y, blocks, Vector::Zero(blocks.total_width()));
  BackfitResult last;
  for (std::size_t t = 0; t <= chosen; ++t) {
    last = solver.solve(path.values[t], options);
    fit.iterations += last.sweeps;
  }
  fit.converged = last.converged;
  fit.theta = std::move(last.theta);
  for (std::size_t k = 0; k < blocks.count(); ++k)
    if (fit.theta.segment(blocks.offsets[k], blocks.widths[k]).squaredNorm() > 0.0) fit.active.push_back(k);
  return fit;
}

Vector back_solve(const std::vector<Matrix>& r_blocks, std::span<const Eigen::Index> offsets, const Vector& theta) {
  if (r_blocks.size() != offsets.size()) fail(ErrorKind::ShapeMismatch, "R blocks and offsets differ in count");
  Vector beta = Vector::Zero(theta.size());
  for (std::size_t k = 0; k < r_blocks.size(); ++k) {
    const auto& r = r_blocks[k];
    const auto w = r.rows();
    if (offsets[k] + w > theta.size()) fail(ErrorKind::ShapeMismatch, "theta shorter than the block layout");
    const auto theta_k = theta.segment(offsets[k], w);
    if (theta_k.squaredNorm() == 0.0) continue;
    for (Eigen::Index j = 0; j < w; ++j)
      if (!(std::abs(r(j, j)) > 1e-10)) fail(ErrorKind::SingularR, fmt::format("block {}", k + 1));
    beta.segment(offsets[k], w) = r.triangularView<Eigen::Upper>().solve(theta_k);
  }
  return beta;
}

}  // namespace ddac::grouplasso
