#include <doctest.h>

#include <cmath>

#include "ddac/decorrelate.hpp"
#include "ddac/errors.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ddac;
using namespace ddac::decorrelate;

TEST_CASE("local_gram") {
  CHECK(local_gram(Matrix(5, 0), 5) == Matrix::Zero(5, 5));
  Vector u(3);
  u << 0.6, 0.8, 0.0;
  const Matrix g = local_gram(Matrix(u));
  CHECK((g - u * u.transpose()).norm() < 1e-15);
  Eigen::FullPivLU<Matrix> lu(g);
  CHECK(lu.rank() == 1);

  std::mt19937_64 gen(1);
  const Matrix psi = testing::random_matrix(10, 6, gen);
  const Matrix g2 = local_gram(psi);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g2);
  CHECK(es.eigenvalues().minCoeff() >= -1e-12);
}

TEST_CASE("compute_f closed forms") {
  const auto f0 = compute_f(Matrix::Zero(4, 4), 1.0);
  CHECK((f0.f - Matrix::Identity(4, 4)).norm() < 1e-14);
  const auto f3 = compute_f(3.0 * Matrix::Identity(4, 4), 1.0);
  CHECK((f3.f - 0.5 * Matrix::Identity(4, 4)).norm() < 1e-14);
  CHECK(f3.eigen_floor == doctest::Approx(4.0));
  CHECK_THROWS_AS(compute_f(Matrix::Zero(3, 3), 0.0), Error);
}

TEST_CASE("F matches an independent inverse square root and the identity F(G+rI)F = I") {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5 + trial * 3;
    const Matrix psi = testing::random_matrix(n, n / 2 + trial, gen);
    const Matrix g = psi * psi.transpose();
    const double r = 0.5 + trial * 0.1;
    const auto op = compute_f(g, r);
    const Matrix a = g + r * Matrix::Identity(n, n);
    CHECK((op.f * a * op.f - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((op.f - op.f.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix ref = oracle::inverse_sqrt_db(a);
    CHECK((op.f - ref).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("negative numerical eigenvalues are clipped") {
  Matrix g = Matrix::Zero(3, 3);
  g(0, 0) = -1e-10;
  const auto op = compute_f(g, 1.0);
  CHECK(std::abs(op.f(0, 0) - 1.0) < 1e-14);
}

TEST_CASE("apply_f") {
  std::mt19937_64 gen(3);
  const Matrix t = testing::random_matrix(6, 3, gen);
  DecorrelationOperator id{Matrix::Identity(6, 6), 1.0, 1.0};
  CHECK(apply_f(id, t) == t);
  DecorrelationOperator half{0.5 * Matrix::Identity(6, 6), 1.0, 4.0};
  CHECK((apply_f(half, t) - 0.5 * t).norm() < 1e-15);

  const Matrix psi = testing::random_matrix(6, 10, gen);
  const Matrix g = psi * psi.transpose();
  const auto op = compute_f(g, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector v = testing::random_vector(6, gen);
    const Vector chain = apply_f(op, Vector((g + Matrix::Identity(6, 6)) * apply_f(op, v)));
    CHECK((chain - v).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("quasi_correlation") {
  std::mt19937_64 gen(4);
  const Matrix a = testing::random_matrix(7, 2, gen);
  CHECK(quasi_correlation(a, a) == doctest::Approx(1.0));
  Matrix e1 = Matrix::Zero(2, 1), e2 = Matrix::Zero(2, 1), both = Matrix::Ones(2, 1);
  e1(0, 0) = 1;
  e2(1, 0) = 1;
  CHECK(quasi_correlation(e1, e2) == 0.0);
  CHECK(quasi_correlation(e1, both) == doctest::Approx(1.0 / std::sqrt(2.0)));
  const Matrix b = testing::random_matrix(7, 2, gen);
  CHECK(quasi_correlation(a, b) == doctest::Approx(quasi_correlation(b, a)));
  CHECK(std::abs(quasi_correlation(a, b)) <= 1.0);
}

TEST_CASE("summarize quantiles") {
  const auto q = summarize({3, -1, 2, 5, 4});
  CHECK(q.min == -1);
  CHECK(q.max == 5);
  CHECK(q.median == 3);
  CHECK(q.median_abs == 3);
  CHECK(q.q1 <= q.median);
  CHECK(q.q3 >= q.median);
}

TEST_CASE("quasi-correlation study: independence and decorrelation") {
  const auto indep = quasi_correlation_study(200, 100, 0.0, 5, 11, 500);
  CHECK(std::abs(indep.before_q.median) < 0.05);
  CHECK(std::abs(indep.after_q.median) < 0.05);

  const auto strong = quasi_correlation_study(200, 400, 0.6, 5, 12, 500);
  CHECK(strong.after_q.median_abs < 0.05);
  CHECK(strong.before_q.median_abs > strong.after_q.median_abs);
}

TEST_CASE("quasi-correlation study: after-median below 0.05 at rho = 0.6 over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = quasi_correlation_study(200, 400, 0.6, 5, 100 + seed, 300);
    CHECK(s.after_q.median_abs < 0.05);
  }
}
