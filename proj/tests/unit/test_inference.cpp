#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "ddac/errors.hpp"
#include "ddac/inference.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ddac;
using namespace ddac::inference;

TEST_CASE("chi2 distribution against a series oracle and a library quantile") {
  for (int dof = 1; dof <= 30; ++dof) {
    boost::math::chi_squared_distribution<double> dist(dof);
    for (double x : {0.01, 0.5, 1.0, 3.0, 10.0, 25.0, 60.0}) {
      const double sf = oracle::chi2_sf_series(x, dof);
      CHECK(std::abs(chi2_sf(x, dof) - sf) < 1e-12);
      CHECK(std::abs(chi2_cdf(x, dof) - (1.0 - sf)) < 1e-12);
    }
    for (double prob : {0.01, 0.05, 0.5, 0.9, 0.95, 0.999}) {
      const double q = chi2_quantile(dof, prob);
      CHECK(std::abs(q - boost::math::quantile(dist, prob)) < 1e-8 * std::max(1.0, q));
      CHECK(std::abs(chi2_cdf(q, dof) - prob) < 1e-10);
    }
  }
  CHECK(chi2_quantile(2, 0.95) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-12));
  CHECK(chi2_quantile(1, 0.95) == doctest::Approx(3.84146).epsilon(1e-5));
  CHECK(chi2_quantile(5, 0.95) == doctest::Approx(11.0705).epsilon(1e-5));
  CHECK(chi2_sf(0.0, 3) == 1.0);
  CHECK(chi2_sf(400.0, 3) > 0.0);  // far tail stays representable
  CHECK(chi2_sf(400.0, 3) < 1e-80);
}

TEST_CASE("estimate_sigma") {
  CHECK(estimate_sigma(Vector::Ones(5), Vector::Ones(5)).sigma == 0.0);
  CHECK(estimate_sigma(Vector::Ones(5), Vector::Zero(5)).sigma == doctest::Approx(1.0));
  const auto r = estimate_sigma(Vector::Constant(4, 3.0), Vector::Constant(4, 1.0));
  CHECK(r.eps == Vector::Constant(4, 2.0));
}

TEST_CASE("debias_block") {
  std::mt19937_64 gen(1);
  const std::size_t n = 30;
  const Matrix psi = testing::random_orthonormal(n, 3, gen);
  const Vector beta = testing::random_vector(3, gen);
  const Matrix f = Matrix::Identity(n, n);
  CHECK(debias_block(beta, psi, f, Vector::Zero(n), 90.0, n) == beta);

  const Vector v = testing::random_vector(3, gen);
  const Vector u = debias_block(Vector::Zero(3), psi, f, psi * v, 90.0, n);
  CHECK((u - (90.0 / 30.0) * v).cwiseAbs().maxCoeff() < 1e-12);

  // The global form beta + (p dn / n) Psi~^T (Y~ - Psi~ beta) restricted to block k,
  // with Y~ - Psi~ beta = F eps.
  const Matrix full = testing::random_matrix(n, 12, gen);
  const Matrix g = full * full.transpose() + Matrix::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(g);
  const Matrix fop = es.operatorInverseSqrt();
  const Matrix psi_tilde = fop * full;
  const Vector beta_all = testing::random_vector(12, gen);
  const Vector eps = testing::random_vector(n, gen);
  const Vector global = beta_all + (12.0 / n) * psi_tilde.transpose() * (fop * eps);
  const Vector block = debias_block(beta_all.segment(4, 4), psi_tilde.middleCols(4, 4), fop, eps, 12.0, n);
  CHECK((block - global.segment(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("scaling_matrix") {
  const std::size_t n = 20;
  const Matrix psi = 2.0 * Matrix::Identity(n, 3);
  const Matrix f = Matrix::Identity(n, n);
  // psi^T F F^T psi = 4 I
  const Matrix m = scaling_matrix(psi, f, 1.5, 60.0, n);
  CHECK((m - (20.0 / (60.0 * 1.5 * 2.0)) * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 gen(2);
  const Matrix full = testing::random_matrix(n, 8, gen);
  const Matrix fop = (full * full.transpose() + Matrix::Identity(n, n)).llt().solve(Matrix::Identity(n, n));
  const Matrix p = testing::random_matrix(n, 4, gen);
  const double sigma = 0.7, pdn = 40.0;
  const Matrix mh = scaling_matrix(p, fop, sigma, pdn, n);
  const Matrix inner = p.transpose() * fop * fop.transpose() * p;
  const double c = n / (pdn * sigma);
  CHECK((mh * inner * mh - c * c * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-8);
  const Matrix mh2 = scaling_matrix(p, fop, 2 * sigma, pdn, n);
  CHECK((mh2 - 0.5 * mh).cwiseAbs().maxCoeff() < 1e-12);

  try {
    scaling_matrix(p, fop, 0.0, pdn, n);
    FAIL("expected SigmaZero");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SigmaZero);
  }
  Matrix rank_def = p;
  rank_def.col(3) = rank_def.col(0);
  try {
    scaling_matrix(rank_def, fop, sigma, pdn, n);
    FAIL("expected NearSingularInner");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NearSingularInner);
  }
}

TEST_CASE("evaluate_statistic") {
  const auto zero = evaluate_statistic(0.0, 4, 0.05);
  CHECK(zero.decision == Decision::Accept);
  CHECK(zero.p_value == 1.0);
  const auto big = evaluate_statistic(30.0, 4, 0.05);
  CHECK(big.decision == Decision::Reject);
  CHECK(big.p_value == doctest::Approx(oracle::chi2_sf_series(30.0, 4)).epsilon(1e-10));
  // boundary: exactly the critical value is not a rejection
  const double crit = chi2_quantile(3, 0.95);
  const auto edge = evaluate_statistic(crit * (1 - 1e-9), 3, 0.05);
  CHECK(edge.decision == Decision::Accept);
  CHECK(to_string(Decision::Reject) == "reject");
}
