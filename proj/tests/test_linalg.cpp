#include <catch2/catch_amalgamated.hpp>

#include "ais/linalg.hpp"
#include "ais/rng.hpp"
#include "ais/splr.hpp"
#include "test_helpers.hpp"

using namespace ais;
using test::random_matrix;
using test::random_orthonormal;

TEST_CASE("qr_orthonormalize handles identity", "[linalg]") {
  const DenseMatrix I3 = DenseMatrix::Identity(3, 3);
  const OrthonormalBasis basis = qr_orthonormalize(I3);
  REQUIRE(basis.cols() == 3);
  // Same span up to column signs.
  const DenseMatrix proj = basis.Q * basis.Q.transpose();
  REQUIRE((proj - I3).norm() <= 1e-12);
}

TEST_CASE("qr_orthonormalize collapses dependent columns", "[linalg]") {
  Rng rng(11);
  const Vector v = test::random_vector(7, rng);
  DenseMatrix M(7, 2);
  M.col(0) = v;
  M.col(1) = 2.0 * v;
  const OrthonormalBasis basis = qr_orthonormalize(M);
  REQUIRE(basis.cols() == 1);
  const Vector unit = v / v.norm();
  REQUIRE(std::min((basis.Q.col(0) - unit).norm(), (basis.Q.col(0) + unit).norm()) <= 1e-12);
}

TEST_CASE("qr_orthonormalize spans the input", "[linalg]") {
  Rng rng(12);
  const DenseMatrix M = random_matrix(10, 3, rng);
  const OrthonormalBasis basis = qr_orthonormalize(M);
  REQUIRE(basis.cols() == 3);
  const DenseMatrix gram = basis.Q.transpose() * basis.Q - DenseMatrix::Identity(3, 3);
  REQUIRE(gram.norm() <= 1e-10);
  REQUIRE((basis.Q * (basis.Q.transpose() * M) - M).norm() <= 1e-10);
}

TEST_CASE("qr_orthonormalize of zero input is empty", "[linalg]") {
  const OrthonormalBasis basis = qr_orthonormalize(DenseMatrix::Zero(5, 2));
  REQUIRE(basis.cols() == 0);
}

TEST_CASE("power_method keeps an invariant subspace", "[linalg]") {
  const DenseMatrix I5 = DenseMatrix::Identity(5, 5);
  DenseMatrix R = DenseMatrix::Zero(5, 2);
  R(0, 0) = 1.0;
  R(1, 1) = 1.0;
  const DenseOperator op(I5);
  for (int iters : {0, 1, 4}) {
    const OrthonormalBasis basis = power_method(op, R, iters);
    REQUIRE(basis.cols() == 2);
    const DenseMatrix proj = basis.Q * basis.Q.transpose();
    REQUIRE((proj * R - R).norm() <= 1e-12);
  }
}

TEST_CASE("power_method recovers the dominant subspace", "[linalg]") {
  Rng rng(21);
  const DenseMatrix U = random_orthonormal(9, 2, rng);
  const DenseMatrix V = random_orthonormal(8, 2, rng);
  Vector s(2);
  s << 3.0, 1.0;
  const DenseMatrix Z = U * s.asDiagonal() * V.transpose();
  const DenseOperator op(Z);
  const DenseMatrix R = random_matrix(8, 2, rng);
  const OrthonormalBasis basis = power_method(op, R, 10);
  const DenseMatrix target = U * U.transpose();
  REQUIRE((basis.Q * basis.Q.transpose() - target).norm() <= 1e-8);
}

TEST_CASE("power_method satisfies the geometric subspace bound", "[linalg]") {
  Rng rng(22);
  const DenseMatrix U = random_orthonormal(9, 2, rng);
  const DenseMatrix V = random_orthonormal(8, 2, rng);
  Vector s(2);
  s << 3.0, 1.0;  // eta = sigma_{k+1} / sigma_k = 1/3 for k = 1
  const DenseMatrix Z = U * s.asDiagonal() * V.transpose();
  const DenseOperator op(Z);
  const DenseMatrix R = random_matrix(8, 1, rng);
  const DenseMatrix target = U.col(0) * U.col(0).transpose();

  const OrthonormalBasis q0 = power_method(op, R, 0);
  const double alpha = (q0.Q * q0.Q.transpose() - target).norm();
  const OrthonormalBasis q5 = power_method(op, R, 5);
  const double err = (q5.Q * q5.Q.transpose() - target).norm();
  REQUIRE(err <= alpha * std::pow(1.0 / 3.0, 5) + 1e-10);
}

TEST_CASE("svt_dense on a diagonal matrix", "[linalg]") {
  DenseMatrix Z = DenseMatrix::Zero(2, 2);
  Z(0, 0) = 3.0;
  Z(1, 1) = 1.0;
  const LowRankFactors X = svt_dense(Z, 2.0);
  REQUIRE(X.rank() == 1);
  REQUIRE(X.sigma[0] == Catch::Approx(1.0).margin(1e-12));
  test::check_factor_invariants(X);
}

TEST_CASE("svt_dense with lambda zero is the thin SVD", "[linalg]") {
  Rng rng(31);
  const DenseMatrix Z = random_matrix(6, 4, rng);
  const LowRankFactors X = svt_dense(Z, 0.0);
  REQUIRE((X.dense() - Z).norm() <= 1e-10);
  test::check_factor_invariants(X);
}

TEST_CASE("svt_dense objective matches a brute-force spectral search", "[linalg]") {
  Rng rng(32);
  const DenseMatrix Z = random_matrix(6, 5, rng);
  const double lambda = 0.5;
  const LowRankFactors X = svt_dense(Z, lambda);
  const double achieved =
      0.5 * (X.dense() - Z).squaredNorm() + lambda * X.sigma.sum();

  // Independent oracle: the minimizer shares Z's singular vectors, so optimize
  // each spectral coefficient by two-level grid search.
  Eigen::JacobiSVD<DenseMatrix> svd(Z);
  const Vector sigma = svd.singularValues();
  double oracle = 0.0;
  for (Index i = 0; i < sigma.size(); ++i) {
    auto value = [&](double t) { return 0.5 * (t - sigma[i]) * (t - sigma[i]) + lambda * t; };
    double best_t = 0.0, best = value(0.0);
    const double hi = sigma[i] + lambda;
    for (int g = 0; g <= 20000; ++g) {
      const double t = hi * g / 20000.0;
      if (value(t) < best) {
        best = value(t);
        best_t = t;
      }
    }
    const double step = hi / 20000.0;
    for (int g = -2000; g <= 2000; ++g) {
      const double t = std::max(best_t + step * g / 1000.0, 0.0);
      best = std::min(best, value(t));
    }
    oracle += best;
  }
  REQUIRE(achieved == Catch::Approx(oracle).margin(1e-8));
}

TEST_CASE("approx_svt on a diagonal sparse operator", "[linalg]") {
  SplrOperator Z;
  Z.sparse.rows = 3;
  Z.sparse.cols = 3;
  Z.sparse.entries = {{0, 0, 5.0}, {1, 1, 3.0}, {2, 2, 1.0}};
  DenseMatrix R = DenseMatrix::Zero(3, 2);
  R(0, 0) = 1.0;
  R(1, 1) = 1.0;
  const LowRankFactors X = approx_svt(Z, R, 2.0, 5);
  REQUIRE(X.rank() == 2);
  REQUIRE(X.sigma[0] == Catch::Approx(3.0).margin(1e-10));
  REQUIRE(X.sigma[1] == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("approx_svt thresholds everything when lambda dominates", "[linalg]") {
  Rng rng(41);
  const DenseMatrix Zd = random_matrix(8, 6, rng);
  Eigen::JacobiSVD<DenseMatrix> svd(Zd);
  const DenseOperator op(Zd);
  const DenseMatrix R = random_matrix(6, 3, rng);
  const LowRankFactors X = approx_svt(op, R, svd.singularValues()[0] + 0.1, 4);
  REQUIRE(X.rank() == 0);
}

TEST_CASE("approx_svt matches dense SVT on sparse-plus-low-rank operators", "[linalg]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    SplrOperator Z;
    Z.sparse = test::random_sparse(40, 30, 0.2, rng);
    Z.terms.push_back({0.8, test::random_factors(40, 30, 4, rng)});
    Z.terms.push_back({-0.5, test::random_factors(40, 30, 3, rng)});
    const DenseMatrix Zd = Z.dense();
    Eigen::JacobiSVD<DenseMatrix> svd(Zd);
    const double lambda = svd.singularValues()[15];  // median of 30
    const DenseMatrix R = random_matrix(30, 30, rng);
    const LowRankFactors approx = approx_svt(Z, R, lambda, 30);
    const LowRankFactors exact = svt_dense(Zd, lambda);
    REQUIRE((approx.dense() - exact.dense()).norm() <=
            1e-8 * std::max(exact.dense().norm(), 1.0));
    test::check_factor_invariants(approx);
  }
}

TEST_CASE("approx_svt equals dense SVT whenever the probe spans the kept directions",
          "[linalg]") {
  Rng rng(55);
  for (int rep = 0; rep < 5; ++rep) {
    const DenseMatrix Zd = random_matrix(20, 15, rng);
    Eigen::JacobiSVD<DenseMatrix> svd(Zd, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector sigma = svd.singularValues();
    const double lambda = sigma[4];  // keeps exactly the strict top 4
    Index kept = 0;
    while (kept < sigma.size() && sigma[kept] > lambda) ++kept;
    const DenseMatrix R = svd.matrixV().leftCols(kept + 2);
    const DenseOperator op(Zd);
    const LowRankFactors approx = approx_svt(op, R, lambda, 0);
    const LowRankFactors exact = svt_dense(Zd, lambda);
    REQUIRE((approx.dense() - exact.dense()).norm() <= 1e-8);
  }
}

TEST_CASE("weighted_svt_dense with uniform weights equals svt_dense", "[linalg]") {
  Rng rng(61);
  const DenseMatrix Z = random_matrix(7, 5, rng);
  const LowRankFactors a = weighted_svt_dense(Z, 0.7, Vector::Ones(5));
  const LowRankFactors b = svt_dense(Z, 0.7);
  REQUIRE((a.dense() - b.dense()).norm() <= 1e-12);
}

TEST_CASE("weighted_svt_dense leaves zero-weight values untouched", "[linalg]") {
  DenseMatrix Z = DenseMatrix::Zero(2, 2);
  Z(0, 0) = 4.0;
  Z(1, 1) = 2.0;
  Vector w(2);
  w << 0.0, 1.0;
  const LowRankFactors X = weighted_svt_dense(Z, 1.0, w);
  REQUIRE(X.rank() == 2);
  REQUIRE(X.sigma[0] == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(X.sigma[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("weighted_svt_dense rejects non-monotone weights", "[linalg]") {
  Rng rng(62);
  const DenseMatrix Z = random_matrix(4, 4, rng);
  Vector w(4);
  w << 0.5, 0.2, 0.8, 1.0;
  REQUIRE_THROWS_AS(weighted_svt_dense(Z, 1.0, w), std::invalid_argument);
}

TEST_CASE("weighted_svt_dense matches shrinkage and is locally optimal", "[linalg]") {
  Rng rng(63);
  const DenseMatrix Z = random_matrix(5, 5, rng);
  const double lambda = 0.4;
  Vector w(5);
  w << 0.1, 0.3, 0.6, 0.8, 1.4;
  const LowRankFactors X = weighted_svt_dense(Z, lambda, w);

  // Elementwise shrinkage formula on Z's spectrum.
  Eigen::JacobiSVD<DenseMatrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues();
  std::vector<double> expected;
  for (Index i = 0; i < sigma.size(); ++i) {
    const double shrunk = sigma[i] - lambda * w[i];
    if (shrunk > 0.0) expected.push_back(shrunk);
  }
  std::sort(expected.begin(), expected.end(), std::greater<double>());
  REQUIRE(static_cast<std::size_t>(X.rank()) == expected.size());
  for (Index i = 0; i < X.rank(); ++i) {
    REQUIRE(X.sigma[i] == Catch::Approx(expected[static_cast<std::size_t>(i)]).margin(1e-10));
  }

  auto objective_at = [&](const DenseMatrix& M) {
    Eigen::JacobiSVD<DenseMatrix> s(M);
    double pen = 0.0;
    for (Index i = 0; i < s.singularValues().size(); ++i) {
      pen += w[i] * s.singularValues()[i];
    }
    return 0.5 * (M - Z).squaredNorm() + lambda * pen;
  };
  const DenseMatrix Xd = X.dense();
  const double base = objective_at(Xd);
  for (int probe = 0; probe < 200; ++probe) {
    const DenseMatrix P = Xd + 1e-3 * random_matrix(5, 5, rng);
    REQUIRE(objective_at(P) >= base - 1e-9);
  }
}

TEST_CASE("svt_dual_certificate vanishes at the exact proximal point", "[linalg]") {
  Rng rng(71);
  const DenseMatrix Z = random_matrix(8, 6, rng);
  const double lambda = 0.8;
  const LowRankFactors X = svt_dense(Z, lambda);
  REQUIRE(svt_dual_certificate(Z, lambda, X) <= 1e-8);
}

TEST_CASE("svt_dual_certificate flags a suboptimal point", "[linalg]") {
  Rng rng(72);
  const DenseMatrix Z = 3.0 * random_matrix(6, 6, rng);
  const double lambda = 0.5;
  const LowRankFactors zero = LowRankFactors::zero(6, 6);
  REQUIRE(svt_dual_certificate(Z, lambda, zero) > 1e-3);
}

TEST_CASE("svt_dual_certificate improves with more power iterations", "[linalg]") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    const DenseMatrix Z = random_matrix(15, 12, rng);
    Eigen::JacobiSVD<DenseMatrix> svd(Z);
    const double lambda = svd.singularValues()[5];
    const DenseMatrix R = random_matrix(12, 6, rng);
    const DenseOperator op(Z);
    const LowRankFactors x1 = approx_svt(op, R, lambda, 1);
    const LowRankFactors x10 = approx_svt(op, R, lambda, 10);
    const double g1 = svt_dual_certificate(Z, lambda, x1);
    const double g10 = svt_dual_certificate(Z, lambda, x10);
    REQUIRE(g10 <= g1 + 1e-12);
  }
}

TEST_CASE("svt_dense is nonexpansive", "[linalg]") {
  Rng rng(81);
  for (int pair = 0; pair < 200; ++pair) {
    const DenseMatrix A = random_matrix(8, 6, rng);
    const DenseMatrix B = A + 0.5 * random_matrix(8, 6, rng);
    const double lambda = 0.2 + rng.uniform();
    const double lhs = (svt_dense(A, lambda).dense() - svt_dense(B, lambda).dense()).norm();
    REQUIRE(lhs <= (A - B).norm() + 1e-10);
  }
}

TEST_CASE("power_method clamps an over-wide seed", "[linalg]") {
  Rng rng(91);
  const DenseMatrix Z = random_matrix(6, 4, rng);
  const DenseOperator op(Z);
  const DenseMatrix R = random_matrix(4, 9, rng);
  const OrthonormalBasis basis = power_method(op, R, 2);
  REQUIRE(basis.cols() <= 4);
}
