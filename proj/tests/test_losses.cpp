#include <catch2/catch_amalgamated.hpp>

#include "ais/loss.hpp"
#include "test_helpers.hpp"

using namespace ais;

TEST_CASE("loss values at analytic points", "[losses]") {
  REQUIRE(loss_value(LossKind::kSquare, 2.5, 2.5) == 0.0);
  REQUIRE(loss_value(LossKind::kLogistic, 0.0, 1.0) == Catch::Approx(std::log(2.0)).epsilon(1e-14));
  REQUIRE(loss_value(LossKind::kLogistic, 0.0, -1.0) ==
          Catch::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("logistic loss is stable at large margins", "[losses]") {
  const double v = loss_value(LossKind::kLogistic, 50.0, 1.0);
  REQUIRE(std::isfinite(v));
  REQUIRE(std::abs(v - std::exp(-50.0)) <= 1e-12);
  // Deep in the wrong-sign tail the loss is ~ |z| and must not overflow.
  const double w = loss_value(LossKind::kLogistic, -800.0, 1.0);
  REQUIRE(std::isfinite(w));
  REQUIRE(w == Catch::Approx(800.0).epsilon(1e-12));
  REQUIRE(std::isfinite(loss_derivative(LossKind::kLogistic, -800.0, 1.0)));
}

TEST_CASE("sparse_gradient vanishes at a perfect square-loss fit", "[losses]") {
  Rng rng(3);
  const LowRankFactors X = test::random_factors(8, 6, 2, rng);
  SparseCoo O;
  O.rows = 8;
  O.cols = 6;
  for (Index i = 0; i < 8; ++i) {
    for (Index j = 0; j < 6; ++j) {
      if (rng.uniform() < 0.5) O.entries.push_back({i, j, X.entry(i, j)});
    }
  }
  O.sort_and_validate();
  FactorCombination Y;
  Y.add(1.0, X);
  const SparseCoo S = sparse_gradient(LossKind::kSquare, Y, O);
  for (const auto& e : S.entries) REQUIRE(std::abs(e.value) <= 1e-12);
}

TEST_CASE("logistic gradient at zero is -o/2", "[losses]") {
  Rng rng(4);
  SparseCoo O = test::random_sparse(6, 6, 0.5, rng);
  for (auto& e : O.entries) e.value = e.value >= 0 ? 1.0 : -1.0;
  FactorCombination zero;  // empty combination evaluates to 0
  const SparseCoo S = sparse_gradient(LossKind::kLogistic, zero, O);
  for (std::size_t k = 0; k < S.entries.size(); ++k) {
    REQUIRE(S.entries[k].value ==
            Catch::Approx(-O.entries[k].value / 2.0).epsilon(1e-14));
  }
}

TEST_CASE("sparse_gradient matches central finite differences", "[losses]") {
  Rng rng(5);
  for (LossKind kind : {LossKind::kSquare, LossKind::kLogistic}) {
    const LowRankFactors A = test::random_factors(10, 8, 3, rng);
    const LowRankFactors B = test::random_factors(10, 8, 2, rng);
    SparseCoo O = test::random_sparse(10, 8, 0.4, rng);
    if (kind == LossKind::kLogistic) {
      for (auto& e : O.entries) e.value = e.value >= 0 ? 1.0 : -1.0;
    }
    FactorCombination Y;
    Y.add(1.3, A);
    Y.add(-0.4, B);
    const SparseCoo S = sparse_gradient(kind, Y, O);

    // Oracle: perturb one observed entry of Y and difference the full data term.
    auto total_loss = [&](Index pi, Index pj, double bump) {
      double value = 0.0;
      for (const auto& e : O.entries) {
        double y = Y.entry(e.i, e.j);
        if (e.i == pi && e.j == pj) y += bump;
        value += loss_value(kind, y, e.value);
      }
      return value;
    };
    const double h = 1e-6;
    for (int probe = 0; probe < 20; ++probe) {
      const auto& e = O.entries[rng.index(O.entries.size())];
      const double fd = (total_loss(e.i, e.j, h) - total_loss(e.i, e.j, -h)) / (2.0 * h);
      double grad = 0.0;
      for (const auto& s : S.entries) {
        if (s.i == e.i && s.j == e.j) grad = s.value;
      }
      REQUIRE(std::abs(fd - grad) <= 1e-5 * std::max(1.0, std::abs(grad)));
    }
  }
}

TEST_CASE("assembled gradient inherits the loss Lipschitz modulus", "[losses]") {
  Rng rng(6);
  for (LossKind kind : {LossKind::kSquare, LossKind::kLogistic}) {
    const double rho = loss_modulus(kind);
    SparseCoo O = test::random_sparse(9, 7, 0.4, rng);
    if (kind == LossKind::kLogistic) {
      for (auto& e : O.entries) e.value = e.value >= 0 ? 1.0 : -1.0;
    }
    for (int pair = 0; pair < 100; ++pair) {
      const LowRankFactors X1 = test::random_factors(9, 7, 2, rng);
      const LowRankFactors X2 = test::random_factors(9, 7, 2, rng);
      FactorCombination Y1, Y2;
      Y1.add(1.0, X1);
      Y2.add(1.0, X2);
      const SparseCoo G1 = sparse_gradient(kind, Y1, O);
      const SparseCoo G2 = sparse_gradient(kind, Y2, O);
      double grad_sq = 0.0;
      for (std::size_t k = 0; k < G1.entries.size(); ++k) {
        const double d = G1.entries[k].value - G2.entries[k].value;
        grad_sq += d * d;
      }
      const double dist = (X1.dense() - X2.dense()).norm();
      REQUIRE(std::sqrt(grad_sq) <= rho * dist + 1e-10);
    }
  }
}

TEST_CASE("losses are convex along midpoints", "[losses]") {
  Rng rng(7);
  for (LossKind kind : {LossKind::kSquare, LossKind::kLogistic}) {
    for (int rep = 0; rep < 200; ++rep) {
      const double o = kind == LossKind::kLogistic ? (rng.uniform() < 0.5 ? 1.0 : -1.0)
                                                   : rng.normal();
      const double x1 = 3.0 * rng.normal();
      const double x2 = 3.0 * rng.normal();
      const double mid = loss_value(kind, 0.5 * (x1 + x2), o);
      const double avg = 0.5 * (loss_value(kind, x1, o) + loss_value(kind, x2, o));
      REQUIRE(mid <= avg + 1e-12);
    }
  }
}

TEST_CASE("objective at zero is the data term of zero", "[losses]") {
  Rng rng(8);
  const SparseCoo O = test::random_sparse(7, 7, 0.5, rng);
  const LowRankFactors zero = LowRankFactors::zero(7, 7);
  double expected = 0.0;
  for (const auto& e : O.entries) expected += loss_value(LossKind::kSquare, 0.0, e.value);
  REQUIRE(objective(LossKind::kSquare, zero, O, 2.0) == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("objective vanishes at an exact unregularized fit", "[losses]") {
  Rng rng(9);
  const LowRankFactors X = test::random_factors(8, 8, 3, rng);
  SparseCoo O;
  O.rows = O.cols = 8;
  for (Index i = 0; i < 8; ++i) {
    for (Index j = 0; j < 8; ++j) {
      if (rng.uniform() < 0.6) O.entries.push_back({i, j, X.entry(i, j)});
    }
  }
  O.sort_and_validate();
  REQUIRE(objective(LossKind::kSquare, X, O, 0.0) <= 1e-20);
}

TEST_CASE("objective matches a dense recomputation", "[losses]") {
  Rng rng(10);
  const LowRankFactors X = test::random_factors(9, 6, 3, rng);
  const SparseCoo O = test::random_sparse(9, 6, 0.5, rng);
  const double lambda = 0.37;
  const DenseMatrix Xd = X.dense();
  double expected = 0.0;
  for (const auto& e : O.entries) {
    expected += loss_value(LossKind::kSquare, Xd(e.i, e.j), e.value);
  }
  Eigen::JacobiSVD<DenseMatrix> svd(Xd);
  expected += lambda * svd.singularValues().sum();
  REQUIRE(objective(LossKind::kSquare, X, O, lambda) == Catch::Approx(expected).margin(1e-10));
}
