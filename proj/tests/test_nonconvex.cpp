#include <catch2/catch_amalgamated.hpp>

#include "ais/nonconvex.hpp"
#include "test_helpers.hpp"

using namespace ais;

namespace {

SparseCoo small_instance(Index m, Index n, Index rank, double noise, Rng& rng) {
  const LowRankFactors truth = test::random_factors(m, n, rank, rng);
  SparseCoo O;
  O.rows = m;
  O.cols = n;
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (rng.uniform() < 0.5) {
        O.entries.push_back({i, j, truth.entry(i, j) + noise * rng.normal()});
      }
    }
  }
  O.sort_and_validate();
  return O;
}

}  // namespace

TEST_CASE("supergradient weights at analytic points", "[nonconvex]") {
  const double theta = 0.7;
  Vector sigma(2);
  sigma << theta, 0.0;
  const Vector w = supergradient_weights(sigma, RegularizerKind::lsp(theta));
  REQUIRE(w[0] == Catch::Approx(1.0 / (2.0 * theta)).epsilon(1e-14));
  REQUIRE(w[1] == Catch::Approx(1.0 / theta).epsilon(1e-14));
}

TEST_CASE("capped-l1 weights vanish above the cap", "[nonconvex]") {
  Vector sigma(3);
  sigma << 5.0, 3.0, 1.5;
  const Vector w = supergradient_weights(sigma, RegularizerKind::capped_l1(1.0));
  for (Index i = 0; i < 3; ++i) REQUIRE(w[i] == 0.0);
  // At the kink the lower supergradient element is used.
  Vector at_kink(1);
  at_kink << 1.0;
  REQUIRE(supergradient_weights(at_kink, RegularizerKind::capped_l1(1.0))[0] == 0.0);
}

TEST_CASE("weights match finite differences of the scalar penalty", "[nonconvex]") {
  Rng rng(1);
  const RegularizerKind lsp = RegularizerKind::lsp(0.4);
  const RegularizerKind capped = RegularizerKind::capped_l1(0.9);
  auto scalar_value = [](const RegularizerKind& reg, double a) {
    Vector one(1);
    one << a;
    return reg.value(one);
  };
  const double h = 1e-6;
  for (int rep = 0; rep < 50; ++rep) {
    double a = 3.0 * rng.uniform() + 2.0 * h;
    Vector sigma(1);
    sigma << a;
    const double fd_lsp =
        (scalar_value(lsp, a + h) - scalar_value(lsp, a - h)) / (2.0 * h);
    REQUIRE(std::abs(supergradient_weights(sigma, lsp)[0] - fd_lsp) <= 1e-6);
    if (std::abs(a - capped.theta) > 1e-3) {  // keep clear of the kink
      const double fd_capped =
          (scalar_value(capped, a + h) - scalar_value(capped, a - h)) / (2.0 * h);
      REQUIRE(std::abs(supergradient_weights(sigma, capped)[0] - fd_capped) <= 1e-6);
    }
  }
}

TEST_CASE("weights are always non-decreasing", "[nonconvex]") {
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    const Index n = 1 + static_cast<Index>(rng.index(10));
    Vector sigma(n);
    for (Index i = 0; i < n; ++i) sigma[i] = 4.0 * rng.uniform();
    std::sort(sigma.data(), sigma.data() + n, std::greater<double>());
    for (const auto reg : {RegularizerKind::capped_l1(0.8), RegularizerKind::lsp(0.3)}) {
      const Vector w = supergradient_weights(sigma, reg);
      for (Index i = 1; i < n; ++i) REQUIRE(w[i] >= w[i - 1]);
    }
  }
}

TEST_CASE("supergradient_weights validates its inputs", "[nonconvex]") {
  Vector increasing(2);
  increasing << 1.0, 2.0;
  REQUIRE_THROWS_AS(supergradient_weights(increasing, RegularizerKind::lsp(0.5)),
                    std::invalid_argument);
  Vector ok(2);
  ok << 2.0, 1.0;
  REQUIRE_THROWS_AS(supergradient_weights(ok, RegularizerKind::nuclear()), std::invalid_argument);
}

TEST_CASE("tnn with r = 1 is the nuclear norm and matches ais_impute", "[nonconvex]") {
  Rng rng(3);
  const SparseCoo O = small_instance(25, 20, 3, 0.02, rng);
  SolverConfig cfg;
  cfg.lambda = 0.05 * sigma1_estimate(O, 30, 1);
  cfg.max_iter = 600;
  cfg.rel_tol = 1e-9;

  Vector sigma(4);
  sigma << 3.0, 2.0, 1.0, 0.5;
  REQUIRE(RegularizerKind::tnn(1).value(sigma) == Catch::Approx(sigma.sum()));

  const double f_tnn = objective(LossKind::kSquare, dc_tnn(O, LossKind::kSquare, 1, cfg).factors,
                                 O, cfg.lambda);
  const double f_nuc =
      objective(LossKind::kSquare, ais_impute(O, LossKind::kSquare, cfg).factors, O, cfg.lambda);
  REQUIRE(std::abs(f_tnn - f_nuc) <= 1e-4 * f_nuc);
}

TEST_CASE("dc_tnn outer objective never increases", "[nonconvex]") {
  Rng rng(4);
  const SparseCoo O = small_instance(30, 30, 4, 0.05, rng);
  SolverConfig cfg;
  cfg.lambda = 0.08 * sigma1_estimate(O, 30, 2);
  cfg.max_iter = 400;
  cfg.rel_tol = 1e-6;
  const SolveResult result = dc_tnn(O, LossKind::kSquare, 5, cfg);
  const auto& records = result.trace.records;
  REQUIRE(!records.empty());
  for (std::size_t k = 1; k < records.size(); ++k) {
    REQUIRE(records[k].objective <= records[k - 1].objective + 1e-10);
  }
}

TEST_CASE("dc_weighted outer objective never increases", "[nonconvex]") {
  Rng rng(5);
  const SparseCoo O = small_instance(30, 25, 3, 0.05, rng);
  SolverConfig cfg;
  cfg.lambda = 0.2 * sigma1_estimate(O, 30, 3);
  cfg.max_iter = 400;
  cfg.rel_tol = 1e-6;
  for (const auto reg : {RegularizerKind::lsp(1.0), RegularizerKind::capped_l1(2.0)}) {
    const SolveResult result = dc_weighted(O, LossKind::kSquare, reg, cfg);
    const auto& records = result.trace.records;
    REQUIRE(!records.empty());
    for (std::size_t k = 1; k < records.size(); ++k) {
      REQUIRE(records[k].objective <= records[k - 1].objective + 1e-10);
    }
  }
}

TEST_CASE("uniform weights reduce the weighted solver to ais_impute", "[nonconvex]") {
  Rng rng(6);
  const SparseCoo O = small_instance(22, 18, 2, 0.02, rng);
  SolverConfig cfg;
  cfg.lambda = 0.1 * sigma1_estimate(O, 30, 4);
  cfg.max_iter = 600;
  cfg.rel_tol = 1e-9;
  // Capped-l1 with a cap far above every singular value keeps every weight at
  // one, so the inner problems are plain nuclear-norm problems.
  const RegularizerKind reg = RegularizerKind::capped_l1(1e6);
  const LowRankFactors weighted = dc_weighted(O, LossKind::kSquare, reg, cfg).factors;
  const LowRankFactors plain = ais_impute(O, LossKind::kSquare, cfg).factors;
  const double fw = objective(LossKind::kSquare, weighted, O, cfg.lambda);
  const double fp = objective(LossKind::kSquare, plain, O, cfg.lambda);
  REQUIRE(std::abs(fw - fp) <= 1e-6 * fp);
}

TEST_CASE("dc_weighted rejects regularizers without a weight form", "[nonconvex]") {
  Rng rng(7);
  const SparseCoo O = small_instance(10, 10, 2, 0.01, rng);
  SolverConfig cfg;
  cfg.lambda = 1.0;
  REQUIRE_THROWS_AS(dc_weighted(O, LossKind::kSquare, RegularizerKind::nuclear(), cfg),
                    std::invalid_argument);
}
