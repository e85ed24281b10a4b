#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/loss.hpp"
#include "ais/rng.hpp"
#include "ais/sparse.hpp"
#include "ais/splr.hpp"

namespace ais {

enum class SvdMode { kApproximate, kExactDense };

struct SolverConfig {
  double lambda = 1.0;       // target regularization weight, > 0
  double lambda_hat = 0.0;   // continuation start; <= 0 requests the
                             // sigma_1(P_Omega(O)) estimate (20 power iterations)
  double nu = 0.7;           // continuation decay, in (0, 1)
  int power_iters = 3;       // J
  bool power_iters_grow = false;  // J = t schedule (used by convergence checks)
  int max_iter = 500;
  double rel_tol = 1e-4;     // stop on relative objective change
  SvdMode svd_mode = SvdMode::kApproximate;
  std::uint64_t seed = 0;
  Index rank_cap = 0;        // 0 means min(m, n)
  std::int64_t densify_cap = 4'000'000;  // refuse dense SVT beyond m * n entries

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("SolverConfig: lambda must be positive");
    if (!(nu > 0.0 && nu < 1.0)) throw std::invalid_argument("SolverConfig: nu must be in (0,1)");
    if (power_iters < 0) throw std::invalid_argument("SolverConfig: power_iters must be >= 0");
    if (max_iter < 1) throw std::invalid_argument("SolverConfig: max_iter must be >= 1");
    if (rel_tol < 0.0) throw std::invalid_argument("SolverConfig: rel_tol must be >= 0");
    if (rank_cap < 0) throw std::invalid_argument("SolverConfig: rank_cap must be >= 0");
    if (lambda_hat > 0.0 && lambda_hat <= lambda) {
      throw std::invalid_argument("SolverConfig: lambda_hat must exceed lambda");
    }
  }
};

struct TraceRecord {
  int iter = 0;
  double seconds = 0.0;
  double objective = 0.0;
  Index rank = 0;
  double lambda_t = 0.0;
  bool restarted = false;
  double valid_metric = std::numeric_limits<double>::quiet_NaN();
};

struct SolverTrace {
  std::vector<TraceRecord> records;
};

struct SolveResult {
  LowRankFactors factors;
  SolverTrace trace;
};

/// Loop state carried across iterations; embedded in diagnostics on failure.
struct IterateState {
  LowRankFactors current;
  LowRankFactors previous;
  int restart_count = 1;  // c; theta = (c - 1) / (c + 2)
  int iter = 0;
  double lambda_t = 0.0;
};

class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// Largest singular value of the sparse matrix, estimated with `iters`
/// rounds of power iteration from a seeded random start.
inline double sigma1_estimate(const SparseCoo& O, int iters, std::uint64_t seed) {
  if (O.nnz() == 0) return 0.0;
  Rng rng(seed);
  Vector v(O.cols);
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector u = O.apply(v);
    const double un = u.norm();
    if (un == 0.0) return 0.0;
    u /= un;
    v = O.apply_transpose(u);
    sigma = v.norm();
    if (sigma == 0.0) return 0.0;
    v /= sigma;
  }
  return sigma;
}

namespace detail {

/// Warm-start basis QR([V_t, V_{t-1}]) where V_{t-1} is first deflated
/// against V_t and columns below 1e-10 are removed.
inline DenseMatrix warm_start_basis(const LowRankFactors& X, const LowRankFactors& X_prev) {
  const Index n = X.cols();
  DenseMatrix deflated;
  if (X_prev.rank() > 0) {
    if (X.rank() > 0) {
      deflated = X_prev.V - X.V * (X.V.transpose() * X_prev.V);
    } else {
      deflated = X_prev.V;
    }
    Index kept = 0;
    for (Index c = 0; c < deflated.cols(); ++c) {
      if (deflated.col(c).norm() >= 1e-10) {
        if (kept != c) deflated.col(kept) = deflated.col(c);
        ++kept;
      }
    }
    deflated.conservativeResize(n, kept);
  } else {
    deflated = DenseMatrix::Zero(n, 0);
  }
  DenseMatrix stacked(n, X.rank() + deflated.cols());
  if (X.rank() > 0) stacked.leftCols(X.rank()) = X.V;
  if (deflated.cols() > 0) stacked.rightCols(deflated.cols()) = deflated;
  if (stacked.cols() > n) stacked = stacked.leftCols(n).eval();  // degenerate width: clamp
  if (stacked.cols() == 0) return stacked;
  return qr_orthonormalize(stacked).Q;
}

inline void append_random_columns(DenseMatrix& R, Index count, Rng& rng) {
  const Index n = R.rows();
  const Index old = R.cols();
  R.conservativeResize(n, old + count);
  for (Index c = old; c < old + count; ++c) {
    for (Index i = 0; i < n; ++i) R(i, c) = rng.normal();
  }
}

inline void truncate_rank(LowRankFactors& X, Index cap) {
  if (X.rank() <= cap) return;
  X.U = DenseMatrix(X.U.leftCols(cap));
  X.sigma = Vector(X.sigma.head(cap));
  X.V = DenseMatrix(X.V.leftCols(cap));
}

/// Approximate SVT with the rank-growth policy: whenever every probed
/// singular value survives the threshold, the probe cannot certify
/// k >= k-breve, so five random columns are appended and the step recomputed.
/// Stops growing once the threshold bites, the probed span stops expanding,
/// or the cap is reached.
template <class Op>
LowRankFactors approx_svt_grow(const Op& Z, DenseMatrix R, double threshold, int iters,
                               const Vector* weights, Rng& rng, Index rank_cap) {
  const Index limit = std::min({Z.rows(), Z.cols(), rank_cap});
  if (R.cols() == 0) append_random_columns(R, 1, rng);
  Index previous_candidates = -1;
  ApproxSvtResult result;
  for (;;) {
    result = approx_svt_probe(Z, R, threshold, iters, weights);
    if (result.candidates == 0) break;
    if (result.factors.rank() < result.candidates) break;
    if (result.candidates >= limit) break;
    if (result.candidates == previous_candidates) break;
    previous_candidates = result.candidates;
    append_random_columns(R, 5, rng);
  }
  truncate_rank(result.factors, rank_cap);
  return result.factors;
}

struct AccelOptions {
  // Extra low-rank gradient correction: smooth part gains
  // -bonus_scale * tr(A^T X B), so the iterate gains +mu * bonus_scale * A B^T.
  const LowRankFactors* bonus = nullptr;
  double bonus_scale = 0.0;
  // Non-decreasing spectrum weights; empty selects the plain nuclear norm.
  Vector weights;
  // Warm start (X_0 = X_1 = *warm); nullptr starts from zero.
  const LowRankFactors* warm = nullptr;
  bool continuation = true;
  const SparseCoo* validation = nullptr;
};

inline double rmse_on(const LowRankFactors& X, const SparseCoo& set) {
  if (set.nnz() == 0) return std::numeric_limits<double>::quiet_NaN();
  double sq = 0.0;
  for (const auto& e : set.entries) {
    const double d = X.entry(e.i, e.j) - e.value;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(set.nnz()));
}

inline double trace_against(const LowRankFactors& X, const LowRankFactors& AB) {
  if (X.rank() == 0 || AB.rank() == 0) return 0.0;
  // tr(A^T X B) with X = U S V^T: tr((A^T U) S (V^T B)).
  const DenseMatrix AtU = AB.U.transpose() * X.U;
  const DenseMatrix VtB = X.V.transpose() * AB.V;
  double value = 0.0;
  for (Index k = 0; k < X.rank(); ++k) value += X.sigma[k] * AtU.col(k).dot(VtB.row(k).transpose());
  return value;
}

/// Objective used inside the accelerated loop: data term plus the (possibly
/// weighted) spectrum penalty at the target lambda, minus any bonus trace.
inline double inner_objective(LossKind loss, const LowRankFactors& X, const SparseCoo& O,
                              double lambda, const AccelOptions& opt) {
  double data = 0.0;
  for (const auto& e : O.entries) data += loss_value(loss, X.entry(e.i, e.j), e.value);
  double penalty = 0.0;
  if (opt.weights.size() == 0) {
    penalty = X.sigma.sum();
  } else {
    for (Index k = 0; k < X.rank(); ++k) penalty += opt.weights[k] * X.sigma[k];
  }
  double value = data + lambda * penalty;
  if (opt.bonus && opt.bonus_scale != 0.0) {
    value -= opt.bonus_scale * trace_against(X, *opt.bonus);
  }
  return value;
}

/// Accelerated proximal loop with continuation, adaptive restart, warm-started
/// power probes, and optional weighted thresholds / low-rank gradient
/// corrections. One function backs the public solvers and the DC inner steps.
inline SolveResult accelerated_solve(const SparseCoo& O, LossKind loss, const SolverConfig& cfg,
                                     const AccelOptions& opt) {
  cfg.validate();
  if (O.nnz() == 0) throw std::invalid_argument("accelerated_solve: no observed entries");
  const Index m = O.rows;
  const Index n = O.cols;
  if (cfg.svd_mode == SvdMode::kExactDense &&
      static_cast<std::int64_t>(m) * static_cast<std::int64_t>(n) > cfg.densify_cap) {
    throw SolverError("dense SVT refused: " + std::to_string(m) + "x" + std::to_string(n) +
                      " exceeds the densification cap of " + std::to_string(cfg.densify_cap) +
                      " entries");
  }
  if (opt.weights.size() > 0 && opt.weights.size() < std::min(m, n)) {
    throw std::invalid_argument("accelerated_solve: weight list shorter than min(m, n)");
  }

  const double mu = 1.0 / loss_modulus(loss);
  const double lambda = cfg.lambda;
  double lambda_hat = cfg.lambda_hat;
  if (lambda_hat <= 0.0) {
    lambda_hat = sigma1_estimate(O, 20, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  }
  if (!opt.continuation || lambda_hat <= lambda) lambda_hat = lambda;

  const Index rank_cap = cfg.rank_cap > 0 ? std::min(cfg.rank_cap, std::min(m, n)) : std::min(m, n);
  const Vector* weights = opt.weights.size() > 0 ? &opt.weights : nullptr;

  Rng rng(cfg.seed);
  IterateState state;
  state.current = opt.warm ? *opt.warm : LowRankFactors::zero(m, n);
  state.previous = state.current;

  SolveResult out;
  double objective_prev = inner_objective(loss, state.current, O, lambda, opt);
  const auto started = std::chrono::steady_clock::now();

  for (state.iter = 1; state.iter <= cfg.max_iter; ++state.iter) {
    const int t = state.iter;
    state.lambda_t = (lambda_hat - lambda) * std::pow(cfg.nu, t - 1) + lambda;
    const double theta =
        (state.restart_count - 1) / static_cast<double>(state.restart_count + 2);

    FactorCombination momentum;
    momentum.add(1.0 + theta, state.current);
    momentum.add(-theta, state.previous);
    const SparseCoo gradient = sparse_gradient(loss, momentum, O);

    SplrOperator Z = build_accel_iterate(gradient, state.current, state.previous, theta, mu);
    if (opt.bonus && opt.bonus_scale != 0.0 && opt.bonus->rank() > 0) {
      Z.terms.push_back({mu * opt.bonus_scale, *opt.bonus});
      Z.check_terms();
    }

    const double threshold = mu * state.lambda_t;
    const int iters = cfg.power_iters_grow ? t : cfg.power_iters;
    LowRankFactors next;
    if (cfg.svd_mode == SvdMode::kExactDense) {
      next = weights ? weighted_svt_dense(Z.dense(), threshold, *weights)
                     : svt_dense(Z.dense(), threshold);
      detail::truncate_rank(next, rank_cap);
    } else {
      DenseMatrix R = warm_start_basis(state.current, state.previous);
      next = approx_svt_grow(Z, std::move(R), threshold, iters, weights, rng, rank_cap);
    }

    const double objective_new = inner_objective(loss, next, O, lambda, opt);
    if (!std::isfinite(objective_new)) {
      throw SolverError("solver diverged at iteration " + std::to_string(t) +
                        ": objective is not finite (lambda_t=" + std::to_string(state.lambda_t) +
                        ", rank=" + std::to_string(next.rank()) +
                        ", previous objective=" + std::to_string(objective_prev) + ")");
    }
    const bool restarted = objective_new > objective_prev;
    state.restart_count = restarted ? 1 : state.restart_count + 1;

    TraceRecord record;
    record.iter = t;
    record.objective = objective_new;
    record.rank = next.rank();
    record.lambda_t = state.lambda_t;
    record.restarted = restarted;
    if (opt.validation) record.valid_metric = rmse_on(next, *opt.validation);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.records.push_back(record);

    const double denom = std::max(std::abs(objective_prev), 1e-12);
    const bool small_change = std::abs(objective_new - objective_prev) <= cfg.rel_tol * denom;
    const bool continuation_settled = (state.lambda_t - lambda) <= cfg.rel_tol * lambda;

    state.previous = std::move(state.current);
    state.current = std::move(next);
    objective_prev = objective_new;

    if (small_change && continuation_settled) break;
  }

  out.factors = std::move(state.current);
  return out;
}

}  // namespace detail

/// Accelerated inexact Soft-Impute: momentum iterates kept in sparse plus
/// low-rank form, proximal steps by warm-started power-method SVT,
/// continuation from lambda_hat down to lambda, adaptive restart on objective
/// increase. Stops on relative objective change below rel_tol (once
/// continuation has settled) or at max_iter.
inline SolveResult ais_impute(const SparseCoo& O, LossKind loss, const SolverConfig& cfg,
                              const SparseCoo* validation = nullptr) {
  detail::AccelOptions opt;
  opt.validation = validation;
  return detail::accelerated_solve(O, loss, cfg, opt);
}

/// Same loop with the proximal step computed by dense SVT on the densified
/// iterate. Refuses instances whose dense form exceeds cfg.densify_cap.
inline SolveResult apg_exact(const SparseCoo& O, LossKind loss, const SolverConfig& cfg,
                             const SparseCoo* validation = nullptr) {
  SolverConfig dense_cfg = cfg;
  dense_cfg.svd_mode = SvdMode::kExactDense;
  detail::AccelOptions opt;
  opt.validation = validation;
  return detail::accelerated_solve(O, loss, dense_cfg, opt);
}

/// Unaccelerated baseline: Z_t = P_Omega(O) + P_Omega-perp(X_t), then SVT at
/// lambda. Square loss only; no continuation, no momentum.
inline SolveResult soft_impute(const SparseCoo& O, const SolverConfig& cfg,
                               const SparseCoo* validation = nullptr) {
  cfg.validate();
  if (O.nnz() == 0) throw std::invalid_argument("soft_impute: no observed entries");
  const Index m = O.rows;
  const Index n = O.cols;
  if (cfg.svd_mode == SvdMode::kExactDense &&
      static_cast<std::int64_t>(m) * static_cast<std::int64_t>(n) > cfg.densify_cap) {
    throw SolverError("dense SVT refused: instance exceeds the densification cap");
  }
  const Index rank_cap = cfg.rank_cap > 0 ? std::min(cfg.rank_cap, std::min(m, n)) : std::min(m, n);

  Rng rng(cfg.seed);
  LowRankFactors X = LowRankFactors::zero(m, n);
  const LowRankFactors none = LowRankFactors::zero(m, n);
  SolveResult out;
  double objective_prev = objective(LossKind::kSquare, X, O, cfg.lambda);
  const auto started = std::chrono::steady_clock::now();

  for (int t = 1; t <= cfg.max_iter; ++t) {
    FactorCombination current;
    current.add(1.0, X);
    const SparseCoo gradient = sparse_gradient(LossKind::kSquare, current, O);
    const SplrOperator Z = build_accel_iterate(gradient, X, none, 0.0, 1.0);

    LowRankFactors next;
    if (cfg.svd_mode == SvdMode::kExactDense) {
      next = svt_dense(Z.dense(), cfg.lambda);
      detail::truncate_rank(next, rank_cap);
    } else {
      DenseMatrix R = X.rank() > 0 ? DenseMatrix(X.V) : DenseMatrix::Zero(n, 0);
      next = detail::approx_svt_grow(Z, std::move(R), cfg.lambda, cfg.power_iters, nullptr, rng,
                                     rank_cap);
    }

    const double objective_new = objective(LossKind::kSquare, next, O, cfg.lambda);
    if (!std::isfinite(objective_new)) {
      throw SolverError("soft_impute diverged at iteration " + std::to_string(t));
    }

    TraceRecord record;
    record.iter = t;
    record.objective = objective_new;
    record.rank = next.rank();
    record.lambda_t = cfg.lambda;
    record.restarted = false;
    if (validation) record.valid_metric = detail::rmse_on(next, *validation);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.records.push_back(record);

    const double denom = std::max(std::abs(objective_prev), 1e-12);
    const bool small_change = std::abs(objective_new - objective_prev) <= cfg.rel_tol * denom;
    X = std::move(next);
    objective_prev = objective_new;
    if (small_change) break;
  }

  out.factors = std::move(X);
  return out;
}

}  // namespace ais
