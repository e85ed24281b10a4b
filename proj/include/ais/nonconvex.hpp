#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/loss.hpp"
#include "ais/solver.hpp"
#include "ais/sparse.hpp"

namespace ais {

/// Spectrum regularizers. Nuclear is the plain sum of singular values.
/// Tnn(r) is the truncated nuclear norm sum_{i >= r} sigma_i (1-based), so
/// r = 1 recovers the full nuclear norm. CappedL1 and Lsp apply the concave
/// scalar penalties min(alpha, theta) and log(1 + alpha / theta).
struct RegularizerKind {
  enum class Type { kNuclear, kTnn, kCappedL1, kLsp };

  Type type = Type::kNuclear;
  int trunc_rank = 1;   // Tnn only
  double theta = 1.0;   // CappedL1 / Lsp only

  static RegularizerKind nuclear() { return {Type::kNuclear, 1, 1.0}; }
  static RegularizerKind tnn(int r) {
    if (r < 1) throw std::invalid_argument("RegularizerKind: tnn rank must be >= 1");
    return {Type::kTnn, r, 1.0};
  }
  static RegularizerKind capped_l1(double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("RegularizerKind: theta must be positive");
    return {Type::kCappedL1, 1, theta};
  }
  static RegularizerKind lsp(double theta) {
    if (!(theta > 0.0)) throw std::invalid_argument("RegularizerKind: theta must be positive");
    return {Type::kLsp, 1, theta};
  }

  double value(const Vector& sigma) const {
    double total = 0.0;
    switch (type) {
      case Type::kNuclear:
        total = sigma.sum();
        break;
      case Type::kTnn:
        for (Index i = trunc_rank - 1; i < sigma.size(); ++i) total += sigma[i];
        break;
      case Type::kCappedL1:
        for (Index i = 0; i < sigma.size(); ++i) total += std::min(sigma[i], theta);
        break;
      case Type::kLsp:
        for (Index i = 0; i < sigma.size(); ++i) total += std::log1p(sigma[i] / theta);
        break;
    }
    return total;
  }
};

/// Supergradient weights w_i = d r-bar(sigma_i) for the concave penalties.
/// sigma must be non-increasing; the output is then non-decreasing, as the
/// weighted proximal step requires. At the capped-l1 kink sigma = theta the
/// lower element 0 is chosen.
inline Vector supergradient_weights(const Vector& sigma, const RegularizerKind& reg) {
  if (reg.type != RegularizerKind::Type::kCappedL1 && reg.type != RegularizerKind::Type::kLsp) {
    throw std::invalid_argument("supergradient_weights: regularizer has no weight form");
  }
  for (Index i = 1; i < sigma.size(); ++i) {
    if (sigma[i] > sigma[i - 1]) {
      throw std::invalid_argument("supergradient_weights: sigma must be non-increasing");
    }
  }
  Vector w(sigma.size());
  for (Index i = 0; i < sigma.size(); ++i) {
    if (reg.type == RegularizerKind::Type::kCappedL1) {
      w[i] = sigma[i] < reg.theta ? 1.0 : 0.0;
    } else {
      w[i] = 1.0 / (reg.theta + sigma[i]);
    }
  }
  return w;
}

/// DC outer-loop state: the current iterate plus the linearization data
/// (orthonormal A, B for the truncated norm; weights otherwise).
struct DcState {
  int outer_iter = 0;
  LowRankFactors current;
  LowRankFactors linearization;  // A (as U) and B (as V), unit spectrum
  Vector weights;
};

namespace detail {

inline int dc_outer_cap() { return 20; }

inline double dc_inner_tol(double base, int outer) {
  return std::max(base * std::pow(0.5, outer), 1e-8);
}

struct DcOuterRecord {
  double objective;
  Index rank;
  double seconds;
};

}  // namespace detail

/// Truncated-nuclear-norm completion via DC programming: linearize the
/// subtracted top part of the spectrum at X_tau (A, B span its leading
/// r - 1 singular directions), then solve the convex remainder with the
/// accelerated loop, whose iterate gains a third low-rank term
/// +mu lambda A B^T. The accepted objective sequence is non-increasing; a
/// candidate that fails to descend ends the outer loop.
inline SolveResult dc_tnn(const SparseCoo& O, LossKind loss, int trunc_rank,
                          const SolverConfig& cfg, const SparseCoo* validation = nullptr) {
  const RegularizerKind reg = RegularizerKind::tnn(trunc_rank);
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();

  DcState state;
  state.current = LowRankFactors::zero(O.rows, O.cols);
  double outer_prev = objective(loss, state.current, O, cfg.lambda,
                                [&](const Vector& s) { return reg.value(s); });

  SolveResult out;
  for (state.outer_iter = 0; state.outer_iter < detail::dc_outer_cap(); ++state.outer_iter) {
    const int tau = state.outer_iter;
    const Index keep = std::min<Index>(trunc_rank - 1, state.current.rank());
    state.linearization.U = state.current.U.leftCols(keep);
    state.linearization.sigma = Vector::Ones(keep);
    state.linearization.V = state.current.V.leftCols(keep);

    SolverConfig inner_cfg = cfg;
    inner_cfg.rel_tol = detail::dc_inner_tol(cfg.rel_tol, tau);
    detail::AccelOptions opt;
    opt.validation = validation;
    if (tau > 0) {
      opt.warm = &state.current;
      opt.continuation = false;
    }
    if (keep > 0) {
      opt.bonus = &state.linearization;
      opt.bonus_scale = cfg.lambda;
    }
    SolveResult inner = detail::accelerated_solve(O, loss, inner_cfg, opt);

    const double outer_new = objective(loss, inner.factors, O, cfg.lambda,
                                       [&](const Vector& s) { return reg.value(s); });
    if (!(outer_new <= outer_prev)) break;  // descent safeguard: keep X_tau

    state.current = std::move(inner.factors);
    TraceRecord record;
    record.iter = tau + 1;
    record.objective = outer_new;
    record.rank = state.current.rank();
    record.lambda_t = cfg.lambda;
    record.restarted = false;
    if (validation) record.valid_metric = detail::rmse_on(state.current, *validation);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.records.push_back(record);

    const double denom = std::max(std::abs(outer_prev), 1e-12);
    const bool settled = std::abs(outer_new - outer_prev) <= cfg.rel_tol * denom;
    outer_prev = outer_new;
    if (settled) break;
  }

  out.factors = std::move(state.current);
  return out;
}

/// Concave spectral penalties (capped-l1, log-sum) via DC programming: each
/// outer step rebuilds supergradient weights from sigma(X_tau) and solves the
/// weighted nuclear-norm problem with the accelerated loop.
inline SolveResult dc_weighted(const SparseCoo& O, LossKind loss, const RegularizerKind& reg,
                               const SolverConfig& cfg, const SparseCoo* validation = nullptr) {
  if (reg.type != RegularizerKind::Type::kCappedL1 && reg.type != RegularizerKind::Type::kLsp) {
    throw std::invalid_argument("dc_weighted: expected a capped-l1 or log-sum regularizer");
  }
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const Index spectrum_len = std::min(O.rows, O.cols);

  DcState state;
  state.current = LowRankFactors::zero(O.rows, O.cols);
  double outer_prev = objective(loss, state.current, O, cfg.lambda,
                                [&](const Vector& s) { return reg.value(s); });

  SolveResult out;
  for (state.outer_iter = 0; state.outer_iter < detail::dc_outer_cap(); ++state.outer_iter) {
    const int tau = state.outer_iter;
    Vector padded = Vector::Zero(spectrum_len);
    padded.head(std::min(state.current.rank(), spectrum_len)) =
        state.current.sigma.head(std::min(state.current.rank(), spectrum_len));
    state.weights = supergradient_weights(padded, reg);

    SolverConfig inner_cfg = cfg;
    inner_cfg.rel_tol = detail::dc_inner_tol(cfg.rel_tol, tau);
    detail::AccelOptions opt;
    opt.validation = validation;
    opt.weights = state.weights;
    if (tau > 0) {
      opt.warm = &state.current;
      opt.continuation = false;
    }
    SolveResult inner = detail::accelerated_solve(O, loss, inner_cfg, opt);

    const double outer_new = objective(loss, inner.factors, O, cfg.lambda,
                                       [&](const Vector& s) { return reg.value(s); });
    if (!(outer_new <= outer_prev)) break;

    state.current = std::move(inner.factors);
    TraceRecord record;
    record.iter = tau + 1;
    record.objective = outer_new;
    record.rank = state.current.rank();
    record.lambda_t = cfg.lambda;
    record.restarted = false;
    if (validation) record.valid_metric = detail::rmse_on(state.current, *validation);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.records.push_back(record);

    const double denom = std::max(std::abs(outer_prev), 1e-12);
    const bool settled = std::abs(outer_new - outer_prev) <= cfg.rel_tol * denom;
    outer_prev = outer_new;
    if (settled) break;
  }

  out.factors = std::move(state.current);
  return out;
}

}  // namespace ais
