#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/loss.hpp"
#include "ais/solver.hpp"

namespace ais {

inline constexpr int kMaxOrder = 8;

struct TensorEntry {
  std::array<std::int32_t, kMaxOrder> idx{};
  double value = 0.0;
};

/// Observed entries of a partially known D-order tensor (2 <= D <= 8),
/// 0-based indices, sorted lexicographically, no duplicates. Mode
/// matricizations can have huge column counts, so all column arithmetic is
/// 64-bit; the product of dimensions is overflow-checked at validation.
struct SparseTensorCoo {
  std::vector<Index> dims;
  std::vector<TensorEntry> entries;

  int order() const { return static_cast<int>(dims.size()); }
  Index nnz() const { return static_cast<Index>(entries.size()); }

  double frob_norm() const {
    double sq = 0.0;
    for (const auto& e : entries) sq += e.value * e.value;
    return std::sqrt(sq);
  }

  std::int64_t total_entries() const {
    std::int64_t total = 1;
    for (Index d : dims) total *= static_cast<std::int64_t>(d);
    return total;
  }

  void sort_and_validate() {
    const int D = order();
    if (D < 2 || D > kMaxOrder) {
      throw std::invalid_argument("SparseTensorCoo: order must be between 2 and 8");
    }
    std::int64_t total = 1;
    for (Index d : dims) {
      if (d < 1) throw std::invalid_argument("SparseTensorCoo: dimensions must be positive");
      if (total > (std::int64_t{1} << 62) / d) {
        throw std::invalid_argument("SparseTensorCoo: dimension product overflows 64-bit index");
      }
      total *= static_cast<std::int64_t>(d);
    }
    std::sort(entries.begin(), entries.end(), [D](const TensorEntry& a, const TensorEntry& b) {
      for (int d = 0; d < D; ++d) {
        if (a.idx[d] != b.idx[d]) return a.idx[d] < b.idx[d];
      }
      return false;
    });
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      for (int d = 0; d < D; ++d) {
        if (e.idx[d] < 0 || e.idx[d] >= dims[d]) {
          throw std::invalid_argument("SparseTensorCoo: index out of range at entry " +
                                      std::to_string(k));
        }
      }
      if (!std::isfinite(e.value)) {
        throw std::invalid_argument("SparseTensorCoo: non-finite value at entry " +
                                    std::to_string(k));
      }
      if (k > 0) {
        bool same = true;
        for (int d = 0; d < D; ++d) {
          if (entries[k - 1].idx[d] != e.idx[d]) same = false;
        }
        if (same) throw std::invalid_argument("SparseTensorCoo: duplicate entry");
      }
    }
  }
};

/// 0-based (row, column) of a tensor index tuple inside the mode-d
/// matricization: row = idx[d], col = sum_{l != d} idx[l] * prod_{m < l, m != d} I_m.
inline std::pair<Index, std::int64_t> mode_index_map(const std::int32_t* idx, int order, int mode,
                                                     const std::vector<Index>& dims) {
  if (mode < 0 || mode >= order) throw std::invalid_argument("mode_index_map: bad mode");
  std::int64_t col = 0;
  std::int64_t stride = 1;
  for (int l = 0; l < order; ++l) {
    if (l == mode) continue;
    if (idx[l] < 0 || idx[l] >= dims[l]) {
      throw std::invalid_argument("mode_index_map: index out of range");
    }
    col += static_cast<std::int64_t>(idx[l]) * stride;
    stride *= static_cast<std::int64_t>(dims[l]);
  }
  return {static_cast<Index>(idx[mode]), col};
}

/// Additive per-mode decomposition X = sum_d X^d, each X^d stored through its
/// mode-d matricization factors (U^d: I_d x k_d, V^d: prod_{j != d} I_j x k_d).
/// k_d = 0 marks an inactive mode.
struct LatentDecomposition {
  std::vector<Index> dims;
  std::vector<LowRankFactors> modes;

  int order() const { return static_cast<int>(dims.size()); }

  static LatentDecomposition zero(const std::vector<Index>& dims) {
    LatentDecomposition x;
    x.dims = dims;
    std::int64_t total = 1;
    for (Index d : dims) total *= static_cast<std::int64_t>(d);
    for (std::size_t d = 0; d < dims.size(); ++d) {
      const std::int64_t other = total / static_cast<std::int64_t>(dims[d]);
      x.modes.push_back(LowRankFactors::zero(dims[d], static_cast<Index>(other)));
    }
    return x;
  }

  std::vector<Index> mode_ranks() const {
    std::vector<Index> r;
    for (const auto& f : modes) r.push_back(f.rank());
    return r;
  }
};

/// Value of the recovered tensor sum_d X^d at one index tuple.
inline double eval_at(const LatentDecomposition& X, const std::int32_t* idx) {
  double value = 0.0;
  for (int d = 0; d < X.order(); ++d) {
    if (X.modes[d].rank() == 0) continue;
    const auto [row, col] = mode_index_map(idx, X.order(), d, X.dims);
    value += X.modes[d].entry(row, static_cast<Index>(col));
  }
  return value;
}

/// Mode-d view of a "sparse tensor plus low-rank matricized terms" operator.
/// The sparse part streams entries through mode_index_map; the unfolding is
/// never materialized.
struct ModeUnfoldOperator {
  int mode = 0;
  const SparseTensorCoo* pattern = nullptr;
  const std::vector<double>* values = nullptr;  // aligned with pattern entries; null uses them
  double sparse_scale = 1.0;
  struct TermRef {
    double scale = 0.0;
    const LowRankFactors* factors = nullptr;
  };
  std::vector<TermRef> terms;

  Index rows() const { return pattern->dims[mode]; }
  Index cols() const {
    std::int64_t other = 1;
    for (int d = 0; d < pattern->order(); ++d) {
      if (d != mode) other *= static_cast<std::int64_t>(pattern->dims[d]);
    }
    return static_cast<Index>(other);
  }

  Vector apply(const Eigen::Ref<const Vector>& v) const {
    if (v.size() != cols()) throw std::invalid_argument("ModeUnfoldOperator::apply: size mismatch");
    Vector y = Vector::Zero(rows());
    const int D = pattern->order();
    for (std::size_t k = 0; k < pattern->entries.size(); ++k) {
      const auto& e = pattern->entries[k];
      const double val = values ? (*values)[k] : e.value;
      const auto [row, col] = mode_index_map(e.idx.data(), D, mode, pattern->dims);
      y[row] += sparse_scale * val * v[static_cast<Index>(col)];
    }
    for (const auto& t : terms) {
      if (!t.factors || t.factors->rank() == 0) continue;
      Vector w = t.factors->V.transpose() * v;
      w.array() *= t.scale * t.factors->sigma.array();
      y.noalias() += t.factors->U * w;
    }
    return y;
  }

  Vector apply_transpose(const Eigen::Ref<const Vector>& u) const {
    if (u.size() != rows()) {
      throw std::invalid_argument("ModeUnfoldOperator::apply_transpose: size mismatch");
    }
    Vector y = Vector::Zero(cols());
    const int D = pattern->order();
    for (std::size_t k = 0; k < pattern->entries.size(); ++k) {
      const auto& e = pattern->entries[k];
      const double val = values ? (*values)[k] : e.value;
      const auto [row, col] = mode_index_map(e.idx.data(), D, mode, pattern->dims);
      y[static_cast<Index>(col)] += sparse_scale * val * u[row];
    }
    for (const auto& t : terms) {
      if (!t.factors || t.factors->rank() == 0) continue;
      Vector w = t.factors->U.transpose() * u;
      w.array() *= t.scale * t.factors->sigma.array();
      y.noalias() += t.factors->V * w;
    }
    return y;
  }

  DenseMatrix dense() const {
    DenseMatrix Z = DenseMatrix::Zero(rows(), cols());
    const int D = pattern->order();
    for (std::size_t k = 0; k < pattern->entries.size(); ++k) {
      const auto& e = pattern->entries[k];
      const double val = values ? (*values)[k] : e.value;
      const auto [row, col] = mode_index_map(e.idx.data(), D, mode, pattern->dims);
      Z(row, static_cast<Index>(col)) += sparse_scale * val;
    }
    for (const auto& t : terms) {
      if (t.factors && t.factors->rank() > 0) Z += t.scale * t.factors->dense();
    }
    return Z;
  }
};

inline Vector unfold_apply(const ModeUnfoldOperator& Z, const Eigen::Ref<const Vector>& v) {
  return Z.apply(v);
}

inline Vector unfold_apply_transpose(const ModeUnfoldOperator& Z,
                                     const Eigen::Ref<const Vector>& u) {
  return Z.apply_transpose(u);
}

struct TensorSolveResult {
  LatentDecomposition decomposition;
  SolverTrace trace;
};

namespace detail {

inline double tensor_objective(LossKind loss, const LatentDecomposition& X,
                               const SparseTensorCoo& O, const std::vector<double>& lambdas) {
  double value = 0.0;
  for (const auto& e : O.entries) value += loss_value(loss, eval_at(X, e.idx.data()), e.value);
  for (int d = 0; d < X.order(); ++d) value += lambdas[static_cast<std::size_t>(d)] * X.modes[d].sigma.sum();
  return value;
}

inline double tensor_valid_rmse(const LatentDecomposition& X, const SparseTensorCoo& set) {
  if (set.nnz() == 0) return std::numeric_limits<double>::quiet_NaN();
  double sq = 0.0;
  for (const auto& e : set.entries) {
    const double d = eval_at(X, e.idx.data()) - e.value;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(set.nnz()));
}

}  // namespace detail

/// Scaled-latent-nuclear-norm tensor completion: one accelerated loop drives
/// D per-mode proximal steps, each on a "sparse gradient tensor plus two
/// low-rank matricized terms" operator (the proximal step separates over
/// modes). Step size 1 / (sqrt(D) rho); shared restart counter;
/// per-mode continuation from lambda_hat down to each lambda_d.
inline TensorSolveResult tensor_ais_impute(const SparseTensorCoo& O, LossKind loss,
                                           const std::vector<double>& lambdas,
                                           const SolverConfig& cfg,
                                           const SparseTensorCoo* validation = nullptr) {
  cfg.validate();
  const int D = O.order();
  if (static_cast<int>(lambdas.size()) != D) {
    throw std::invalid_argument("tensor_ais_impute: one lambda per mode required");
  }
  double lambda_max = 0.0;
  for (double l : lambdas) {
    if (!(l > 0.0)) throw std::invalid_argument("tensor_ais_impute: lambdas must be positive");
    lambda_max = std::max(lambda_max, l);
  }
  if (O.nnz() == 0) throw std::invalid_argument("tensor_ais_impute: no observed entries");

  const double mu = 1.0 / (std::sqrt(static_cast<double>(D)) * loss_modulus(loss));

  // lambda_hat must dominate every mode; the default pads the largest
  // per-mode spectral estimate of the observed tensor by 1.5x.
  double lambda_hat = cfg.lambda_hat;
  if (lambda_hat <= 0.0) {
    double top = lambda_max;
    for (int d = 0; d < D; ++d) {
      ModeUnfoldOperator unfold;
      unfold.mode = d;
      unfold.pattern = &O;
      Rng rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(d)));
      Vector v(unfold.cols());
      for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
      double sigma = 0.0;
      for (int it = 0; it < 10; ++it) {
        Vector u = unfold.apply(v);
        const double un = u.norm();
        if (un == 0.0) break;
        u /= un;
        v = unfold.apply_transpose(u);
        sigma = v.norm();
        if (sigma == 0.0) break;
        v /= sigma;
      }
      top = std::max(top, sigma);
    }
    lambda_hat = 1.5 * top;
  }
  if (lambda_hat <= lambda_max) {
    throw std::invalid_argument("tensor_ais_impute: lambda_hat must exceed every lambda_d");
  }

  Rng rng(cfg.seed);
  LatentDecomposition current = LatentDecomposition::zero(O.dims);
  LatentDecomposition previous = current;
  int restart_count = 1;
  TensorSolveResult out;
  double objective_prev = detail::tensor_objective(loss, current, O, lambdas);
  std::vector<double> gradient_values(static_cast<std::size_t>(O.nnz()));
  const auto started = std::chrono::steady_clock::now();

  for (int t = 1; t <= cfg.max_iter; ++t) {
    const double theta = (restart_count - 1) / static_cast<double>(restart_count + 2);

    // Shared sparse gradient at the momentum point Y_hat = sum_d Y^d.
    for (std::size_t k = 0; k < gradient_values.size(); ++k) {
      const auto& e = O.entries[k];
      double y = 0.0;
      for (int d = 0; d < D; ++d) {
        const auto [row, col] = mode_index_map(e.idx.data(), D, d, O.dims);
        y += (1.0 + theta) * current.modes[d].entry(row, static_cast<Index>(col));
        if (theta != 0.0) y -= theta * previous.modes[d].entry(row, static_cast<Index>(col));
      }
      gradient_values[k] = loss_derivative(loss, y, e.value);
    }

    LatentDecomposition next = LatentDecomposition::zero(O.dims);
    double lambda_t_max = 0.0;
    bool continuation_settled = true;
    for (int d = 0; d < D; ++d) {
      const double lambda_d = lambdas[static_cast<std::size_t>(d)];
      const double lambda_t = (lambda_hat - lambda_d) * std::pow(cfg.nu, t - 1) + lambda_d;
      lambda_t_max = std::max(lambda_t_max, lambda_t);
      if (lambda_t - lambda_d > cfg.rel_tol * lambda_d) continuation_settled = false;

      ModeUnfoldOperator Z;
      Z.mode = d;
      Z.pattern = &O;
      Z.values = &gradient_values;
      Z.sparse_scale = -mu;
      if (current.modes[d].rank() > 0) Z.terms.push_back({1.0 + theta, &current.modes[d]});
      if (theta != 0.0 && previous.modes[d].rank() > 0) {
        Z.terms.push_back({-theta, &previous.modes[d]});
      }

      const double threshold = mu * lambda_t;
      const int iters = cfg.power_iters_grow ? t : cfg.power_iters;
      const Index rank_cap =
          cfg.rank_cap > 0 ? std::min(cfg.rank_cap, std::min(Z.rows(), Z.cols()))
                           : std::min(Z.rows(), Z.cols());
      if (cfg.svd_mode == SvdMode::kExactDense) {
        if (O.total_entries() > cfg.densify_cap) {
          throw SolverError("dense tensor SVT refused: exceeds the densification cap");
        }
        next.modes[d] = svt_dense(Z.dense(), threshold);
        detail::truncate_rank(next.modes[d], rank_cap);
      } else {
        DenseMatrix R = detail::warm_start_basis(current.modes[d], previous.modes[d]);
        next.modes[d] =
            detail::approx_svt_grow(Z, std::move(R), threshold, iters, nullptr, rng, rank_cap);
      }
    }

    const double objective_new = detail::tensor_objective(loss, next, O, lambdas);
    if (!std::isfinite(objective_new)) {
      throw SolverError("tensor solver diverged at iteration " + std::to_string(t));
    }
    const bool restarted = objective_new > objective_prev;
    restart_count = restarted ? 1 : restart_count + 1;

    TraceRecord record;
    record.iter = t;
    record.objective = objective_new;
    Index total_rank = 0;
    for (const auto& f : next.modes) total_rank += f.rank();
    record.rank = total_rank;
    record.lambda_t = lambda_t_max;
    record.restarted = restarted;
    if (validation) record.valid_metric = detail::tensor_valid_rmse(next, *validation);
    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    out.trace.records.push_back(record);

    const double denom = std::max(std::abs(objective_prev), 1e-12);
    const bool small_change = std::abs(objective_new - objective_prev) <= cfg.rel_tol * denom;

    previous = std::move(current);
    current = std::move(next);
    objective_prev = objective_new;

    if (small_change && continuation_settled) break;
  }

  out.decomposition = std::move(current);
  return out;
}

}  // namespace ais
