#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/sparse.hpp"

namespace ais {

/// Multiply-add counter for the cost-model checks.
struct OpCount {
  std::int64_t multiply_adds = 0;
};

struct LowRankTerm {
  double scale = 0.0;
  LowRankFactors factors;
};

/// Implicit "sparse plus scaled low-rank terms" matrix. Matvecs cost
/// O(nnz + sum_i r_i (m + n)) and never densify. At most three terms appear
/// in practice: the two momentum iterates plus one regularizer correction.
/// Accumulation order is fixed (sparse entries first, then terms in order) so
/// single-threaded results are bit-reproducible.
struct SplrOperator {
  SparseCoo sparse;
  std::vector<LowRankTerm> terms;

  Index rows() const { return sparse.rows; }
  Index cols() const { return sparse.cols; }

  void check_terms() const {
    for (const auto& t : terms) {
      if (t.factors.rows() != rows() || t.factors.cols() != cols()) {
        throw std::invalid_argument("SplrOperator: term dimensions incompatible with sparse part");
      }
    }
  }

  Vector apply(const Eigen::Ref<const Vector>& v, OpCount* count = nullptr) const {
    if (v.size() != cols()) throw std::invalid_argument("SplrOperator::apply: dimension mismatch");
    Vector y = Vector::Zero(rows());
    for (const auto& e : sparse.entries) y[e.i] += e.value * v[e.j];
    if (count) count->multiply_adds += sparse.nnz();
    for (const auto& t : terms) {
      const Index r = t.factors.rank();
      if (r == 0) continue;
      Vector w = t.factors.V.transpose() * v;
      w.array() *= t.scale * t.factors.sigma.array();
      y.noalias() += t.factors.U * w;
      if (count) count->multiply_adds += r * (cols() + rows()) + r;
    }
    return y;
  }

  Vector apply_transpose(const Eigen::Ref<const Vector>& u, OpCount* count = nullptr) const {
    if (u.size() != rows()) {
      throw std::invalid_argument("SplrOperator::apply_transpose: dimension mismatch");
    }
    Vector y = Vector::Zero(cols());
    for (const auto& e : sparse.entries) y[e.j] += e.value * u[e.i];
    if (count) count->multiply_adds += sparse.nnz();
    for (const auto& t : terms) {
      const Index r = t.factors.rank();
      if (r == 0) continue;
      Vector w = t.factors.U.transpose() * u;
      w.array() *= t.scale * t.factors.sigma.array();
      y.noalias() += t.factors.V * w;
      if (count) count->multiply_adds += r * (rows() + cols()) + r;
    }
    return y;
  }

  DenseMatrix dense() const {
    DenseMatrix Z = sparse.dense();
    for (const auto& t : terms) {
      if (t.factors.rank() > 0) Z += t.scale * t.factors.dense();
    }
    return Z;
  }
};

inline Vector splr_apply(const SplrOperator& Z, const Eigen::Ref<const Vector>& v,
                         OpCount* count = nullptr) {
  return Z.apply(v, count);
}

inline Vector splr_apply_transpose(const SplrOperator& Z, const Eigen::Ref<const Vector>& u,
                                   OpCount* count = nullptr) {
  return Z.apply_transpose(u, count);
}

/// Momentum iterate (1 + theta) X_t - theta X_prev - mu S, stored without
/// densification. S is the sparse gradient at the momentum point.
inline SplrOperator build_accel_iterate(const SparseCoo& S, const LowRankFactors& X_t,
                                        const LowRankFactors& X_prev, double theta, double mu) {
  SplrOperator Z;
  Z.sparse.rows = S.rows;
  Z.sparse.cols = S.cols;
  Z.sparse.entries.reserve(S.entries.size());
  for (const auto& e : S.entries) Z.sparse.entries.push_back({e.i, e.j, -mu * e.value});
  if (X_t.rank() > 0) Z.terms.push_back({1.0 + theta, X_t});
  if (theta != 0.0 && X_prev.rank() > 0) Z.terms.push_back({-theta, X_prev});
  Z.check_terms();
  return Z;
}

}  // namespace ais
