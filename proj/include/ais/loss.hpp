#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/sparse.hpp"

namespace ais {

/// Smooth convex elementwise losses. Square: 1/2 (x - o)^2 with Lipschitz
/// modulus 1. Logistic: log(1 + exp(-x o)) with tight modulus 1/4, which
/// permits 4x larger proximal steps than the generic bound.
enum class LossKind { kSquare, kLogistic };

inline double loss_modulus(LossKind kind) {
  return kind == LossKind::kSquare ? 1.0 : 0.25;
}

inline double loss_value(LossKind kind, double x, double o) {
  if (kind == LossKind::kSquare) {
    const double d = x - o;
    return 0.5 * d * d;
  }
  // Stable softplus(-z) for z = x * o.
  const double z = x * o;
  if (z >= 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

inline double loss_derivative(LossKind kind, double x, double o) {
  if (kind == LossKind::kSquare) return x - o;
  const double z = x * o;
  // d/dx log(1 + exp(-x o)) = -o / (1 + exp(x o)), computed without overflow.
  if (z >= 0.0) {
    const double ez = std::exp(-z);
    return -o * ez / (1.0 + ez);
  }
  return -o / (1.0 + std::exp(z));
}

/// Linear combination of factored matrices, evaluated entrywise through
/// factor row dot-products (the iterates are never densified).
struct FactorCombination {
  struct Term {
    double scale = 0.0;
    const LowRankFactors* factors = nullptr;
  };
  std::vector<Term> terms;

  void add(double scale, const LowRankFactors& factors) {
    if (scale != 0.0 && factors.rank() > 0) terms.push_back({scale, &factors});
  }

  double entry(Index i, Index j) const {
    double value = 0.0;
    for (const auto& t : terms) value += t.scale * t.factors->entry(i, j);
    return value;
  }
};

/// Gradient of sum_{(i,j) in Omega} loss(Y_ij, O_ij) with respect to Y: a
/// sparse matrix carried on the observation pattern.
inline SparseCoo sparse_gradient(LossKind kind, const FactorCombination& Y, const SparseCoo& O) {
  SparseCoo S;
  S.rows = O.rows;
  S.cols = O.cols;
  S.entries.reserve(O.entries.size());
  for (const auto& e : O.entries) {
    S.entries.push_back({e.i, e.j, loss_derivative(kind, Y.entry(e.i, e.j), e.value)});
  }
  return S;
}

using SpectrumPenalty = std::function<double(const Vector&)>;

inline double nuclear_norm_value(const Vector& sigma) { return sigma.sum(); }

/// Composite objective sum_Omega loss(X_ij, O_ij) + lambda * penalty(sigma(X)).
inline double objective(LossKind kind, const LowRankFactors& X, const SparseCoo& O, double lambda,
                        const SpectrumPenalty& penalty) {
  double data = 0.0;
  for (const auto& e : O.entries) data += loss_value(kind, X.entry(e.i, e.j), e.value);
  return data + lambda * penalty(X.sigma);
}

inline double objective(LossKind kind, const LowRankFactors& X, const SparseCoo& O,
                        double lambda) {
  return objective(kind, X, O, lambda, nuclear_norm_value);
}

}  // namespace ais
