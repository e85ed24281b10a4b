#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/loss.hpp"
#include "ais/sparse.hpp"
#include "ais/tensor.hpp"

namespace ais {

/// Result of re-fitting singular values against the observed entries.
struct SpectrumFit {
  Vector theta;
  bool converged = false;
  int iterations = 0;
  double final_value = 0.0;
};

namespace detail {

/// Limited-memory BFGS with Armijo backtracking. The objective callable
/// evaluates f(x) and fills the gradient. A non-finite trial value only
/// shrinks the step.
template <class Objective>
SpectrumFit lbfgs_minimize(Objective&& objective, Vector x, int memory = 10, int max_iter = 50,
                           double grad_tol = 1e-8) {
  const double armijo = 1e-4;
  Vector grad(x.size());
  double value = objective(x, grad);
  std::deque<std::pair<Vector, Vector>> pairs;  // (s, y)

  SpectrumFit fit;
  int it = 0;
  for (; it < max_iter; ++it) {
    if (grad.norm() <= grad_tol) {
      fit.converged = true;
      break;
    }
    // Two-loop recursion for the search direction.
    Vector direction = -grad;
    std::vector<double> alpha(pairs.size());
    for (std::size_t p = pairs.size(); p-- > 0;) {
      const auto& [s, y] = pairs[p];
      const double rho = 1.0 / y.dot(s);
      alpha[p] = rho * s.dot(direction);
      direction -= alpha[p] * y;
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      direction *= s.dot(y) / y.dot(y);
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto& [s, y] = pairs[p];
      const double rho = 1.0 / y.dot(s);
      const double beta = rho * y.dot(direction);
      direction += (alpha[p] - beta) * s;
    }
    double slope = grad.dot(direction);
    if (!(slope < 0.0)) {
      direction = -grad;
      slope = -grad.squaredNorm();
    }

    double step = 1.0;
    Vector trial_grad(x.size());
    Vector trial;
    double trial_value = 0.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      trial = x + step * direction;
      trial_value = objective(trial, trial_grad);
      if (std::isfinite(trial_value) && trial_value <= value + armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    const Vector s = trial - x;
    const Vector y = trial_grad - grad;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      pairs.emplace_back(s, y);
      if (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
    }
    x = std::move(trial);
    grad = trial_grad;
    value = trial_value;
  }
  if (it == max_iter && grad.norm() <= grad_tol) fit.converged = true;
  fit.theta = std::move(x);
  fit.iterations = it;
  fit.final_value = value;
  return fit;
}

}  // namespace detail

/// Undo part of the spectral shrinkage: minimize
/// phi(theta) = sum_Omega loss((U diag(theta) V^T)_ij, O_ij) over theta,
/// starting from the solver's sigma. U and V are read-only; the gradient
/// component i is u_i^T B v_i with B the sparse loss-derivative matrix, so an
/// evaluation costs O(k nnz).
inline SpectrumFit refit_matrix(const LowRankFactors& X, const SparseCoo& O, LossKind loss) {
  const Index k = X.rank();
  if (k < 1) throw std::invalid_argument("refit_matrix: rank-0 input");
  auto objective = [&](const Vector& theta, Vector& grad) {
    grad.setZero();
    double value = 0.0;
    for (const auto& e : O.entries) {
      double a = 0.0;
      for (Index c = 0; c < k; ++c) a += theta[c] * X.U(e.i, c) * X.V(e.j, c);
      value += loss_value(loss, a, e.value);
      const double b = loss_derivative(loss, a, e.value);
      for (Index c = 0; c < k; ++c) grad[c] += b * X.U(e.i, c) * X.V(e.j, c);
    }
    return value;
  };
  return detail::lbfgs_minimize(objective, X.sigma);
}

/// Rebuild factors with a replacement spectrum: negative components are
/// folded into the right factor's sign, zeros dropped, and the result
/// re-sorted non-increasing.
inline LowRankFactors with_spectrum(const LowRankFactors& X, const Vector& theta) {
  if (theta.size() != X.rank()) throw std::invalid_argument("with_spectrum: length mismatch");
  std::vector<Index> keep;
  for (Index c = 0; c < theta.size(); ++c) {
    if (theta[c] != 0.0) keep.push_back(c);
  }
  std::stable_sort(keep.begin(), keep.end(),
                   [&](Index a, Index b) { return std::abs(theta[a]) > std::abs(theta[b]); });
  LowRankFactors out;
  const Index k = static_cast<Index>(keep.size());
  out.U.resize(X.U.rows(), k);
  out.sigma.resize(k);
  out.V.resize(X.V.rows(), k);
  for (Index c = 0; c < k; ++c) {
    const Index i = keep[static_cast<std::size_t>(c)];
    out.U.col(c) = X.U.col(i);
    out.sigma[c] = std::abs(theta[i]);
    out.V.col(c) = theta[i] < 0.0 ? Vector(-X.V.col(i)) : Vector(X.V.col(i));
  }
  return out;
}

/// Joint spectrum re-fit for a latent decomposition: theta concatenates the
/// per-mode spectra; the gradient is assembled per mode from the shared
/// sparse residual without materializing any unfolding.
inline SpectrumFit refit_tensor(const LatentDecomposition& X, const SparseTensorCoo& O,
                                LossKind loss) {
  const int D = X.order();
  Index total = 0;
  for (const auto& f : X.modes) total += f.rank();
  if (total < 1) throw std::invalid_argument("refit_tensor: all modes are rank-0");

  std::vector<Index> offsets(static_cast<std::size_t>(D));
  Index at = 0;
  for (int d = 0; d < D; ++d) {
    offsets[static_cast<std::size_t>(d)] = at;
    at += X.modes[d].rank();
  }
  Vector theta0(total);
  for (int d = 0; d < D; ++d) {
    theta0.segment(offsets[static_cast<std::size_t>(d)], X.modes[d].rank()) = X.modes[d].sigma;
  }

  auto objective = [&](const Vector& theta, Vector& grad) {
    grad.setZero();
    double value = 0.0;
    for (const auto& e : O.entries) {
      double a = 0.0;
      for (int d = 0; d < D; ++d) {
        const Index kd = X.modes[d].rank();
        if (kd == 0) continue;
        const auto [row, col] = mode_index_map(e.idx.data(), D, d, X.dims);
        const Index off = offsets[static_cast<std::size_t>(d)];
        for (Index c = 0; c < kd; ++c) {
          a += theta[off + c] * X.modes[d].U(row, c) * X.modes[d].V(static_cast<Index>(col), c);
        }
      }
      value += loss_value(loss, a, e.value);
      const double b = loss_derivative(loss, a, e.value);
      for (int d = 0; d < D; ++d) {
        const Index kd = X.modes[d].rank();
        if (kd == 0) continue;
        const auto [row, col] = mode_index_map(e.idx.data(), D, d, X.dims);
        const Index off = offsets[static_cast<std::size_t>(d)];
        for (Index c = 0; c < kd; ++c) {
          grad[off + c] += b * X.modes[d].U(row, c) * X.modes[d].V(static_cast<Index>(col), c);
        }
      }
    }
    return value;
  };
  return detail::lbfgs_minimize(objective, theta0);
}

inline LatentDecomposition with_spectrum(const LatentDecomposition& X, const Vector& theta) {
  LatentDecomposition out;
  out.dims = X.dims;
  Index at = 0;
  for (const auto& f : X.modes) {
    out.modes.push_back(with_spectrum(f, theta.segment(at, f.rank())));
    at += f.rank();
  }
  if (at != theta.size()) throw std::invalid_argument("with_spectrum: length mismatch");
  return out;
}

}  // namespace ais
