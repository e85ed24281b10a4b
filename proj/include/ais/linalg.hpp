#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ais {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thin SVD with a fixed sign convention: in each left singular vector the
/// entry of largest magnitude (ties broken by lowest index) is non-negative.
/// Keeps factor files reproducible across runs and backends.
struct ThinSVD {
  DenseMatrix U;
  Vector sigma;  // non-increasing, >= 0
  DenseMatrix V;
};

struct OrthonormalBasis {
  DenseMatrix Q;
  Index cols() const { return Q.cols(); }
};

/// Thin factorization U * diag(sigma) * V^T. rank 0 encodes the zero matrix.
struct LowRankFactors {
  DenseMatrix U;  // m x k, orthonormal columns
  Vector sigma;   // k, strictly positive, non-increasing
  DenseMatrix V;  // n x k, orthonormal columns

  Index rows() const { return U.rows(); }
  Index cols() const { return V.rows(); }
  Index rank() const { return sigma.size(); }

  static LowRankFactors zero(Index m, Index n) {
    LowRankFactors x;
    x.U = DenseMatrix::Zero(m, 0);
    x.sigma = Vector::Zero(0);
    x.V = DenseMatrix::Zero(n, 0);
    return x;
  }

  double entry(Index i, Index j) const {
    double value = 0.0;
    for (Index k = 0; k < rank(); ++k) value += sigma[k] * U(i, k) * V(j, k);
    return value;
  }

  DenseMatrix dense() const {
    if (rank() == 0) return DenseMatrix::Zero(rows(), cols());
    return U * sigma.asDiagonal() * V.transpose();
  }

  double frob_norm() const { return sigma.norm(); }
};

namespace detail {

inline void normalize_signs(DenseMatrix& U, DenseMatrix& V) {
  for (Index c = 0; c < U.cols(); ++c) {
    Index pivot = 0;
    double best = -1.0;
    for (Index i = 0; i < U.rows(); ++i) {
      const double mag = std::abs(U(i, c));
      if (mag > best) {
        best = mag;
        pivot = i;
      }
    }
    if (U(pivot, c) < 0.0) {
      U.col(c) = -U.col(c);
      if (c < V.cols()) V.col(c) = -V.col(c);
    }
  }
}

}  // namespace detail

/// Thin SVD of a dense matrix. Jacobi for small problems, divide-and-conquer
/// otherwise; both meet 1e-10 reconstruction accuracy for condition numbers
/// up to 1e8.
inline ThinSVD thin_svd(const DenseMatrix& Z) {
  ThinSVD out;
  if (Z.rows() == 0 || Z.cols() == 0) {
    out.U = DenseMatrix::Zero(Z.rows(), 0);
    out.sigma = Vector::Zero(0);
    out.V = DenseMatrix::Zero(Z.cols(), 0);
    return out;
  }
  if (std::min(Z.rows(), Z.cols()) <= 32) {
    Eigen::JacobiSVD<DenseMatrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.sigma = svd.singularValues();
    out.V = svd.matrixV();
  } else {
    Eigen::BDCSVD<DenseMatrix> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU();
    out.sigma = svd.singularValues();
    out.V = svd.matrixV();
  }
  detail::normalize_signs(out.U, out.V);
  return out;
}

/// Orthonormal basis for the span of M's numerically independent columns.
/// Columns with norm below 1e-12 are dropped first; dependent columns
/// collapse through rank-revealing QR. All-zero input yields a zero-column
/// basis.
inline OrthonormalBasis qr_orthonormalize(const DenseMatrix& M) {
  OrthonormalBasis out;
  std::vector<Index> keep;
  keep.reserve(M.cols());
  for (Index c = 0; c < M.cols(); ++c) {
    if (M.col(c).norm() >= 1e-12) keep.push_back(c);
  }
  if (keep.empty()) {
    out.Q = DenseMatrix::Zero(M.rows(), 0);
    return out;
  }
  DenseMatrix pruned(M.rows(), static_cast<Index>(keep.size()));
  for (Index c = 0; c < pruned.cols(); ++c) pruned.col(c) = M.col(keep[static_cast<std::size_t>(c)]);
  if (pruned.rows() < pruned.cols()) {
    throw std::invalid_argument("qr_orthonormalize: more columns than rows after pruning");
  }
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(pruned);
  const Index rank = qr.rank();
  if (rank == 0) {
    out.Q = DenseMatrix::Zero(M.rows(), 0);
    return out;
  }
  out.Q = qr.householderQ() * DenseMatrix::Identity(M.rows(), rank);
  return out;
}

template <class Op>
DenseMatrix apply_columns(const Op& Z, const DenseMatrix& R) {
  DenseMatrix Y(Z.rows(), R.cols());
  for (Index c = 0; c < R.cols(); ++c) Y.col(c) = Z.apply(R.col(c));
  return Y;
}

template <class Op>
DenseMatrix apply_transpose_columns(const Op& Z, const DenseMatrix& R) {
  DenseMatrix Y(Z.cols(), R.cols());
  for (Index c = 0; c < R.cols(); ++c) Y.col(c) = Z.apply_transpose(R.col(c));
  return Y;
}

/// Block power iteration: Q_0 = QR(Z R), then Q_j = QR(Z (Z^T Q_{j-1})) for
/// j = 1..iters. Returns the final basis; a numerically zero Z R gives a
/// zero-column basis.
template <class Op>
OrthonormalBasis power_method(const Op& Z, const DenseMatrix& R, int iters) {
  if (R.cols() < 1) throw std::invalid_argument("power_method: need at least one column");
  if (R.rows() != Z.cols()) throw std::invalid_argument("power_method: seed dimension mismatch");
  // Seeds wider than the matrix are clamped to min(m, n) columns.
  const Index limit = std::min(Z.rows(), Z.cols());
  DenseMatrix clamped;
  const DenseMatrix* seed = &R;
  if (R.cols() > limit) {
    clamped = R.leftCols(limit);
    seed = &clamped;
  }
  OrthonormalBasis basis = qr_orthonormalize(apply_columns(Z, *seed));
  for (int j = 1; j <= iters && basis.cols() > 0; ++j) {
    const DenseMatrix T = apply_transpose_columns(Z, basis.Q);
    basis = qr_orthonormalize(apply_columns(Z, T));
  }
  return basis;
}

namespace detail {

// Shared shrinkage: keep sigma_i > lambda * w_i (strict), shrink by that
// amount. weights == nullptr means uniform weight 1.
inline LowRankFactors shrink_svd(const ThinSVD& svd, double lambda, const Vector* weights) {
  if (weights && weights->size() < svd.sigma.size()) {
    throw std::invalid_argument("shrink_svd: weight list too short");
  }
  std::vector<Index> keep;
  for (Index i = 0; i < svd.sigma.size(); ++i) {
    const double threshold = lambda * (weights ? (*weights)[i] : 1.0);
    if (svd.sigma[i] > threshold) keep.push_back(i);
  }
  LowRankFactors x;
  const Index k = static_cast<Index>(keep.size());
  x.U.resize(svd.U.rows(), k);
  x.sigma.resize(k);
  x.V.resize(svd.V.rows(), k);
  for (Index c = 0; c < k; ++c) {
    const Index i = keep[static_cast<std::size_t>(c)];
    x.U.col(c) = svd.U.col(i);
    x.sigma[c] = svd.sigma[i] - lambda * (weights ? (*weights)[i] : 1.0);
    x.V.col(c) = svd.V.col(i);
  }
  // Weighted shrinkage can reorder magnitudes; restore the non-increasing
  // invariant.
  bool sorted = true;
  for (Index c = 1; c < k; ++c)
    if (x.sigma[c] > x.sigma[c - 1]) sorted = false;
  if (!sorted) {
    std::vector<Index> order(static_cast<std::size_t>(k));
    for (Index c = 0; c < k; ++c) order[static_cast<std::size_t>(c)] = c;
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return x.sigma[a] > x.sigma[b]; });
    LowRankFactors y;
    y.U.resize(x.U.rows(), k);
    y.sigma.resize(k);
    y.V.resize(x.V.rows(), k);
    for (Index c = 0; c < k; ++c) {
      const Index i = order[static_cast<std::size_t>(c)];
      y.U.col(c) = x.U.col(i);
      y.sigma[c] = x.sigma[i];
      y.V.col(c) = x.V.col(i);
    }
    return y;
  }
  return x;
}

}  // namespace detail

/// Exact singular value thresholding: the minimizer of
/// 1/2 ||X - Z||_F^2 + lambda ||X||_*. Singular values <= lambda are dropped
/// (strictly greater survive, shrunk by lambda).
inline LowRankFactors svt_dense(const DenseMatrix& Z, double lambda) {
  return detail::shrink_svd(thin_svd(Z), lambda, nullptr);
}

/// Weighted thresholding U [Sigma - lambda diag(w)]_+ V^T, the minimizer of
/// 1/2 ||X - Z||_F^2 + lambda sum_i w_i sigma_i(X) for non-decreasing w.
inline LowRankFactors weighted_svt_dense(const DenseMatrix& Z, double lambda, const Vector& w) {
  const Index need = std::min(Z.rows(), Z.cols());
  if (w.size() < need) throw std::invalid_argument("weighted_svt_dense: weight list too short");
  for (Index i = 0; i < w.size(); ++i) {
    if (w[i] < 0.0) throw std::invalid_argument("weighted_svt_dense: negative weight");
    if (i > 0 && w[i] < w[i - 1]) {
      throw std::invalid_argument("weighted_svt_dense: weights must be non-decreasing");
    }
  }
  return detail::shrink_svd(thin_svd(Z), lambda, &w);
}

/// Result of an approximate SVT together with how many singular values were
/// examined; candidates == kept rank signals that the threshold never became
/// active inside the probed subspace.
struct ApproxSvtResult {
  LowRankFactors factors;
  Index candidates = 0;
};

template <class Op>
ApproxSvtResult approx_svt_probe(const Op& Z, const DenseMatrix& R, double lambda, int iters,
                                 const Vector* weights = nullptr) {
  ApproxSvtResult out;
  const OrthonormalBasis basis = power_method(Z, R, iters);
  if (basis.cols() == 0) {
    out.factors = LowRankFactors::zero(Z.rows(), Z.cols());
    return out;
  }
  // Q^T Z assembled row-wise from transpose applications.
  const DenseMatrix compressed = apply_transpose_columns(Z, basis.Q).transpose();
  const ThinSVD svd = thin_svd(compressed);
  out.candidates = svd.sigma.size();
  LowRankFactors shrunk = detail::shrink_svd(svd, lambda, weights);
  shrunk.U = basis.Q * shrunk.U;
  out.factors = std::move(shrunk);
  return out;
}

/// Power-method approximate SVT: range-find with R and iters power steps,
/// then exact SVT on the compressed k x n matrix, lifted back by Q.
template <class Op>
LowRankFactors approx_svt(const Op& Z, const DenseMatrix& R, double lambda, int iters) {
  return approx_svt_probe(Z, R, lambda, iters).factors;
}

/// Duality gap of the thresholding problem at X: evaluates
/// h(X) = 1/2 ||X - Z||_F^2 + lambda ||X||_* against the dual value at
/// W = U min(Sigma, lambda I) V^T from the full SVD of Z. Zero (to 1e-8)
/// exactly when X = svt_lambda(Z).
inline double svt_dual_certificate(const DenseMatrix& Z, double lambda, const LowRankFactors& X) {
  const ThinSVD svd = thin_svd(Z);
  double dual = 0.0;
  for (Index i = 0; i < svd.sigma.size(); ++i) {
    const double clipped = std::min(svd.sigma[i], lambda);
    dual += svd.sigma[i] * clipped - 0.5 * clipped * clipped;
  }
  double cross = 0.0;
  for (Index k = 0; k < X.rank(); ++k) {
    cross += X.sigma[k] * X.U.col(k).dot(Z * X.V.col(k));
  }
  const double x_sq = X.sigma.squaredNorm();
  const double primal =
      0.5 * (Z.squaredNorm() - 2.0 * cross + x_sq) + lambda * X.sigma.sum();
  return std::max(primal - dual, 0.0);
}

/// Adapter exposing a dense matrix through the linear-operator interface used
/// by power_method / approx_svt.
struct DenseOperator {
  const DenseMatrix* matrix;

  explicit DenseOperator(const DenseMatrix& m) : matrix(&m) {}
  Index rows() const { return matrix->rows(); }
  Index cols() const { return matrix->cols(); }
  Vector apply(const Eigen::Ref<const Vector>& v) const { return *matrix * v; }
  Vector apply_transpose(const Eigen::Ref<const Vector>& u) const {
    return matrix->transpose() * u;
  }
};

}  // namespace ais
