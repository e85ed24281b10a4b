#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ais/linalg.hpp"

namespace ais {

struct SparseEntry {
  Index i = 0;
  Index j = 0;
  double value = 0.0;
};

/// Observed entries of a partially known matrix, 0-based, sorted
/// lexicographically by (i, j) with no duplicates.
struct SparseCoo {
  Index rows = 0;
  Index cols = 0;
  std::vector<SparseEntry> entries;

  Index nnz() const { return static_cast<Index>(entries.size()); }

  double frob_norm() const {
    double sq = 0.0;
    for (const auto& e : entries) sq += e.value * e.value;
    return std::sqrt(sq);
  }

  /// Sorts entries and enforces the structural invariants. Throws on
  /// duplicate coordinates, out-of-range indices, or non-finite values.
  void sort_and_validate() {
    std::sort(entries.begin(), entries.end(), [](const SparseEntry& a, const SparseEntry& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      if (e.i < 0 || e.i >= rows || e.j < 0 || e.j >= cols) {
        throw std::invalid_argument("SparseCoo: index out of range at entry " + std::to_string(k));
      }
      if (!std::isfinite(e.value)) {
        throw std::invalid_argument("SparseCoo: non-finite value at entry " + std::to_string(k));
      }
      if (k > 0 && entries[k - 1].i == e.i && entries[k - 1].j == e.j) {
        throw std::invalid_argument("SparseCoo: duplicate entry (" + std::to_string(e.i) + ", " +
                                    std::to_string(e.j) + ")");
      }
    }
  }

  Vector apply(const Eigen::Ref<const Vector>& v) const {
    Vector y = Vector::Zero(rows);
    for (const auto& e : entries) y[e.i] += e.value * v[e.j];
    return y;
  }

  Vector apply_transpose(const Eigen::Ref<const Vector>& u) const {
    Vector y = Vector::Zero(cols);
    for (const auto& e : entries) y[e.j] += e.value * u[e.i];
    return y;
  }

  DenseMatrix dense() const {
    DenseMatrix Z = DenseMatrix::Zero(rows, cols);
    for (const auto& e : entries) Z(e.i, e.j) = e.value;
    return Z;
  }
};

}  // namespace ais
