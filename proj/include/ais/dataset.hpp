#pragma once

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "ais/linalg.hpp"
#include "ais/rng.hpp"
#include "ais/solver.hpp"
#include "ais/sparse.hpp"
#include "ais/tensor.hpp"

namespace ais {

// ---------------------------------------------------------------------------
// Text formats. Entry files carry one observation per line, 1-based indices
// then the value, whitespace-separated; an optional header line
// "# dims: I1 I2 ..." pins the shape. Extra trailing numeric tokens (e.g.
// MovieLens timestamps) are ignored. All floating-point output uses 17
// significant digits so files round-trip doubles exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ParsedLine {
  std::vector<std::string> tokens;
  int line_number = 0;
};

inline std::vector<Index> parse_dims_header(const std::string& line) {
  // Expected form: "# dims: I1 I2 ...".
  const auto colon = line.find(':');
  if (colon == std::string::npos) return {};
  std::istringstream rest(line.substr(colon + 1));
  std::vector<Index> dims;
  long long v = 0;
  while (rest >> v) dims.push_back(static_cast<Index>(v));
  return dims;
}

inline double parse_value(const std::string& token, const std::string& path, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": cannot parse '" + token +
                             "' as a number");
  }
  if (used != token.size()) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": cannot parse '" + token +
                             "' as a number");
  }
  return v;
}

inline long long parse_index(const std::string& token, const std::string& path, int line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(token, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": cannot parse '" + token +
                             "' as an index");
  }
  if (used != token.size()) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": cannot parse '" + token +
                             "' as an index");
  }
  return v;
}

}  // namespace detail

/// Loads a matrix entry file. Shape comes from `dims` when given, otherwise
/// from a "# dims:" header, otherwise from the largest observed index.
/// Duplicate coordinates are rejected with both offending line numbers.
inline SparseCoo load_coo(const std::string& path,
                          std::optional<std::pair<Index, Index>> dims = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  SparseCoo out;
  bool have_dims = false;
  if (dims) {
    out.rows = dims->first;
    out.cols = dims->second;
    have_dims = true;
  }
  std::unordered_map<std::uint64_t, int> seen;
  std::string line;
  int line_number = 0;
  Index max_i = -1, max_j = -1;
  std::vector<std::pair<SparseEntry, int>> staged;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!have_dims) {
        const auto header = detail::parse_dims_header(line);
        if (header.size() == 2) {
          out.rows = header[0];
          out.cols = header[1];
          have_dims = true;
        }
      }
      continue;
    }
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (tokens.size() < 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": expected 'i j value'");
    }
    const long long i1 = detail::parse_index(tokens[0], path, line_number);
    const long long j1 = detail::parse_index(tokens[1], path, line_number);
    const double value = detail::parse_value(tokens[2], path, line_number);
    if (i1 < 1 || j1 < 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": indices are 1-based and must be positive");
    }
    const Index i = static_cast<Index>(i1 - 1);
    const Index j = static_cast<Index>(j1 - 1);
    const std::uint64_t key =
        (static_cast<std::uint64_t>(i) << 32) | static_cast<std::uint64_t>(j & 0xffffffff);
    const auto [it, inserted] = seen.emplace(key, line_number);
    if (!inserted) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) + ": duplicate of line " +
                               std::to_string(it->second));
    }
    staged.push_back({{i, j, value}, line_number});
    max_i = std::max(max_i, i);
    max_j = std::max(max_j, j);
  }
  if (!have_dims) {
    out.rows = max_i + 1;
    out.cols = max_j + 1;
  }
  out.entries.reserve(staged.size());
  for (auto& [e, ln] : staged) {
    if (e.i >= out.rows || e.j >= out.cols) {
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": index out of range for " +
                               std::to_string(out.rows) + "x" + std::to_string(out.cols));
    }
    if (!std::isfinite(e.value)) {
      throw std::runtime_error(path + ":" + std::to_string(ln) + ": non-finite value");
    }
    out.entries.push_back(e);
  }
  out.sort_and_validate();
  return out;
}

/// Loads a tensor entry file. The order must be pinned by `dims` or by a
/// "# dims:" header (tuples alone cannot distinguish an order-D index from an
/// order-(D+1) one followed by extra columns).
inline SparseTensorCoo load_tensor_coo(const std::string& path,
                                       std::optional<std::vector<Index>> dims = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  SparseTensorCoo out;
  if (dims) out.dims = *dims;
  std::string line;
  int line_number = 0;
  std::unordered_map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (out.dims.empty()) {
        const auto header = detail::parse_dims_header(line);
        if (header.size() >= 2) out.dims = header;
      }
      continue;
    }
    if (out.dims.empty()) {
      throw std::runtime_error(path + ": tensor files need a '# dims:' header or explicit dims");
    }
    const int D = static_cast<int>(out.dims.size());
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
    if (tokens.empty()) continue;
    if (static_cast<int>(tokens.size()) < D + 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) + ": expected " +
                               std::to_string(D) + " indices and a value");
    }
    TensorEntry e;
    std::string key;
    for (int d = 0; d < D; ++d) {
      const long long v = detail::parse_index(tokens[static_cast<std::size_t>(d)], path, line_number);
      if (v < 1) {
        throw std::runtime_error(path + ":" + std::to_string(line_number) +
                                 ": indices are 1-based and must be positive");
      }
      e.idx[d] = static_cast<std::int32_t>(v - 1);
      key += std::to_string(v) + ",";
    }
    e.value = detail::parse_value(tokens[static_cast<std::size_t>(D)], path, line_number);
    const auto [it, inserted] = seen.emplace(key, line_number);
    if (!inserted) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) + ": duplicate of line " +
                               std::to_string(it->second));
    }
    out.entries.push_back(e);
  }
  if (out.dims.empty()) {
    throw std::runtime_error(path + ": tensor files need a '# dims:' header or explicit dims");
  }
  out.sort_and_validate();
  return out;
}

inline void save_coo(const std::string& path, const SparseCoo& M) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "# dims: " << M.rows << " " << M.cols << "\n";
  for (const auto& e : M.entries) {
    out << (e.i + 1) << " " << (e.j + 1) << " " << detail::format_double(e.value) << "\n";
  }
}

inline void save_tensor_coo(const std::string& path, const SparseTensorCoo& T) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "# dims:";
  for (Index d : T.dims) out << " " << d;
  out << "\n";
  for (const auto& e : T.entries) {
    for (int d = 0; d < T.order(); ++d) out << (e.idx[d] + 1) << " ";
    out << detail::format_double(e.value) << "\n";
  }
}

// ---------------------------------------------------------------------------
// Synthetic protocols.
// ---------------------------------------------------------------------------

struct MatrixDataset {
  Index rows = 0;
  Index cols = 0;
  SparseCoo train;
  SparseCoo valid;
  SparseCoo test;  // for synthetic data: every unobserved entry, clean value
  std::string provenance;
};

struct TensorDataset {
  std::vector<Index> dims;
  SparseTensorCoo train;
  SparseTensorCoo valid;
  SparseTensorCoo test;
  std::string provenance;
};

namespace detail {

/// Deterministically selects `count` distinct cells out of `total`, returned
/// sorted. Uses rejection sampling at low density and a partial shuffle
/// otherwise; either way the selected set depends only on the RNG stream.
inline std::vector<std::int64_t> sample_without_replacement(std::int64_t total, std::int64_t count,
                                                            Rng& rng) {
  std::vector<std::int64_t> picked;
  picked.reserve(static_cast<std::size_t>(count));
  if (count * 2 <= total) {
    std::unordered_set<std::int64_t> seen;
    seen.reserve(static_cast<std::size_t>(count) * 2);
    while (static_cast<std::int64_t>(seen.size()) < count) {
      const auto draw = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(total)));
      if (seen.insert(draw).second) picked.push_back(draw);
    }
  } else {
    std::vector<std::int64_t> all(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < count; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(total - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
    }
    picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Shuffles 0..n-1 with Fisher-Yates on the shared RNG stream.
inline std::vector<std::int64_t> shuffled_order(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(rng.index(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

}  // namespace detail

/// Rank-`rank` synthetic completion instance: ground truth G1 G2 with
/// standard-normal factors, Gaussian noise on the observed entries, and
/// floor(15 m ln m) observed cells split half/half into train and validation.
/// The test split holds every unobserved cell with its clean value. Draw
/// order is frozen (G1 row-major, G2 row-major, cell selection, noise in
/// sorted-cell order, split shuffle), so a seed pins the dataset exactly.
inline MatrixDataset synth_matrix(Index m, Index rank = 5, double noise_sd = 0.05,
                                  std::uint64_t seed = 0) {
  if (m < 10) throw std::invalid_argument("synth_matrix: m must be at least 10");
  if (rank < 1 || rank > m) throw std::invalid_argument("synth_matrix: bad rank");
  Rng rng(seed);
  DenseMatrix G1(m, rank);
  for (Index i = 0; i < m; ++i) {
    for (Index k = 0; k < rank; ++k) G1(i, k) = rng.normal();
  }
  DenseMatrix G2(rank, m);
  for (Index k = 0; k < rank; ++k) {
    for (Index j = 0; j < m; ++j) G2(k, j) = rng.normal();
  }

  const std::int64_t total = static_cast<std::int64_t>(m) * static_cast<std::int64_t>(m);
  std::int64_t count = static_cast<std::int64_t>(
      std::floor(15.0 * static_cast<double>(m) * std::log(static_cast<double>(m))));
  count = std::min(count, total * 4 / 5);  // tiny m would otherwise exceed the grid

  const auto cells = detail::sample_without_replacement(total, count, rng);
  std::vector<double> observed(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const Index i = static_cast<Index>(cells[k] / m);
    const Index j = static_cast<Index>(cells[k] % m);
    observed[k] = G1.row(i).dot(G2.col(j)) + noise_sd * rng.normal();
  }

  const auto order = detail::shuffled_order(static_cast<std::int64_t>(cells.size()), rng);
  const std::size_t train_n = (cells.size() + 1) / 2;

  MatrixDataset ds;
  ds.rows = m;
  ds.cols = m;
  ds.train.rows = ds.valid.rows = ds.test.rows = m;
  ds.train.cols = ds.valid.cols = ds.test.cols = m;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t pick = static_cast<std::size_t>(order[k]);
    const Index i = static_cast<Index>(cells[pick] / m);
    const Index j = static_cast<Index>(cells[pick] % m);
    SparseEntry e{i, j, observed[pick]};
    (k < train_n ? ds.train : ds.valid).entries.push_back(e);
  }
  ds.train.sort_and_validate();
  ds.valid.sort_and_validate();

  std::vector<bool> is_observed(static_cast<std::size_t>(total), false);
  for (const auto c : cells) is_observed[static_cast<std::size_t>(c)] = true;
  ds.test.entries.reserve(static_cast<std::size_t>(total - count));
  for (std::int64_t c = 0; c < total; ++c) {
    if (is_observed[static_cast<std::size_t>(c)]) continue;
    const Index i = static_cast<Index>(c / m);
    const Index j = static_cast<Index>(c % m);
    ds.test.entries.push_back({i, j, G1.row(i).dot(G2.col(j))});
  }
  ds.test.sort_and_validate();
  ds.provenance = "synth-matrix m=" + std::to_string(m) + " rank=" + std::to_string(rank) +
                  " noise_sd=" + detail::format_double(noise_sd) +
                  " seed=" + std::to_string(seed);
  return ds;
}

/// m x m x 3 synthetic tensor: Tucker-style ground truth
/// C x1 A1 x2 A2 x3 A3 with 3x3x3 core, A1, A2 of size m x 3 and A3 of size
/// 3 x 3, all standard normal, so the tensor is rank-3 in modes 1-2 and full
/// in mode 3. floor(45 m ln m) cells observed with N(0, 0.05^2) noise, split
/// half/half into train/validation; test holds the clean unobserved cells.
/// Draw order frozen: core (last index fastest), A1, A2, A3 row-major, cell
/// selection, noise, split shuffle.
inline TensorDataset synth_tensor(Index m, std::uint64_t seed = 0) {
  if (m < 10) throw std::invalid_argument("synth_tensor: m must be at least 10");
  const double noise_sd = 0.05;
  Rng rng(seed);
  double core[3][3][3];
  for (auto& plane : core) {
    for (auto& row : plane) {
      for (double& v : row) v = rng.normal();
    }
  }
  DenseMatrix A1(m, 3), A2(m, 3), A3(3, 3);
  for (Index i = 0; i < m; ++i) {
    for (Index k = 0; k < 3; ++k) A1(i, k) = rng.normal();
  }
  for (Index i = 0; i < m; ++i) {
    for (Index k = 0; k < 3; ++k) A2(i, k) = rng.normal();
  }
  for (Index i = 0; i < 3; ++i) {
    for (Index k = 0; k < 3; ++k) A3(i, k) = rng.normal();
  }
  auto truth = [&](Index i, Index j, Index k) {
    double v = 0.0;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) v += core[a][b][c] * A1(i, a) * A2(j, b) * A3(k, c);
      }
    }
    return v;
  };

  const std::int64_t total = static_cast<std::int64_t>(m) * static_cast<std::int64_t>(m) * 3;
  std::int64_t count = static_cast<std::int64_t>(
      std::floor(45.0 * static_cast<double>(m) * std::log(static_cast<double>(m))));
  count = std::min(count, total * 4 / 5);

  const auto cells = detail::sample_without_replacement(total, count, rng);
  auto decode = [m](std::int64_t c) {
    const Index k = static_cast<Index>(c % 3);
    const Index j = static_cast<Index>((c / 3) % m);
    const Index i = static_cast<Index>(c / (3 * static_cast<std::int64_t>(m)));
    return std::array<Index, 3>{i, j, k};
  };
  std::vector<double> observed(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [i, j, l] = decode(cells[k]);
    observed[k] = truth(i, j, l) + noise_sd * rng.normal();
  }

  const auto order = detail::shuffled_order(static_cast<std::int64_t>(cells.size()), rng);
  const std::size_t train_n = (cells.size() + 1) / 2;

  TensorDataset ds;
  ds.dims = {m, m, 3};
  ds.train.dims = ds.valid.dims = ds.test.dims = ds.dims;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t pick = static_cast<std::size_t>(order[k]);
    const auto [i, j, l] = decode(cells[pick]);
    TensorEntry e;
    e.idx[0] = static_cast<std::int32_t>(i);
    e.idx[1] = static_cast<std::int32_t>(j);
    e.idx[2] = static_cast<std::int32_t>(l);
    e.value = observed[pick];
    (k < train_n ? ds.train : ds.valid).entries.push_back(e);
  }
  ds.train.sort_and_validate();
  ds.valid.sort_and_validate();

  std::vector<bool> is_observed(static_cast<std::size_t>(total), false);
  for (const auto c : cells) is_observed[static_cast<std::size_t>(c)] = true;
  for (std::int64_t c = 0; c < total; ++c) {
    if (is_observed[static_cast<std::size_t>(c)]) continue;
    const auto [i, j, l] = decode(c);
    TensorEntry e;
    e.idx[0] = static_cast<std::int32_t>(i);
    e.idx[1] = static_cast<std::int32_t>(j);
    e.idx[2] = static_cast<std::int32_t>(l);
    e.value = truth(i, j, l);
    ds.test.entries.push_back(e);
  }
  ds.test.sort_and_validate();
  ds.provenance = "synth-tensor m=" + std::to_string(m) + " seed=" + std::to_string(seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

struct Metrics {
  std::optional<double> nmse;
  std::optional<double> rmse;
  std::optional<double> accuracy;
  std::vector<Index> ranks;
};

enum class EvalTask { kRegression, kSign };

namespace detail {

inline double sign_of(double x) { return x >= 0.0 ? 1.0 : -1.0; }  // sign(0) counts as +1

inline Metrics finish_metrics(double target_sq, double err_sq, Index n, double correct,
                              EvalTask task) {
  Metrics m;
  if (task == EvalTask::kRegression) {
    m.rmse = std::sqrt(err_sq / static_cast<double>(n));
    if (target_sq > 0.0) m.nmse = std::sqrt(err_sq) / std::sqrt(target_sq);
  } else {
    m.accuracy = correct / static_cast<double>(n);
  }
  return m;
}

}  // namespace detail

/// NMSE / RMSE (regression) or sign accuracy over a test split.
inline Metrics evaluate(const LowRankFactors& X, const SparseCoo& test,
                        EvalTask task = EvalTask::kRegression) {
  if (test.nnz() == 0) throw std::invalid_argument("evaluate: empty test set");
  double err_sq = 0.0, target_sq = 0.0, correct = 0.0;
  for (const auto& e : test.entries) {
    const double p = X.entry(e.i, e.j);
    const double d = p - e.value;
    err_sq += d * d;
    target_sq += e.value * e.value;
    if (detail::sign_of(p) == detail::sign_of(e.value)) correct += 1.0;
  }
  Metrics m = detail::finish_metrics(target_sq, err_sq, test.nnz(), correct, task);
  m.ranks = {X.rank()};
  return m;
}

inline Metrics evaluate(const LatentDecomposition& X, const SparseTensorCoo& test,
                        EvalTask task = EvalTask::kRegression) {
  if (test.nnz() == 0) throw std::invalid_argument("evaluate: empty test set");
  double err_sq = 0.0, target_sq = 0.0, correct = 0.0;
  for (const auto& e : test.entries) {
    const double p = eval_at(X, e.idx.data());
    const double d = p - e.value;
    err_sq += d * d;
    target_sq += e.value * e.value;
    if (detail::sign_of(p) == detail::sign_of(e.value)) correct += 1.0;
  }
  Metrics m = detail::finish_metrics(target_sq, err_sq, test.nnz(), correct, task);
  m.ranks = X.mode_ranks();
  return m;
}

// ---------------------------------------------------------------------------
// Factor persistence: plain text, header "rows cols rank" (tensors prepend
// "modes D" and a dims line), then U rows, the sigma line, and V rows.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_factor_block(std::ofstream& out, const LowRankFactors& X) {
  out << X.rows() << " " << X.cols() << " " << X.rank() << "\n";
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index k = 0; k < X.rank(); ++k) out << (k ? " " : "") << format_double(X.U(i, k));
    out << "\n";
  }
  for (Index k = 0; k < X.rank(); ++k) out << (k ? " " : "") << format_double(X.sigma[k]);
  out << "\n";
  for (Index j = 0; j < X.cols(); ++j) {
    for (Index k = 0; k < X.rank(); ++k) out << (k ? " " : "") << format_double(X.V(j, k));
    out << "\n";
  }
}

inline LowRankFactors read_factor_block(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated factor file");
  std::istringstream head(line);
  Index rows = 0, cols = 0, rank = 0;
  if (!(head >> rows >> cols >> rank)) {
    throw std::runtime_error(path + ": bad factor header '" + line + "'");
  }
  LowRankFactors X;
  X.U.resize(rows, rank);
  X.sigma.resize(rank);
  X.V.resize(cols, rank);
  auto read_row = [&](auto&& fill, Index count) {
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated factor file");
    std::istringstream ss(line);
    for (Index k = 0; k < count; ++k) {
      double v = 0.0;
      if (!(ss >> v)) throw std::runtime_error(path + ": truncated factor row");
      fill(k, v);
    }
  };
  for (Index i = 0; i < rows; ++i) read_row([&](Index k, double v) { X.U(i, k) = v; }, rank);
  read_row([&](Index k, double v) { X.sigma[k] = v; }, rank);
  for (Index j = 0; j < cols; ++j) read_row([&](Index k, double v) { X.V(j, k) = v; }, rank);
  return X;
}

}  // namespace detail

inline void save_factors(const std::string& path, const LowRankFactors& X) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  detail::write_factor_block(out, X);
}

inline LowRankFactors load_factors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  return detail::read_factor_block(in, path);
}

inline void save_decomposition(const std::string& path, const LatentDecomposition& X) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "modes " << X.order() << "\n";
  out << "dims";
  for (Index d : X.dims) out << " " << d;
  out << "\n";
  for (const auto& f : X.modes) detail::write_factor_block(out, f);
}

inline LatentDecomposition load_decomposition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty decomposition file");
  std::istringstream head(line);
  std::string tag;
  int D = 0;
  if (!(head >> tag >> D) || tag != "modes") {
    throw std::runtime_error(path + ": expected 'modes D' header");
  }
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing dims line");
  std::istringstream dims_line(line);
  LatentDecomposition X;
  if (!(dims_line >> tag) || tag != "dims") throw std::runtime_error(path + ": missing dims line");
  long long v = 0;
  while (dims_line >> v) X.dims.push_back(static_cast<Index>(v));
  if (static_cast<int>(X.dims.size()) != D) {
    throw std::runtime_error(path + ": dims line does not match mode count");
  }
  for (int d = 0; d < D; ++d) X.modes.push_back(detail::read_factor_block(in, path));
  return X;
}

/// Peeks at a factor file to decide whether it stores a matrix or a tensor.
inline bool factor_file_is_tensor(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string tag;
  in >> tag;
  return tag == "modes";
}

// ---------------------------------------------------------------------------
// Trace CSV: "iter,seconds,objective,rank,lambda_t,restart,valid_metric".
// The schema is stable; valid_metric is empty when no validation set was
// attached.
// ---------------------------------------------------------------------------

inline void write_trace_csv(const std::string& path, const SolverTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "iter,seconds,objective,rank,lambda_t,restart,valid_metric\n";
  for (const auto& r : trace.records) {
    out << r.iter << "," << detail::format_double(r.seconds) << ","
        << detail::format_double(r.objective) << "," << r.rank << ","
        << detail::format_double(r.lambda_t) << "," << (r.restarted ? 1 : 0) << ",";
    if (std::isfinite(r.valid_metric)) out << detail::format_double(r.valid_metric);
    out << "\n";
  }
}

inline SolverTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty trace file");
  SolverTrace trace;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (fields.size() != 7) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) + ": expected 7 columns");
    }
    TraceRecord r;
    r.iter = static_cast<int>(detail::parse_index(fields[0], path, line_number));
    r.seconds = detail::parse_value(fields[1], path, line_number);
    r.objective = detail::parse_value(fields[2], path, line_number);
    r.rank = static_cast<Index>(detail::parse_index(fields[3], path, line_number));
    r.lambda_t = detail::parse_value(fields[4], path, line_number);
    r.restarted = detail::parse_index(fields[5], path, line_number) != 0;
    r.valid_metric = fields[6].empty() ? std::numeric_limits<double>::quiet_NaN()
                                       : detail::parse_value(fields[6], path, line_number);
    trace.records.push_back(r);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Dataset directories: train.txt / valid.txt / test.txt plus meta.txt.
// ---------------------------------------------------------------------------

inline void save_matrix_dataset(const std::string& dir, const MatrixDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_coo((fs::path(dir) / "train.txt").string(), ds.train);
  save_coo((fs::path(dir) / "valid.txt").string(), ds.valid);
  save_coo((fs::path(dir) / "test.txt").string(), ds.test);
  std::ofstream meta(fs::path(dir) / "meta.txt");
  meta << ds.provenance << "\n";
}

inline MatrixDataset load_matrix_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  MatrixDataset ds;
  ds.train = load_coo((fs::path(dir) / "train.txt").string());
  ds.rows = ds.train.rows;
  ds.cols = ds.train.cols;
  const auto valid_path = fs::path(dir) / "valid.txt";
  if (fs::exists(valid_path)) ds.valid = load_coo(valid_path.string());
  const auto test_path = fs::path(dir) / "test.txt";
  if (fs::exists(test_path)) ds.test = load_coo(test_path.string());
  const auto meta_path = fs::path(dir) / "meta.txt";
  if (fs::exists(meta_path)) {
    std::ifstream meta(meta_path);
    std::getline(meta, ds.provenance);
  }
  return ds;
}

inline void save_tensor_dataset(const std::string& dir, const TensorDataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_tensor_coo((fs::path(dir) / "train.txt").string(), ds.train);
  save_tensor_coo((fs::path(dir) / "valid.txt").string(), ds.valid);
  save_tensor_coo((fs::path(dir) / "test.txt").string(), ds.test);
  std::ofstream meta(fs::path(dir) / "meta.txt");
  meta << ds.provenance << "\n";
}

inline TensorDataset load_tensor_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  TensorDataset ds;
  ds.train = load_tensor_coo((fs::path(dir) / "train.txt").string());
  ds.dims = ds.train.dims;
  const auto valid_path = fs::path(dir) / "valid.txt";
  if (fs::exists(valid_path)) ds.valid = load_tensor_coo(valid_path.string());
  const auto test_path = fs::path(dir) / "test.txt";
  if (fs::exists(test_path)) ds.test = load_tensor_coo(test_path.string());
  const auto meta_path = fs::path(dir) / "meta.txt";
  if (fs::exists(meta_path)) {
    std::ifstream meta(meta_path);
    std::getline(meta, ds.provenance);
  }
  return ds;
}

}  // namespace ais
