#pragma once

#include <CLI11.hpp>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ais/dataset.hpp"
#include "ais/nonconvex.hpp"
#include "ais/postprocess.hpp"
#include "ais/solver.hpp"
#include "ais/tensor.hpp"

namespace ais {

namespace cli_detail {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CompleteOptions {
  std::string data;
  double lambda = 0.0;
  double lambda_hat = 0.0;
  double nu = 0.7;
  int power_iters = 3;
  int max_iter = 500;
  double rel_tol = 1e-4;
  std::uint64_t seed = 0;
  std::string solver = "ais";
  std::string reg = "nuclear";
  std::string loss = "square";
  bool post = false;
  std::string trace_path;
  std::string out_path;
  std::string lambda_scale;  // tensor only
};

inline LossKind parse_loss(const std::string& name) {
  if (name == "square") return LossKind::kSquare;
  if (name == "logistic") return LossKind::kLogistic;
  throw UsageError("unknown loss '" + name + "' (expected square|logistic)");
}

inline RegularizerKind parse_reg(const std::string& name) {
  if (name == "nuclear") return RegularizerKind::nuclear();
  const auto colon = name.find(':');
  const std::string head = name.substr(0, colon);
  if (colon == std::string::npos) {
    throw UsageError("regularizer '" + name + "' needs a parameter, e.g. tnn:5 or lsp:0.1");
  }
  const std::string arg = name.substr(colon + 1);
  try {
    if (head == "tnn") return RegularizerKind::tnn(std::stoi(arg));
    if (head == "capped") return RegularizerKind::capped_l1(std::stod(arg));
    if (head == "lsp") return RegularizerKind::lsp(std::stod(arg));
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception&) {
    throw UsageError("cannot parse regularizer parameter in '" + name + "'");
  }
  throw UsageError("unknown regularizer '" + name + "' (expected nuclear|tnn:R|capped:T|lsp:T)");
}

inline SolverConfig make_config(const CompleteOptions& o) {
  SolverConfig cfg;
  cfg.lambda = o.lambda;
  cfg.lambda_hat = o.lambda_hat;
  cfg.nu = o.nu;
  cfg.power_iters = o.power_iters;
  cfg.max_iter = o.max_iter;
  cfg.rel_tol = o.rel_tol;
  cfg.seed = o.seed;
  return cfg;
}

inline void print_metrics(const char* label, const Metrics& m) {
  std::cout << label;
  if (m.nmse) std::cout << " nmse=" << *m.nmse;
  if (m.rmse) std::cout << " rmse=" << *m.rmse;
  if (m.accuracy) std::cout << " accuracy=" << *m.accuracy;
  std::cout << " rank=";
  for (std::size_t i = 0; i < m.ranks.size(); ++i) std::cout << (i ? "," : "") << m.ranks[i];
  std::cout << "\n";
}

inline int run_complete_matrix(const CompleteOptions& o) {
  namespace fs = std::filesystem;
  MatrixDataset ds;
  if (fs::is_directory(o.data)) {
    ds = load_matrix_dataset(o.data);
  } else {
    ds.train = load_coo(o.data);
    ds.rows = ds.train.rows;
    ds.cols = ds.train.cols;
  }
  const LossKind loss = parse_loss(o.loss);
  const RegularizerKind reg = parse_reg(o.reg);
  SolverConfig cfg = make_config(o);
  const SparseCoo* validation = ds.valid.nnz() > 0 ? &ds.valid : nullptr;

  SolveResult result;
  if (reg.type == RegularizerKind::Type::kNuclear) {
    if (o.solver == "ais") {
      result = ais_impute(ds.train, loss, cfg, validation);
    } else if (o.solver == "apg-exact") {
      result = apg_exact(ds.train, loss, cfg, validation);
    } else if (o.solver == "soft-impute") {
      if (loss != LossKind::kSquare) throw UsageError("soft-impute supports the square loss only");
      result = soft_impute(ds.train, cfg, validation);
    } else {
      throw UsageError("unknown solver '" + o.solver + "' (expected ais|soft-impute|apg-exact)");
    }
  } else {
    if (o.solver != "ais") {
      throw UsageError("nonconvex regularizers run on the ais solver");
    }
    if (reg.type == RegularizerKind::Type::kTnn) {
      result = dc_tnn(ds.train, loss, reg.trunc_rank, cfg, validation);
    } else {
      result = dc_weighted(ds.train, loss, reg, cfg, validation);
    }
  }

  LowRankFactors final_factors = result.factors;
  if (o.post) {
    if (final_factors.rank() == 0) {
      std::cout << "post-processing skipped: rank-0 solution\n";
    } else {
      const SpectrumFit fit = refit_matrix(final_factors, ds.train, loss);
      final_factors = with_spectrum(final_factors, fit.theta);
      std::cout << "post-processing: iterations=" << fit.iterations
                << " value=" << fit.final_value << "\n";
    }
  }

  std::cout << "final objective=" << objective(loss, final_factors, ds.train, cfg.lambda)
            << " rank=" << final_factors.rank() << " iterations=" << result.trace.records.size()
            << "\n";
  if (ds.valid.nnz() > 0) {
    print_metrics("validation:", evaluate(final_factors, ds.valid, EvalTask::kRegression));
  }
  if (ds.test.nnz() > 0) {
    const EvalTask task = loss == LossKind::kLogistic ? EvalTask::kSign : EvalTask::kRegression;
    print_metrics("test:", evaluate(final_factors, ds.test, task));
  }
  if (!o.trace_path.empty()) write_trace_csv(o.trace_path, result.trace);
  if (!o.out_path.empty()) save_factors(o.out_path, final_factors);
  return 0;
}

inline int run_complete_tensor(const CompleteOptions& o) {
  namespace fs = std::filesystem;
  TensorDataset ds;
  if (fs::is_directory(o.data)) {
    ds = load_tensor_dataset(o.data);
  } else {
    ds.train = load_tensor_coo(o.data);
    ds.dims = ds.train.dims;
  }
  const LossKind loss = parse_loss(o.loss);
  if (o.reg != "nuclear") {
    throw UsageError("tensor completion supports the nuclear regularizer only");
  }
  if (o.solver != "ais") {
    throw UsageError("tensor completion runs on the ais solver");
  }
  SolverConfig cfg = make_config(o);
  const int D = static_cast<int>(ds.dims.size());

  std::vector<double> scale;
  if (!o.lambda_scale.empty()) {
    std::istringstream ss(o.lambda_scale);
    std::string tok;
    while (std::getline(ss, tok, ',')) scale.push_back(std::stod(tok));
    if (static_cast<int>(scale.size()) != D) {
      throw UsageError("--lambda-scale needs one factor per mode");
    }
  } else {
    scale.assign(static_cast<std::size_t>(D), 1.0);
    if (D == 3) {
      // Heavier penalty on the short last mode, matching the m x m x 3 setup.
      scale[2] = std::sqrt(static_cast<double>(ds.dims[0]) / 3.0);
    }
  }
  std::vector<double> lambdas(scale.size());
  for (std::size_t d = 0; d < scale.size(); ++d) lambdas[d] = scale[d] * cfg.lambda;

  const SparseTensorCoo* validation = ds.valid.nnz() > 0 ? &ds.valid : nullptr;
  TensorSolveResult result = tensor_ais_impute(ds.train, loss, lambdas, cfg, validation);

  LatentDecomposition final_decomp = result.decomposition;
  if (o.post) {
    Index total = 0;
    for (const auto& f : final_decomp.modes) total += f.rank();
    if (total == 0) {
      std::cout << "post-processing skipped: rank-0 solution\n";
    } else {
      const SpectrumFit fit = refit_tensor(final_decomp, ds.train, loss);
      final_decomp = with_spectrum(final_decomp, fit.theta);
      std::cout << "post-processing: iterations=" << fit.iterations
                << " value=" << fit.final_value << "\n";
    }
  }

  std::cout << "iterations=" << result.trace.records.size() << " mode ranks=";
  const auto ranks = final_decomp.mode_ranks();
  for (std::size_t i = 0; i < ranks.size(); ++i) std::cout << (i ? "," : "") << ranks[i];
  std::cout << "\n";
  if (ds.valid.nnz() > 0) {
    print_metrics("validation:", evaluate(final_decomp, ds.valid, EvalTask::kRegression));
  }
  if (ds.test.nnz() > 0) {
    const EvalTask task = loss == LossKind::kLogistic ? EvalTask::kSign : EvalTask::kRegression;
    print_metrics("test:", evaluate(final_decomp, ds.test, task));
  }
  if (!o.trace_path.empty()) write_trace_csv(o.trace_path, result.trace);
  if (!o.out_path.empty()) save_decomposition(o.out_path, final_decomp);
  return 0;
}

inline int run_eval(const std::string& factors_path, const std::string& data,
                    const std::string& task_name) {
  namespace fs = std::filesystem;
  EvalTask task;
  if (task_name == "regression") {
    task = EvalTask::kRegression;
  } else if (task_name == "sign") {
    task = EvalTask::kSign;
  } else {
    throw UsageError("unknown task '" + task_name + "' (expected regression|sign)");
  }
  if (factor_file_is_tensor(factors_path)) {
    const LatentDecomposition X = load_decomposition(factors_path);
    SparseTensorCoo test = fs::is_directory(data)
                               ? load_tensor_coo((fs::path(data) / "test.txt").string())
                               : load_tensor_coo(data);
    print_metrics("test:", evaluate(X, test, task));
  } else {
    const LowRankFactors X = load_factors(factors_path);
    SparseCoo test = fs::is_directory(data) ? load_coo((fs::path(data) / "test.txt").string())
                                            : load_coo(data);
    print_metrics("test:", evaluate(X, test, task));
  }
  return 0;
}

inline void add_complete_flags(CLI::App* cmd, CompleteOptions& o, bool tensor) {
  cmd->add_option("--data", o.data, "dataset directory (train/valid/test) or a single entry file")
      ->required();
  cmd->add_option("--lambda", o.lambda, "regularization weight")->required();
  cmd->add_option("--lambda-hat", o.lambda_hat,
                  "continuation start (default: estimated spectral norm)");
  cmd->add_option("--nu", o.nu, "continuation decay in (0,1)");
  cmd->add_option("--power-iters", o.power_iters, "power iterations J per proximal step");
  cmd->add_option("--max-iter", o.max_iter, "iteration cap");
  cmd->add_option("--tol", o.rel_tol, "relative objective-change tolerance");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--solver", o.solver, "ais|soft-impute|apg-exact");
  cmd->add_option("--reg", o.reg, "nuclear|tnn:R|capped:T|lsp:T");
  cmd->add_option("--loss", o.loss, "square|logistic");
  cmd->add_flag("--post", o.post, "re-fit the spectrum on the training entries");
  cmd->add_option("--trace", o.trace_path, "write per-iteration CSV trace here");
  cmd->add_option("--out", o.out_path, "write the factor file here");
  if (tensor) {
    cmd->add_option("--lambda-scale", o.lambda_scale,
                    "comma-separated per-mode multipliers of --lambda");
  }
}

}  // namespace cli_detail

/// Command-line entry point. Exit codes: 0 success, 1 usage or input error,
/// 2 numeric failure (divergence, refused instance).
inline int cli_main(int argc, const char* const* argv) {
  using cli_detail::CompleteOptions;
  CLI::App app{"Low-rank matrix and tensor completion (accelerated inexact Soft-Impute)"};
  app.require_subcommand(1);

  // synth-matrix
  Index synth_m = 0, synth_rank = 5;
  double synth_noise = 0.05;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* sm = app.add_subcommand("synth-matrix", "generate a synthetic completion instance");
  sm->add_option("--m", synth_m, "side length")->required();
  sm->add_option("--rank", synth_rank, "ground-truth rank");
  sm->add_option("--noise-sd", synth_noise, "noise standard deviation");
  sm->add_option("--seed", synth_seed, "random seed");
  sm->add_option("--out", synth_out, "output dataset directory")->required();

  // synth-tensor
  Index tsynth_m = 0;
  std::uint64_t tsynth_seed = 0;
  std::string tsynth_out;
  auto* st = app.add_subcommand("synth-tensor", "generate a synthetic m x m x 3 tensor instance");
  st->add_option("--m", tsynth_m, "side length of modes 1-2")->required();
  st->add_option("--seed", tsynth_seed, "random seed");
  st->add_option("--out", tsynth_out, "output dataset directory")->required();

  // complete-matrix / complete-tensor
  CompleteOptions mat_opts, ten_opts;
  auto* cm = app.add_subcommand("complete-matrix", "solve a matrix completion instance");
  cli_detail::add_complete_flags(cm, mat_opts, false);
  auto* ct = app.add_subcommand("complete-tensor", "solve a tensor completion instance");
  cli_detail::add_complete_flags(ct, ten_opts, true);

  // eval
  std::string eval_factors, eval_data, eval_task = "regression";
  auto* ev = app.add_subcommand("eval", "evaluate a factor file against a test split");
  ev->add_option("--factors", eval_factors, "factor file")->required();
  ev->add_option("--data", eval_data, "dataset directory or entry file")->required();
  ev->add_option("--task", eval_task, "regression|sign");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (sm->parsed()) {
      const MatrixDataset ds = synth_matrix(synth_m, synth_rank, synth_noise, synth_seed);
      save_matrix_dataset(synth_out, ds);
      const auto observed = ds.train.nnz() + ds.valid.nnz();
      std::cout << "wrote " << synth_out << ": " << ds.rows << "x" << ds.cols << ", " << observed
                << " observed entries (sparsity "
                << 100.0 * static_cast<double>(observed) /
                       (static_cast<double>(ds.rows) * static_cast<double>(ds.cols))
                << "%)\n";
      return 0;
    }
    if (st->parsed()) {
      const TensorDataset ds = synth_tensor(tsynth_m, tsynth_seed);
      save_tensor_dataset(tsynth_out, ds);
      const auto observed = ds.train.nnz() + ds.valid.nnz();
      std::cout << "wrote " << tsynth_out << ": " << ds.dims[0] << "x" << ds.dims[1] << "x"
                << ds.dims[2] << ", " << observed << " observed entries\n";
      return 0;
    }
    if (cm->parsed()) return cli_detail::run_complete_matrix(mat_opts);
    if (ct->parsed()) return cli_detail::run_complete_tensor(ten_opts);
    if (ev->parsed()) return cli_detail::run_eval(eval_factors, eval_data, eval_task);
  } catch (const SolverError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const cli_detail::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace ais
