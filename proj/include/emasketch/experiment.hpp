#pragma once

// Experiment runners behind the CLI.

#include "emasketch/checkpoint.hpp"
#include "emasketch/config.hpp"
#include "emasketch/dataset.hpp"
#include "emasketch/monitor.hpp"
#include "emasketch/rank_controller.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace emasketch {

struct ExperimentResult {
  std::vector<MonitorRecord> records;
  std::vector<double> batch_losses;  // every optimizer step, in order
  std::vector<double> epoch_loss;
  std::vector<double> epoch_train_acc;  // NaN for regression
  double test_metric = 0.0;  // accuracy (classification) or MSE (regression)
  std::vector<RankLogRow> rank_log;
  Params params;
  Index final_rank = 0;
  // Sketched-layer activations left out of the trace (sketched mode).
  Index dropped_activations = 0;
};

struct RunOptions {
  bool write_outputs = true;
  /// Reuse an already loaded dataset instead of reading config.dataset.
  const DataSplit* data = nullptr;
};

/// Seeds: init derive_seed(seed, 1), projections derive_seed(seed, 2),
/// shuffle derive_seed(seed, 3, epoch), rank-change base derive_seed(seed, 4).
/// Writes metrics.csv, memory_report.json, rank_decisions.csv, summary.json,
/// config.json, checkpoint.bin (if enabled) and diagnostics.csv (if enabled).
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

DataSplit load_dataset(const ExperimentConfig& config);

/// Deep relu MLP in monitor-only mode on MNIST (8 x 256 hidden; 16 x 1024 at
/// paper scale), r = 4, beta = 0.9, Kaiming init. Healthy: Adam, lr 1e-3.
/// Problematic: hidden bias -3, SGD lr 0.01. The alternative problematic
/// recipe (Xavier gain 0.5, tanh, SGD) is selected by xavier_tanh_variant.
struct MonitoringDemoOptions {
  bool healthy = true;
  std::uint64_t seed = 1;
  bool paper_scale = false;
  bool xavier_tanh_variant = false;
  std::string data_dir = "data/mnist";
  Index epochs = 10;
  std::string output_dir = "runs/monitor-demo";
};

ExperimentConfig monitoring_demo_config(const MonitoringDemoOptions& options);
ExperimentResult run_monitoring_demo(const MonitoringDemoOptions& options,
                                     const RunOptions& run = {});

/// Mean of the per-layer stable ranks over the last `last_epochs` epochs
/// (NaN if any of them is undefined).
double final_stable_rank(const ExperimentResult& result, Index last_epochs = 3);

struct BenchRow {
  std::string spectrum;
  Index r = 0;
  Index trials = 0;
  double mean_error = 0.0;
  double max_error = 0.0;
  double tail_energy = 0.0;
  double bound = 0.0;  // sqrt(6) * tail_energy
  double mean_relative_error = 0.0;
};

struct SketchBenchOptions {
  Index n_s = 200;
  Index n_t = 150;
  std::vector<Index> ranks{2, 5, 10};
  Index trials = 100;
  std::uint64_t seed = 1;
};

/// Singular values for the named spectrum: "geometric" 2^-i, "polynomial"
/// i^-2, "flat-then-zero" 1 for i <= 25 and 0 afterwards (i = 1..n).
Vector bench_spectrum(const std::string& name, Index n);
/// U = L diag(sigma) R^T with Haar-like orthonormal L, R drawn from `seed`.
Matrix matrix_with_spectrum(Index n_s, Index n_t, const Vector& sigma, std::uint64_t seed);

std::vector<BenchRow> run_sketch_bench(const SketchBenchOptions& options);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace emasketch
