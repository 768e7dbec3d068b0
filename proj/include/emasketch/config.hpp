#pragma once

// Experiment configuration: one JSON document, unknown keys rejected.
//
// {
//   "mode": "exact" | "sketched-fixed" | "sketched-adaptive" | "monitor-only",
//   "dataset": {
//     "kind": "mnist" | "synthetic-classify" | "synthetic-regress",
//     "path": "data/mnist",        // mnist only
//     "train_limit": 10000,        // mnist; 0 = all
//     "test_limit": 2000,          // mnist; 0 = all
//     "n_train": 2048, "n_test": 512, "input_dim": 64,
//     "classes": 10, "output_dim": 4, "latent_rank": 8,
//     "seed": 7                    // synthetic generator seed
//   },
//   "mlp": {
//     "hidden_width": 128, "hidden_layers": 3, "activation": "tanh",
//     "sketched_layers": [2, 3],   // default: see default_sketched_layers
//     "init": "default" | "kaiming" | "xavier", "init_gain": 1.0,
//     "hidden_bias": 0.0
//   },
//   "sketch": { "rank": 2, "beta": 0.95, "warmup_iters": 5 },   // required unless exact
//   "rank_controller": { "r0": 2, "r_min": 1, "r_max": 16, "p_decrease": 3,
//                        "p_increase": 2, "dr_down": 1, "dr_up": 2,
//                        "tau_reset": 16, "improve_rel_tol": 1e-4 },  // adaptive only
//   "optimizer": "adam" | "sgd", "lr": 1e-3, "batch_size": 128,
//   "epochs": 10, "seed": 1, "output_dir": "runs/default",
//   "record_wall_time": false, "diagnostics": false, "checkpoint": true
// }

#include "emasketch/common.hpp"
#include "emasketch/ema_sketch.hpp"
#include "emasketch/network.hpp"
#include "emasketch/rank_controller.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emasketch {

enum class RunMode { exact, sketched_fixed, sketched_adaptive, monitor_only };
enum class DatasetKind { mnist, synthetic_classify, synthetic_regress };
enum class OptimizerKind { adam, sgd };

std::string_view to_string(RunMode m);
std::string_view to_string(DatasetKind k);
std::string_view to_string(OptimizerKind k);
std::string_view to_string(InitScheme s);

struct DatasetConfig {
  DatasetKind kind = DatasetKind::mnist;
  std::string path = "data/mnist";
  Index train_limit = 10000;
  Index test_limit = 2000;
  Index n_train = 2048;
  Index n_test = 512;
  Index input_dim = 64;
  Index classes = 10;
  Index output_dim = 4;
  Index latent_rank = 8;
  std::uint64_t seed = 7;
};

struct MLPSection {
  Index hidden_width = 128;
  Index hidden_layers = 3;
  Activation activation = Activation::tanh;
  std::optional<std::vector<Index>> sketched_layers;
  InitScheme init = InitScheme::activation_default;
  double init_gain = 1.0;
  double hidden_bias = 0.0;
};

struct SketchSection {
  Index rank = 2;
  double beta = 0.95;
  Index warmup_iters = 5;
};

struct ExperimentConfig {
  RunMode mode = RunMode::exact;
  DatasetConfig dataset;
  MLPSection mlp;
  std::optional<SketchSection> sketch;
  std::optional<RankControllerConfig> rank_controller;
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  Index batch_size = 128;
  Index epochs = 10;
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  bool record_wall_time = false;
  bool diagnostics = false;
  bool checkpoint = true;

  void validate() const;

  /// d_0 and d_L follow from the dataset.
  Index input_dim() const;
  Index output_dim() const;
  OutputKind output_kind() const;
  MLPConfig mlp_config() const;
  /// Explicit list if given; otherwise every hidden layer in monitor-only mode
  /// and every equal-width hidden layer in sketched modes; empty when exact.
  std::vector<Index> default_sketched_layers() const;
  SketchConfig sketch_config() const;

  std::string to_json() const;
};

ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 784-128x3-10 MNIST (10k/2k subset), r = 2, beta = 0.95, 10 epochs.
ExperimentConfig desk_mnist_config(RunMode mode);
/// 512-wide hidden layers, full MNIST, 50 epochs.
void apply_paper_scale(ExperimentConfig& config);

}  // namespace emasketch
