#pragma once

// Feedforward MLP with hand-written backpropagation.
//
// Layer l (1-based, l = 1..L) computes A[l] = act(A[l-1] W_l^T + 1 b_l^T);
// the output layer l = L is linear. A sketched layer l keeps an EMA sketch fed
// by (A[l-1], A[l]) and, once warm, A[l] is not retained in the trace: the
// weight gradient of layer l+1 is then formed from the reconstruction of A[l].
// Error signals delta are always propagated exactly.

#include "emasketch/common.hpp"
#include "emasketch/ema_sketch.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emasketch {

enum class Activation { tanh, relu };
enum class OutputKind { softmax_xent, mse };
enum class GradMode { exact, sketched, monitor_only };

std::string_view to_string(Activation a);
std::string_view to_string(OutputKind o);
std::string_view to_string(GradMode m);

struct MLPConfig {
  std::vector<Index> layer_dims;  // d_0 .. d_L
  Activation activation = Activation::tanh;
  OutputKind output = OutputKind::softmax_xent;
  std::vector<Index> sketched_layers;  // sorted, subset of 1..L-1
  GradMode grad_mode = GradMode::exact;

  Index num_layers() const { return static_cast<Index>(layer_dims.size()) - 1; }
  Index width(Index l) const { return layer_dims.at(static_cast<std::size_t>(l)); }
  bool is_sketched(Index l) const;
  void validate() const;

  /// Hidden layers whose input and output widths agree: l in 1..L-1 with d_{l-1} = d_l.
  static std::vector<Index> uniform_hidden_layers(const std::vector<Index>& dims);
  /// Every hidden layer 1..L-1 (monitoring does not need equal widths).
  static std::vector<Index> all_hidden_layers(const std::vector<Index>& dims);
};

struct LayerParams {
  Matrix W;  // d_l x d_{l-1}
  Vector b;  // d_l

  bool operator==(const LayerParams&) const = default;
};

using Params = std::vector<LayerParams>;  // index l-1 for layer l

enum class InitScheme { activation_default, kaiming_uniform, xavier_uniform };

struct InitOptions {
  InitScheme scheme = InitScheme::activation_default;
  double gain = 1.0;
  double hidden_bias = 0.0;  // constant bias for layers 1..L-1; output bias is 0
};

/// Kaiming-uniform (bound sqrt(6/fan_in)) for relu, Xavier-uniform
/// (bound gain*sqrt(6/(fan_in+fan_out))) for tanh, unless overridden.
Params init_params(const MLPConfig& config, std::uint64_t seed, const InitOptions& opts = {});

/// Projections plus one sketch state per sketched layer.
struct SketchBank {
  SketchConfig config;
  NNProjectionSet proj;
  std::map<Index, LayerSketchState> states;

  static SketchBank create(const SketchConfig& config, const MLPConfig& mlp, std::uint64_t seed);
  LayerSketchState& at(Index layer);
  const LayerSketchState& at(Index layer) const;
  bool is_warm(Index layer) const;
};

struct ForwardTrace {
  std::vector<std::optional<Matrix>> activations;  // index 0..L-1 (A[0] = input)
  std::vector<Matrix> pre_activations;             // index l-1 for layer l

  bool has_activation(Index l) const {
    return activations.at(static_cast<std::size_t>(l)).has_value();
  }
};

struct ForwardResult {
  Matrix logits;
  ForwardTrace trace;
};

/// In sketched / monitor-only modes `bank` must be non-null and every sketched
/// layer receives one EMA update.
ForwardResult forward(const Params& params, const MLPConfig& config, const Matrix& X_batch,
                      SketchBank* bank = nullptr);

/// Logits only; no trace, no sketch updates.
Matrix predict(const Params& params, const MLPConfig& config, const Matrix& X);

struct GradientSet {
  std::vector<Matrix> dW;
  std::vector<Vector> db;
  std::vector<Matrix> delta;       // dLoss/d(pre-activation) of layer l, N_b x d_l
  std::vector<Matrix> grad_input;  // dLoss/dA[l-1] = delta_l W_l, N_b x d_{l-1}
};

GradientSet backward_exact(const ForwardTrace& trace, const Params& params,
                           const MLPConfig& config, const Matrix& delta_out);

/// Uses stored activations where present and reconstruct_fused otherwise.
GradientSet backward_sketched(const ForwardTrace& trace, const Params& params,
                              const MLPConfig& config, const Matrix& delta_out,
                              const SketchBank& bank);

struct Targets {
  std::vector<Index> labels;  // classification
  Matrix values;              // regression

  static Targets classes(std::vector<Index> labels) { return {std::move(labels), {}}; }
  static Targets regression(Matrix values) { return {{}, std::move(values)}; }
};

struct LossResult {
  double loss = 0.0;
  Matrix delta_out;
};

/// Mean softmax cross-entropy (delta = (softmax - onehot)/N_b) or
/// MSE = (1/N_b) sum |y_hat - y|^2 (delta = 2(y_hat - y)/N_b).
LossResult loss_and_delta(const Matrix& logits, const Targets& targets, OutputKind kind);

struct AdamState {
  std::vector<Matrix> mW, vW;
  std::vector<Vector> mb, vb;
  std::uint64_t t = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(const Params& params, double lr, double beta1 = 0.9,
                        double beta2 = 0.999, double eps = 1e-8);
};

void adam_step(Params& params, const GradientSet& grads, AdamState& adam);
void sgd_step(Params& params, const GradientSet& grads, double lr);

}  // namespace emasketch
