#pragma once

// Per-layer exponential-moving-average sketches of batch activations.
//
// For a layer l with input activations A_prev (N_b x d_in) and output
// activations A_curr (N_b x d):
//
//   X_s <- beta X_s + (1 - beta) A_prev^T Upsilon
//   Y_s <- beta Y_s + (1 - beta) A_curr^T Omega
//   Z_s <- beta Z_s + (1 - beta) (A_curr^T Phi) . diag(Psi_l)
//
// Upsilon, Omega, Phi (N_b x k) are shared by every layer; Psi_l (length s)
// is layer specific. No bias correction is applied.

#include "emasketch/common.hpp"

#include <cstdint>
#include <vector>

namespace emasketch {

struct SketchConfig {
  Index r = 2;
  Index k = 5;
  Index s = 5;
  double beta = 0.95;
  Index warmup_iters = 5;
  Index batch_size = 128;

  static SketchConfig for_rank(Index r, double beta, Index batch_size, Index warmup_iters = 5);
  void validate() const;
};

struct NNProjectionSet {
  Matrix Upsilon;                   // N_b x k
  Matrix Omega;                     // N_b x k
  Matrix Phi;                       // N_b x s
  std::vector<Vector> Psi_per_layer;  // index l-1 for layer l, length s each
  std::uint64_t seed = 0;

  const Vector& psi(Index layer) const;
  Index batch_size() const { return Omega.rows(); }
  Index k() const { return Omega.cols(); }
};

/// Generation order: Upsilon, Omega, Phi (column-major), then Psi_1..Psi_L.
NNProjectionSet make_nn_projections(std::uint64_t seed, const SketchConfig& config,
                                    Index layer_count);

struct LayerSketchState {
  Matrix X_s;  // d_in x k
  Matrix Y_s;  // d x k
  Matrix Z_s;  // d x s
  Index d = 0;
  Index d_in = 0;
  std::uint64_t n_updates = 0;

  bool is_zero() const;
  bool operator==(const LayerSketchState&) const = default;
};

LayerSketchState init_layer_sketch(const SketchConfig& config, Index d);
LayerSketchState init_layer_sketch(const SketchConfig& config, Index d_in, Index d);

/// One EMA step; `layer` is the 1-based layer index selecting Psi.
void ema_update(LayerSketchState& state, const NNProjectionSet& proj, Index layer,
                const Matrix& A_prev, const Matrix& A_curr, double beta);

/// (1 - beta) sum_j beta^{n-j} A(j)^T over a batch history, formed densely.
/// Only for verification; the training path never materializes it.
Matrix ema_weighted_activation_oracle(const std::vector<Matrix>& history, double beta);

}  // namespace emasketch
