#pragma once

// Two-stage least-squares reconstruction of batch activations from a layer's
// EMA sketches.
//
//   Y_s = Q_Y R_Y,  X_s = Q_X R_X,  X_s^T = P_X R_X'      (thin Householder QR)
//   C_inter = argmin |Q_Y C - Z_s|_F         = Q_Y^T Z_s
//   C       = argmin |P_X C - C_inter^T|_F   = P_X^T C_inter^T
//   G       = Q_Y C Q_X^T                     (d x d, feature space)
//   A_tilde = Omega pinv(Y_s) G               (N_b x d, batch space)
//
// The fused path evaluates A_tilde as ((Omega pinv(Y_s)) Q_Y) C Q_X^T and
// never holds a d x d buffer.

#include "emasketch/common.hpp"
#include "emasketch/ema_sketch.hpp"

#include <utility>
#include <vector>

namespace emasketch {

struct FeatureStructure {
  Matrix G_tilde;  // empty when produced by the fused path
  Matrix C;
  Matrix C_inter;
  Matrix Q_Y;
  Matrix Q_X;
  Matrix P_X;
  double residual_stage1 = 0.0;
  double residual_stage2 = 0.0;
};

struct ReconstructionResult {
  Matrix A_tilde;  // N_b x d
  double residual_stage1 = 0.0;
  double residual_stage2 = 0.0;
};

/// Records the shape of every dense intermediate a reconstruction allocates.
struct TransientLog {
  std::vector<std::pair<Index, Index>> shapes;

  void note(const Matrix& m) { shapes.emplace_back(m.rows(), m.cols()); }
  Index max_elements() const;
  bool contains(Index rows, Index cols) const;
};

FeatureStructure reconstruct_feature_structure(const LayerSketchState& state);

ReconstructionResult project_to_batch(const LayerSketchState& state, const NNProjectionSet& proj,
                                      const FeatureStructure& structure);

ReconstructionResult reconstruct_fused(const LayerSketchState& state, const NNProjectionSet& proj,
                                       TransientLog* log = nullptr);

}  // namespace emasketch
