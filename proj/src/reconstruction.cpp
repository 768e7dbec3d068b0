#include "emasketch/reconstruction.hpp"

#include "emasketch/sketch_core.hpp"

#include <algorithm>

namespace emasketch {

Index TransientLog::max_elements() const {
  Index best = 0;
  for (const auto& [r, c] : shapes) best = std::max(best, r * c);
  return best;
}

bool TransientLog::contains(Index rows, Index cols) const {
  return std::any_of(shapes.begin(), shapes.end(),
                     [&](const auto& s) { return s.first == rows && s.second == cols; });
}

namespace {

void check_reconstructible(const LayerSketchState& state) {
  if (state.d_in != state.d)
    throw ShapeError("reconstruction requires equal input and output widths");
  if (state.Y_s.cols() != state.Z_s.cols())
    throw ShapeError("reconstruction requires k = s");
  if (state.n_updates == 0 || state.is_zero())
    throw NumericalError("reconstruction from a cold (all-zero) sketch; use the warmup path");
}

// Everything except the final products; shared by both paths.
FeatureStructure core_factors(const LayerSketchState& state, TransientLog* log) {
  check_reconstructible(state);
  FeatureStructure f;
  f.Q_Y = thin_qr(state.Y_s).Q;
  f.Q_X = thin_qr(state.X_s).Q;
  f.P_X = thin_qr(state.X_s.transpose()).Q;

  f.C_inter = f.Q_Y.transpose() * state.Z_s;
  f.residual_stage1 = (state.Z_s - f.Q_Y * f.C_inter).norm();

  const Matrix target = f.C_inter.transpose();
  f.C = f.P_X.transpose() * target;
  f.residual_stage2 = (target - f.P_X * f.C).norm();

  if (log != nullptr) {
    log->note(f.Q_Y);
    log->note(f.Q_X);
    log->note(f.P_X);
    log->note(f.C_inter);
    log->note(f.C);
  }
  return f;
}

}  // namespace

FeatureStructure reconstruct_feature_structure(const LayerSketchState& state) {
  FeatureStructure f = core_factors(state, nullptr);
  f.G_tilde = f.Q_Y * f.C * f.Q_X.transpose();
  return f;
}

ReconstructionResult project_to_batch(const LayerSketchState& state, const NNProjectionSet& proj,
                                      const FeatureStructure& structure) {
  require_shape(structure.G_tilde, state.d, state.d, "project_to_batch: G_tilde");
  if (proj.Omega.cols() != state.Y_s.cols())
    throw ShapeError("project_to_batch: Omega rank does not match sketch");
  ReconstructionResult out;
  out.A_tilde = proj.Omega * pinv(state.Y_s) * structure.G_tilde;
  out.residual_stage1 = structure.residual_stage1;
  out.residual_stage2 = structure.residual_stage2;
  if (!out.A_tilde.allFinite()) throw NumericalError("project_to_batch: non-finite result");
  return out;
}

ReconstructionResult reconstruct_fused(const LayerSketchState& state, const NNProjectionSet& proj,
                                       TransientLog* log) {
  if (proj.Omega.cols() != state.Y_s.cols())
    throw ShapeError("reconstruct_fused: Omega rank does not match sketch");
  const FeatureStructure f = core_factors(state, log);

  const Matrix y_pinv = pinv(state.Y_s);          // k x d
  const Matrix lift = proj.Omega * y_pinv;        // N_b x d
  const Matrix coeff = (lift * f.Q_Y) * f.C;      // N_b x k
  ReconstructionResult out;
  out.A_tilde = coeff * f.Q_X.transpose();        // N_b x d
  out.residual_stage1 = f.residual_stage1;
  out.residual_stage2 = f.residual_stage2;
  if (log != nullptr) {
    log->note(y_pinv);
    log->note(lift);
    log->note(coeff);
    log->note(out.A_tilde);
  }
  if (!out.A_tilde.allFinite()) throw NumericalError("reconstruct_fused: non-finite result");
  return out;
}

}  // namespace emasketch
