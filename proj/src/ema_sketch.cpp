#include "emasketch/ema_sketch.hpp"

#include "emasketch/random.hpp"

#include <string>

namespace emasketch {

SketchConfig SketchConfig::for_rank(Index r, double beta, Index batch_size, Index warmup_iters) {
  SketchConfig c;
  c.r = r;
  c.k = 2 * r + 1;
  c.s = c.k;
  c.beta = beta;
  c.batch_size = batch_size;
  c.warmup_iters = warmup_iters;
  c.validate();
  return c;
}

void SketchConfig::validate() const {
  if (r < 1) throw ConfigError("sketch: rank must be >= 1");
  if (k != 2 * r + 1 || s != k) throw ConfigError("sketch: require k = s = 2r+1");
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("sketch: beta must lie in [0, 1)");
  if (warmup_iters < 1) throw ConfigError("sketch: warmup_iters must be >= 1");
  if (batch_size < 1) throw ConfigError("sketch: batch_size must be >= 1");
}

const Vector& NNProjectionSet::psi(Index layer) const {
  if (layer < 1 || layer > static_cast<Index>(Psi_per_layer.size()))
    throw ShapeError("projection set has no Psi for layer " + std::to_string(layer));
  return Psi_per_layer[static_cast<std::size_t>(layer - 1)];
}

NNProjectionSet make_nn_projections(std::uint64_t seed, const SketchConfig& config,
                                    Index layer_count) {
  config.validate();
  GaussianStream g(seed);
  NNProjectionSet p;
  p.Upsilon = g.normal_matrix(config.batch_size, config.k);
  p.Omega = g.normal_matrix(config.batch_size, config.k);
  p.Phi = g.normal_matrix(config.batch_size, config.s);
  p.Psi_per_layer.reserve(static_cast<std::size_t>(layer_count));
  for (Index l = 0; l < layer_count; ++l) p.Psi_per_layer.push_back(g.normal_vector(config.s));
  p.seed = seed;
  return p;
}

bool LayerSketchState::is_zero() const {
  return X_s.isZero(0.0) && Y_s.isZero(0.0) && Z_s.isZero(0.0);
}

LayerSketchState init_layer_sketch(const SketchConfig& config, Index d) {
  return init_layer_sketch(config, d, d);
}

LayerSketchState init_layer_sketch(const SketchConfig& config, Index d_in, Index d) {
  config.validate();
  if (d < 1 || d_in < 1) throw ShapeError("init_layer_sketch: layer width must be >= 1");
  LayerSketchState st;
  st.X_s = Matrix::Zero(d_in, config.k);
  st.Y_s = Matrix::Zero(d, config.k);
  st.Z_s = Matrix::Zero(d, config.s);
  st.d = d;
  st.d_in = d_in;
  return st;
}

void ema_update(LayerSketchState& state, const NNProjectionSet& proj, Index layer,
                const Matrix& A_prev, const Matrix& A_curr, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw ConfigError("ema_update: beta must lie in [0, 1)");
  const Index nb = proj.batch_size();
  require_shape(A_prev, nb, state.d_in, "ema_update: A_prev");
  require_shape(A_curr, nb, state.d, "ema_update: A_curr");
  const Vector& psi = proj.psi(layer);
  if (psi.size() != state.Z_s.cols() || proj.k() != state.Y_s.cols())
    throw ShapeError("ema_update: projection set does not match sketch rank");

  const double a = 1.0 - beta;
  state.X_s *= beta;
  state.X_s.noalias() += a * (A_prev.transpose() * proj.Upsilon);
  state.Y_s *= beta;
  state.Y_s.noalias() += a * (A_curr.transpose() * proj.Omega);
  state.Z_s *= beta;
  state.Z_s.noalias() += a * ((A_curr.transpose() * proj.Phi) * psi.asDiagonal());
  ++state.n_updates;
}

Matrix ema_weighted_activation_oracle(const std::vector<Matrix>& history, double beta) {
  if (history.empty()) throw ShapeError("ema oracle: empty history");
  const Index n = static_cast<Index>(history.size());
  Matrix acc = Matrix::Zero(history.front().cols(), history.front().rows());
  for (Index j = 1; j <= n; ++j) {
    double w = 1.0 - beta;
    for (Index p = 0; p < n - j; ++p) w *= beta;
    acc += w * history[static_cast<std::size_t>(j - 1)].transpose();
  }
  return acc;
}

}  // namespace emasketch
