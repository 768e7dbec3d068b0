#include "emasketch/network.hpp"

#include "emasketch/random.hpp"
#include "emasketch/reconstruction.hpp"

#include <algorithm>
#include <cmath>

namespace emasketch {

std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

std::string_view to_string(OutputKind o) {
  return o == OutputKind::softmax_xent ? "softmax-xent" : "mse";
}

std::string_view to_string(GradMode m) {
  switch (m) {
    case GradMode::exact: return "exact";
    case GradMode::sketched: return "sketched";
    case GradMode::monitor_only: return "monitor-only";
  }
  return "?";
}

bool MLPConfig::is_sketched(Index l) const {
  return std::binary_search(sketched_layers.begin(), sketched_layers.end(), l);
}

void MLPConfig::validate() const {
  if (layer_dims.size() < 2) throw ConfigError("mlp: need at least one layer");
  for (Index d : layer_dims)
    if (d < 1) throw ConfigError("mlp: layer widths must be >= 1");
  if (!std::is_sorted(sketched_layers.begin(), sketched_layers.end()) ||
      std::adjacent_find(sketched_layers.begin(), sketched_layers.end()) != sketched_layers.end())
    throw ConfigError("mlp: sketched_layers must be sorted and unique");
  if (grad_mode == GradMode::exact && !sketched_layers.empty())
    throw ConfigError("mlp: sketched_layers must be empty in exact mode");
  const Index L = num_layers();
  for (Index l : sketched_layers) {
    if (l < 1 || l > L - 1)
      throw ConfigError("mlp: sketched layer " + std::to_string(l) + " outside 1.." +
                        std::to_string(L - 1) + " (the output layer is never sketched)");
    if (grad_mode == GradMode::sketched && width(l - 1) != width(l))
      throw ConfigError("mlp: sketched layer " + std::to_string(l) +
                        " must have equal input and output width");
  }
}

std::vector<Index> MLPConfig::uniform_hidden_layers(const std::vector<Index>& dims) {
  std::vector<Index> out;
  const Index L = static_cast<Index>(dims.size()) - 1;
  for (Index l = 1; l <= L - 1; ++l)
    if (dims[static_cast<std::size_t>(l - 1)] == dims[static_cast<std::size_t>(l)])
      out.push_back(l);
  return out;
}

std::vector<Index> MLPConfig::all_hidden_layers(const std::vector<Index>& dims) {
  std::vector<Index> out;
  for (Index l = 1; l + 1 < static_cast<Index>(dims.size()); ++l) out.push_back(l);
  return out;
}

Params init_params(const MLPConfig& config, std::uint64_t seed, const InitOptions& opts) {
  config.validate();
  InitScheme scheme = opts.scheme;
  if (scheme == InitScheme::activation_default)
    scheme = config.activation == Activation::relu ? InitScheme::kaiming_uniform
                                                   : InitScheme::xavier_uniform;
  GaussianStream rng(seed);
  Params params;
  const Index L = config.num_layers();
  for (Index l = 1; l <= L; ++l) {
    const Index fan_in = config.width(l - 1);
    const Index fan_out = config.width(l);
    const double bound =
        scheme == InitScheme::kaiming_uniform
            ? opts.gain * std::sqrt(6.0 / static_cast<double>(fan_in))
            : opts.gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    LayerParams p;
    p.W.resize(fan_out, fan_in);
    for (Index j = 0; j < fan_in; ++j)
      for (Index i = 0; i < fan_out; ++i) p.W(i, j) = rng.uniform(-bound, bound);
    p.b = Vector::Constant(fan_out, l < L ? opts.hidden_bias : 0.0);
    params.push_back(std::move(p));
  }
  return params;
}

SketchBank SketchBank::create(const SketchConfig& config, const MLPConfig& mlp,
                              std::uint64_t seed) {
  SketchBank bank;
  bank.config = config;
  bank.proj = make_nn_projections(seed, config, mlp.num_layers());
  for (Index l : mlp.sketched_layers)
    bank.states.emplace(l, init_layer_sketch(config, mlp.width(l - 1), mlp.width(l)));
  return bank;
}

LayerSketchState& SketchBank::at(Index layer) {
  auto it = states.find(layer);
  if (it == states.end()) throw ShapeError("no sketch state for layer " + std::to_string(layer));
  return it->second;
}

const LayerSketchState& SketchBank::at(Index layer) const {
  auto it = states.find(layer);
  if (it == states.end()) throw ShapeError("no sketch state for layer " + std::to_string(layer));
  return it->second;
}

bool SketchBank::is_warm(Index layer) const {
  return at(layer).n_updates > static_cast<std::uint64_t>(config.warmup_iters);
}

namespace {

void apply_activation(Matrix& z, Activation act) {
  if (act == Activation::tanh)
    z = z.array().tanh().matrix();
  else
    z = z.cwiseMax(0.0);
}

// Multiplies g by act'(z) in place.
void apply_activation_grad(Matrix& g, const Matrix& z, Activation act) {
  if (act == Activation::tanh)
    g.array() *= 1.0 - z.array().tanh().square();
  else
    g.array() *= (z.array() > 0.0).cast<double>();
}

void check_params(const Params& params, const MLPConfig& config) {
  if (static_cast<Index>(params.size()) != config.num_layers())
    throw ShapeError("params: layer count does not match config");
  for (Index l = 1; l <= config.num_layers(); ++l) {
    const LayerParams& p = params[static_cast<std::size_t>(l - 1)];
    require_shape(p.W, config.width(l), config.width(l - 1), "params: W");
    if (p.b.size() != config.width(l)) throw ShapeError("params: bias length mismatch");
  }
}

}  // namespace

ForwardResult forward(const Params& params, const MLPConfig& config, const Matrix& X_batch,
                      SketchBank* bank) {
  config.validate();
  check_params(params, config);
  if (X_batch.cols() != config.width(0))
    throw ShapeError("forward: input has " + std::to_string(X_batch.cols()) +
                     " features, expected " + std::to_string(config.width(0)));
  const bool sketching = config.grad_mode != GradMode::exact && !config.sketched_layers.empty();
  if (sketching && bank == nullptr) throw ShapeError("forward: sketching mode needs a SketchBank");
  if (sketching && bank->proj.batch_size() != X_batch.rows())
    throw ShapeError("forward: batch has " + std::to_string(X_batch.rows()) +
                     " rows, sketch projections expect " +
                     std::to_string(bank->proj.batch_size()));

  const Index L = config.num_layers();
  ForwardResult out;
  out.trace.activations.resize(static_cast<std::size_t>(L));
  out.trace.pre_activations.reserve(static_cast<std::size_t>(L));

  Matrix prev = X_batch;
  for (Index l = 1; l <= L; ++l) {
    const LayerParams& p = params[static_cast<std::size_t>(l - 1)];
    Matrix z = prev * p.W.transpose();
    z.rowwise() += p.b.transpose();
    Matrix a = z;
    if (l < L) apply_activation(a, config.activation);
    if (!a.allFinite())
      throw NumericalError("forward: non-finite activations at layer " + std::to_string(l));
    out.trace.pre_activations.push_back(std::move(z));

    bool retain_prev = true;
    if (sketching && config.is_sketched(l)) {
      ema_update(bank->at(l), bank->proj, l, prev, a, bank->config.beta);
    }
    // A[l-1] is dropped once layer l-1's sketch is warm (sketched mode only).
    if (config.grad_mode == GradMode::sketched && l - 1 >= 1 && config.is_sketched(l - 1) &&
        bank->is_warm(l - 1))
      retain_prev = false;
    if (retain_prev) out.trace.activations[static_cast<std::size_t>(l - 1)] = std::move(prev);
    prev = std::move(a);
  }
  out.logits = std::move(prev);
  return out;
}

Matrix predict(const Params& params, const MLPConfig& config, const Matrix& X) {
  check_params(params, config);
  if (X.cols() != config.width(0)) throw ShapeError("predict: input width mismatch");
  const Index L = config.num_layers();
  Matrix a = X;
  for (Index l = 1; l <= L; ++l) {
    const LayerParams& p = params[static_cast<std::size_t>(l - 1)];
    Matrix z = a * p.W.transpose();
    z.rowwise() += p.b.transpose();
    if (l < L) apply_activation(z, config.activation);
    a = std::move(z);
  }
  return a;
}

namespace {

GradientSet backward_impl(const ForwardTrace& trace, const Params& params,
                          const MLPConfig& config, const Matrix& delta_out,
                          const SketchBank* bank) {
  check_params(params, config);
  const Index L = config.num_layers();
  if (static_cast<Index>(trace.activations.size()) != L ||
      static_cast<Index>(trace.pre_activations.size()) != L)
    throw ShapeError("backward: trace does not match network depth");
  const Index nb = trace.pre_activations.back().rows();
  require_shape(delta_out, nb, config.width(L), "backward: delta_out");

  GradientSet g;
  g.dW.resize(static_cast<std::size_t>(L));
  g.db.resize(static_cast<std::size_t>(L));
  g.delta.resize(static_cast<std::size_t>(L));
  g.grad_input.resize(static_cast<std::size_t>(L));

  Matrix delta = delta_out;
  for (Index l = L; l >= 1; --l) {
    const auto idx = static_cast<std::size_t>(l - 1);
    const LayerParams& p = params[idx];
    const auto& stored = trace.activations[idx];
    if (stored.has_value()) {
      g.dW[idx].noalias() = delta.transpose() * *stored;
    } else if (bank != nullptr && config.is_sketched(l - 1)) {
      const ReconstructionResult rec = reconstruct_fused(bank->at(l - 1), bank->proj);
      g.dW[idx].noalias() = delta.transpose() * rec.A_tilde;
    } else {
      throw ShapeError("backward: activation A[" + std::to_string(l - 1) +
                       "] missing from trace and no sketch available");
    }
    g.db[idx] = delta.colwise().sum().transpose();
    g.grad_input[idx].noalias() = delta * p.W;
    g.delta[idx] = delta;
    if (l > 1) {
      Matrix next = g.grad_input[idx];
      apply_activation_grad(next, trace.pre_activations[idx - 1], config.activation);
      delta = std::move(next);
    }
  }
  return g;
}

}  // namespace

GradientSet backward_exact(const ForwardTrace& trace, const Params& params,
                           const MLPConfig& config, const Matrix& delta_out) {
  return backward_impl(trace, params, config, delta_out, nullptr);
}

GradientSet backward_sketched(const ForwardTrace& trace, const Params& params,
                              const MLPConfig& config, const Matrix& delta_out,
                              const SketchBank& bank) {
  return backward_impl(trace, params, config, delta_out, &bank);
}

LossResult loss_and_delta(const Matrix& logits, const Targets& targets, OutputKind kind) {
  const Index nb = logits.rows();
  if (nb == 0) throw ShapeError("loss: empty batch");
  LossResult out;
  if (kind == OutputKind::softmax_xent) {
    if (static_cast<Index>(targets.labels.size()) != nb)
      throw ShapeError("loss: label count does not match batch");
    out.delta_out.resize(nb, logits.cols());
    double total = 0.0;
    for (Index i = 0; i < nb; ++i) {
      const Index y = targets.labels[static_cast<std::size_t>(i)];
      if (y < 0 || y >= logits.cols())
        throw DataError("loss: label " + std::to_string(y) + " out of range");
      const double mx = logits.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
      const double sum = e.sum();
      total += std::log(sum) - (logits(i, y) - mx);
      out.delta_out.row(i) = e / sum;
      out.delta_out(i, y) -= 1.0;
    }
    out.loss = total / static_cast<double>(nb);
    out.delta_out /= static_cast<double>(nb);
  } else {
    require_shape(targets.values, nb, logits.cols(), "loss: regression targets");
    const Matrix diff = logits - targets.values;
    out.loss = diff.squaredNorm() / static_cast<double>(nb);
    out.delta_out = (2.0 / static_cast<double>(nb)) * diff;
  }
  return out;
}

AdamState AdamState::init(const Params& params, double lr, double beta1, double beta2,
                          double eps) {
  AdamState s;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& p : params) {
    s.mW.push_back(Matrix::Zero(p.W.rows(), p.W.cols()));
    s.vW.push_back(Matrix::Zero(p.W.rows(), p.W.cols()));
    s.mb.push_back(Vector::Zero(p.b.size()));
    s.vb.push_back(Vector::Zero(p.b.size()));
  }
  return s;
}

namespace {

template <typename P, typename G>
void adam_update(P& param, const G& grad, P& m, P& v, const AdamState& s, double c1, double c2) {
  m = s.beta1 * m + (1.0 - s.beta1) * grad;
  v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseAbs2();
  param.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
}

}  // namespace

void adam_step(Params& params, const GradientSet& grads, AdamState& adam) {
  if (grads.dW.size() != params.size() || adam.mW.size() != params.size())
    throw ShapeError("adam_step: layer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_shape(grads.dW[i], params[i].W.rows(), params[i].W.cols(), "adam_step: dW");
    if (!grads.dW[i].allFinite() || !grads.db[i].allFinite())
      throw NumericalError("adam_step: non-finite gradient at layer " + std::to_string(i + 1));
  }
  ++adam.t;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.t));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_update(params[i].W, grads.dW[i], adam.mW[i], adam.vW[i], adam, c1, c2);
    adam_update(params[i].b, grads.db[i], adam.mb[i], adam.vb[i], adam, c1, c2);
  }
}

void sgd_step(Params& params, const GradientSet& grads, double lr) {
  if (grads.dW.size() != params.size()) throw ShapeError("sgd_step: layer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!grads.dW[i].allFinite() || !grads.db[i].allFinite())
      throw NumericalError("sgd_step: non-finite gradient at layer " + std::to_string(i + 1));
    params[i].W -= lr * grads.dW[i];
    params[i].b -= lr * grads.db[i];
  }
}

}  // namespace emasketch
