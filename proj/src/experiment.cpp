#include "emasketch/experiment.hpp"

#include "emasketch/random.hpp"
#include "emasketch/sketch_core.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace emasketch {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<Index> shuffled_indices(Index n, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  GaussianStream rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    auto j = static_cast<Index>(rng.uniform() * static_cast<double>(i + 1));
    if (j > i) j = i;
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

Index count_correct(const Matrix& logits, const std::vector<Index>& labels) {
  Index correct = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return correct;
}

double evaluate(const Params& params, const MLPConfig& mlp, const Dataset& test) {
  const Matrix out = predict(params, mlp, test.X);
  if (test.is_classification())
    return static_cast<double>(count_correct(out, test.labels)) / static_cast<double>(test.size());
  return (out - test.targets).squaredNorm() / static_cast<double>(test.size());
}

double safe_stable_rank(const LayerSketchState& s) {
  if (s.Y_s.isZero(0.0)) return kNaN;
  return stable_rank(s);
}

Matrix activation_of(const Matrix& z, Activation act) {
  return act == Activation::tanh ? Matrix(z.array().tanh().matrix()) : Matrix(z.cwiseMax(0.0));
}

struct DiagnosticRow {
  Index epoch = 0;
  Index layer = 0;
  double max_spectral_norm = 0.0;
  double last_coherence = kNaN;  // |A(n) - A(n-1)|_F for the last batch pair
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace

DataSplit load_dataset(const ExperimentConfig& config) {
  const DatasetConfig& d = config.dataset;
  switch (d.kind) {
    case DatasetKind::mnist: return load_mnist(d.path, d.train_limit, d.test_limit);
    case DatasetKind::synthetic_classify:
    case DatasetKind::synthetic_regress: {
      const Index n = d.n_train + d.n_test;
      const Dataset all =
          d.kind == DatasetKind::synthetic_classify
              ? make_synthetic_lowrank(n, d.input_dim, d.classes, d.latent_rank, d.seed)
              : make_synthetic_regression(n, d.input_dim, d.output_dim, d.latent_rank, d.seed);
      return {slice_rows(all, 0, d.n_train), slice_rows(all, d.n_train, n)};
    }
  }
  throw ConfigError("unknown dataset kind");
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  DataSplit owned;
  if (options.data == nullptr) owned = load_dataset(config);
  const DataSplit& data = options.data != nullptr ? *options.data : owned;
  const Dataset& train = data.train;
  if (train.X.cols() != config.input_dim())
    throw DataError("dataset has " + std::to_string(train.X.cols()) + " features, expected " +
                    std::to_string(config.input_dim()));

  const MLPConfig mlp = config.mlp_config();
  const Index L = mlp.num_layers();
  const Index nb = config.batch_size;
  const Index batches = train.size() / nb;
  if (batches < 1) throw ConfigError("training set smaller than one batch");

  const std::uint64_t init_seed = derive_seed(config.seed, 1);
  const std::uint64_t proj_seed = derive_seed(config.seed, 2);
  const std::uint64_t rank_seed = derive_seed(config.seed, 4);

  ExperimentResult res;
  Params params = init_params(mlp, init_seed,
                              {config.mlp.init, config.mlp.init_gain, config.mlp.hidden_bias});

  std::optional<SketchBank> bank;
  if (config.mode != RunMode::exact) bank = SketchBank::create(config.sketch_config(), mlp, proj_seed);
  std::uint64_t current_proj_seed = bank ? proj_seed : 0;

  AdamState adam;
  if (config.optimizer == OptimizerKind::adam) adam = AdamState::init(params, config.lr);

  const RankControllerConfig rc_cfg = config.rank_controller.value_or(RankControllerConfig{});
  RankControllerState rc_state;
  if (config.rank_controller) rc_state = RankControllerState::initial(rc_cfg);

  std::vector<DiagnosticRow> diagnostics;
  std::vector<std::pair<Index, Index>> widths;
  for (Index l : mlp.sketched_layers) widths.emplace_back(mlp.width(l - 1), mlp.width(l));

  Matrix xb(nb, train.X.cols());
  for (Index epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = shuffled_indices(train.size(), derive_seed(config.seed, 3,
                                                                  static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    Index correct = 0;
    std::map<Index, DiagnosticRow> diag;
    std::map<Index, Matrix> prev_act;

    for (Index b = 0; b < batches; ++b) {
      Targets targets;
      Matrix yb;
      if (train.is_classification()) targets.labels.resize(static_cast<std::size_t>(nb));
      else yb.resize(nb, train.targets.cols());
      for (Index i = 0; i < nb; ++i) {
        const Index src = order[static_cast<std::size_t>(b * nb + i)];
        xb.row(i) = train.X.row(src);
        if (train.is_classification())
          targets.labels[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(src)];
        else
          yb.row(i) = train.targets.row(src);
      }
      if (!train.is_classification()) targets.values = std::move(yb);

      const ForwardResult fwd = forward(params, mlp, xb, bank ? &*bank : nullptr);
      if (mlp.grad_mode == GradMode::sketched) {
        for (Index l : mlp.sketched_layers) {
          if (bank->is_warm(l) && fwd.trace.has_activation(l))
            throw Error(fmt::format("trace retains A[{}] after warmup in sketched mode", l));
          if (!fwd.trace.has_activation(l)) ++res.dropped_activations;
        }
      }

      const LossResult lr = loss_and_delta(fwd.logits, targets, mlp.output);
      if (!std::isfinite(lr.loss))
        throw NumericalError(fmt::format("non-finite loss at epoch {}, batch {} (max |logit| {})",
                                         epoch, b + 1, fwd.logits.cwiseAbs().maxCoeff()));
      loss_sum += lr.loss;
      res.batch_losses.push_back(lr.loss);
      if (train.is_classification()) correct += count_correct(fwd.logits, targets.labels);

      if (config.diagnostics && bank) {
        for (Index l : mlp.sketched_layers) {
          const Matrix a = activation_of(fwd.trace.pre_activations[static_cast<std::size_t>(l - 1)],
                                         mlp.activation);
          Eigen::JacobiSVD<Matrix> svd(a);
          auto& row = diag[l];
          row.epoch = epoch;
          row.layer = l;
          row.max_spectral_norm = std::max(row.max_spectral_norm, svd.singularValues()(0));
          auto it = prev_act.find(l);
          if (it != prev_act.end()) row.last_coherence = (a - it->second).norm();
          prev_act[l] = a;
        }
      }

      const GradientSet grads = mlp.grad_mode == GradMode::sketched
                                    ? backward_sketched(fwd.trace, params, mlp, lr.delta_out, *bank)
                                    : backward_exact(fwd.trace, params, mlp, lr.delta_out);
      if (config.optimizer == OptimizerKind::adam)
        adam_step(params, grads, adam);
      else
        sgd_step(params, grads, config.lr);
    }

    const double mean_loss = loss_sum / static_cast<double>(batches);
    const double acc = train.is_classification()
                           ? static_cast<double>(correct) / static_cast<double>(batches * nb)
                           : kNaN;
    res.epoch_loss.push_back(mean_loss);
    res.epoch_train_acc.push_back(acc);
    const std::int64_t wall =
        config.record_wall_time
            ? std::chrono::duration_cast<std::chrono::milliseconds>(
                  std::chrono::steady_clock::now() - t0)
                  .count()
            : 0;

    if (bank) {
      for (const auto& [l, st] : bank->states)
        res.records.push_back({epoch, l, grad_norm_estimate(st), safe_stable_rank(st), mean_loss,
                               acc, bank->config.r, wall});
    } else {
      res.records.push_back({epoch, 0, kNaN, kNaN, mean_loss, acc, 0, wall});
    }
    for (auto& [l, row] : diag) diagnostics.push_back(row);

    if (config.rank_controller) {
      const Index before = rc_state.r;
      const RankDecision d = observe_epoch(rc_state, rc_cfg, mean_loss);
      res.rank_log.push_back({epoch, mean_loss, before, d});
      if (d.changes_rank()) {
        RankChange change = apply_rank_change(d.new_r, rank_seed, epoch, bank->config, L, widths);
        bank->config = change.config;
        bank->proj = std::move(change.proj);
        std::size_t i = 0;
        for (auto& [l, st] : bank->states) st = std::move(change.states[i++]);
        current_proj_seed = bank->proj.seed;
      }
    }
  }

  res.test_metric = evaluate(params, mlp, data.test);
  res.final_rank = bank ? bank->config.r : 0;

  if (options.write_outputs) {
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    {
      std::ofstream out(dir / "metrics.csv", std::ios::binary);
      emit_records(out, res.records);
    }
    {
      std::ofstream out(dir / "rank_decisions.csv", std::ios::binary);
      write_rank_log(out, res.rank_log);
    }
    const Index mem_layers = bank ? static_cast<Index>(bank->states.size()) : config.mlp.hidden_layers;
    const Index mem_rank = bank ? res.final_rank : config.sketch_config().r;
    write_text(dir / "memory_report.json",
               memory_report(mem_layers, config.mlp.hidden_width, mem_rank, nb, 5).to_json());
    write_text(dir / "config.json", config.to_json());
    if (config.diagnostics) {
      std::string text = "epoch,layer,max_spectral_norm,last_coherence\n";
      for (const auto& r : diagnostics)
        text += fmt::format("{},{},{:.16e},{}\n", r.epoch, r.layer, r.max_spectral_norm,
                            std::isnan(r.last_coherence) ? std::string("nan")
                                                         : fmt::format("{:.16e}", r.last_coherence));
      write_text(dir / "diagnostics.csv", text);
    }
    if (config.checkpoint) {
      Checkpoint ck;
      ck.config_json = config.to_json();
      ck.epoch = config.epochs;
      ck.params = params;
      if (config.optimizer == OptimizerKind::adam) ck.adam = adam;
      if (bank) {
        ck.sketch_config = bank->config;
        ck.projection_seed = current_proj_seed;
        for (const auto& [l, st] : bank->states) ck.sketches.emplace_back(l, st);
      }
      if (config.rank_controller) ck.rank_state = rc_state;
      write_checkpoint(dir / "checkpoint.bin", ck);
    }
    nlohmann::ordered_json s;
    s["mode"] = to_string(config.mode);
    s["rng_algorithm"] = GaussianStream::kAlgorithm;
    s["seed"] = config.seed;
    s["init_seed"] = init_seed;
    s["projection_seed"] = bank ? nlohmann::ordered_json(proj_seed) : nlohmann::ordered_json(nullptr);
    s["rank_seed_base"] = config.rank_controller ? nlohmann::ordered_json(rank_seed)
                                                 : nlohmann::ordered_json(nullptr);
    s["n_train"] = train.size();
    s["n_test"] = data.test.size();
    s["batches_per_epoch"] = batches;
    s["epochs"] = config.epochs;
    s["final_train_loss"] = res.epoch_loss.back();
    if (train.is_classification()) {
      s["final_train_accuracy"] = res.epoch_train_acc.back();
      s["test_accuracy"] = res.test_metric;
    } else {
      s["test_mse"] = res.test_metric;
    }
    s["final_rank"] = res.final_rank;
    write_text(dir / "summary.json", s.dump(2) + "\n");
  }
  res.params = std::move(params);
  return res;
}

ExperimentConfig monitoring_demo_config(const MonitoringDemoOptions& o) {
  ExperimentConfig c;
  c.mode = RunMode::monitor_only;
  c.dataset.kind = DatasetKind::mnist;
  c.dataset.path = o.data_dir;
  c.mlp.hidden_width = o.paper_scale ? 1024 : 256;
  c.mlp.hidden_layers = o.paper_scale ? 16 : 8;
  c.mlp.activation = Activation::relu;
  c.mlp.init = InitScheme::kaiming_uniform;
  c.sketch = SketchSection{4, 0.9, 5};
  c.optimizer = OptimizerKind::adam;
  c.lr = 1e-3;
  c.epochs = o.epochs;
  c.seed = o.seed;
  c.output_dir = o.output_dir;
  if (!o.healthy) {
    c.optimizer = OptimizerKind::sgd;
    c.lr = 0.01;
    if (o.xavier_tanh_variant) {
      c.mlp.activation = Activation::tanh;
      c.mlp.init = InitScheme::xavier_uniform;
      c.mlp.init_gain = 0.5;
    } else {
      c.mlp.hidden_bias = -3.0;
    }
  }
  if (o.paper_scale) {
    c.dataset.train_limit = 0;
    c.dataset.test_limit = 0;
  }
  return c;
}

ExperimentResult run_monitoring_demo(const MonitoringDemoOptions& options, const RunOptions& run) {
  return run_experiment(monitoring_demo_config(options), run);
}

double final_stable_rank(const ExperimentResult& result, Index last_epochs) {
  if (result.records.empty()) return kNaN;
  const std::int64_t last = result.records.back().epoch;
  double sum = 0.0;
  Index n = 0;
  for (const auto& r : result.records) {
    if (r.epoch > last - last_epochs) {
      sum += r.stable_rank;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : kNaN;
}

Vector bench_spectrum(const std::string& name, Index n) {
  Vector s(n);
  for (Index i = 1; i <= n; ++i) {
    const double x = static_cast<double>(i);
    if (name == "geometric")
      s(i - 1) = std::pow(2.0, -x);
    else if (name == "polynomial")
      s(i - 1) = 1.0 / (x * x);
    else if (name == "flat-then-zero")
      s(i - 1) = i <= 25 ? 1.0 : 0.0;
    else
      throw ConfigError("unknown spectrum '" + name + "'");
  }
  return s;
}

Matrix matrix_with_spectrum(Index n_s, Index n_t, const Vector& sigma, std::uint64_t seed) {
  const Index m = std::min(n_s, n_t);
  if (sigma.size() != m) throw ShapeError("matrix_with_spectrum: need min(n_s, n_t) values");
  GaussianStream rng(seed);
  const Matrix left = thin_qr(rng.normal_matrix(n_s, m)).Q;
  const Matrix right = thin_qr(rng.normal_matrix(n_t, m)).Q;
  return left * sigma.asDiagonal() * right.transpose();
}

std::vector<BenchRow> run_sketch_bench(const SketchBenchOptions& o) {
  std::vector<BenchRow> rows;
  const Index m = std::min(o.n_s, o.n_t);
  std::uint64_t spectrum_id = 0;
  for (const std::string name : {"geometric", "polynomial", "flat-then-zero"}) {
    ++spectrum_id;
    const Matrix U = matrix_with_spectrum(o.n_s, o.n_t, bench_spectrum(name, m),
                                          derive_seed(o.seed, 100, spectrum_id));
    const double unorm = U.norm();
    for (Index r : o.ranks) {
      BenchRow row;
      row.spectrum = name;
      row.r = r;
      row.trials = o.trials;
      row.tail_energy = tail_energy(U, r);
      row.bound = std::sqrt(6.0) * row.tail_energy;
      const ControlDims dims = ControlDims::for_rank(r, o.n_s, o.n_t);
      double sum = 0.0;
      for (Index t = 0; t < o.trials; ++t) {
        const auto proj = make_control_projections(
            derive_seed(o.seed, spectrum_id * 1000 + static_cast<std::uint64_t>(r),
                        static_cast<std::uint64_t>(t)),
            dims);
        const auto rec = reconstruct(sketch_static(U, proj), proj);
        const double err = (U - rec.U_tilde).norm();
        sum += err;
        row.max_error = std::max(row.max_error, err);
      }
      row.mean_error = sum / static_cast<double>(o.trials);
      row.mean_relative_error = row.mean_error / unorm;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "spectrum,r,trials,mean_error,max_error,tail_energy,bound,ratio,mean_relative_error\n";
  for (const auto& r : rows)
    out << fmt::format("{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n", r.spectrum,
                       r.r, r.trials, r.mean_error, r.max_error, r.tail_energy, r.bound,
                       r.mean_error / r.bound, r.mean_relative_error);
}

}  // namespace emasketch
