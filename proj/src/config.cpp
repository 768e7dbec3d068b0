#include "emasketch/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

namespace emasketch {

using nlohmann::json;

std::string_view to_string(RunMode m) {
  switch (m) {
    case RunMode::exact: return "exact";
    case RunMode::sketched_fixed: return "sketched-fixed";
    case RunMode::sketched_adaptive: return "sketched-adaptive";
    case RunMode::monitor_only: return "monitor-only";
  }
  return "?";
}

std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::mnist: return "mnist";
    case DatasetKind::synthetic_classify: return "synthetic-classify";
    case DatasetKind::synthetic_regress: return "synthetic-regress";
  }
  return "?";
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

std::string_view to_string(InitScheme s) {
  switch (s) {
    case InitScheme::activation_default: return "default";
    case InitScheme::kaiming_uniform: return "kaiming";
    case InitScheme::xavier_uniform: return "xavier";
  }
  return "?";
}

namespace {

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void read_index(const json& obj, const char* key, Index& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  out = v.get<Index>();
}

void read_seed(const json& obj, const char* key, std::uint64_t& out, const std::string& where) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                 v.get<std::int64_t>() < 0))
    throw ConfigError(where + "." + key + ": expected a non-negative integer");
  out = v.get<std::uint64_t>();
}

template <typename E>
E read_enum(const json& obj, const char* key, E fallback, const std::string& where,
            std::initializer_list<E> options) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_string()) throw ConfigError(where + "." + key + ": expected a string");
  const std::string s = obj.at(key).get<std::string>();
  std::string names;
  for (E e : options) {
    if (to_string(e) == s) return e;
    names += (names.empty() ? "" : ", ") + std::string(to_string(e));
  }
  throw ConfigError(where + "." + key + ": '" + s + "' is not one of " + names);
}

DatasetConfig parse_dataset(const json& j) {
  const std::string w = "dataset";
  check_keys(j, w,
             {"kind", "path", "train_limit", "test_limit", "n_train", "n_test", "input_dim",
              "classes", "output_dim", "latent_rank", "seed"});
  DatasetConfig d;
  d.kind = read_enum(j, "kind", d.kind, w,
                     {DatasetKind::mnist, DatasetKind::synthetic_classify,
                      DatasetKind::synthetic_regress});
  read(j, "path", d.path, w);
  read_index(j, "train_limit", d.train_limit, w);
  read_index(j, "test_limit", d.test_limit, w);
  read_index(j, "n_train", d.n_train, w);
  read_index(j, "n_test", d.n_test, w);
  read_index(j, "input_dim", d.input_dim, w);
  read_index(j, "classes", d.classes, w);
  read_index(j, "output_dim", d.output_dim, w);
  read_index(j, "latent_rank", d.latent_rank, w);
  read_seed(j, "seed", d.seed, w);
  return d;
}

MLPSection parse_mlp(const json& j) {
  const std::string w = "mlp";
  check_keys(j, w,
             {"hidden_width", "hidden_layers", "activation", "sketched_layers", "init",
              "init_gain", "hidden_bias"});
  MLPSection m;
  read_index(j, "hidden_width", m.hidden_width, w);
  read_index(j, "hidden_layers", m.hidden_layers, w);
  m.activation = read_enum(j, "activation", m.activation, w, {Activation::tanh, Activation::relu});
  if (j.contains("sketched_layers")) {
    std::vector<Index> layers;
    read(j, "sketched_layers", layers, w);
    m.sketched_layers = std::move(layers);
  }
  m.init = read_enum(j, "init", m.init, w,
                     {InitScheme::activation_default, InitScheme::kaiming_uniform,
                      InitScheme::xavier_uniform});
  read(j, "init_gain", m.init_gain, w);
  read(j, "hidden_bias", m.hidden_bias, w);
  return m;
}

SketchSection parse_sketch(const json& j) {
  const std::string w = "sketch";
  check_keys(j, w, {"rank", "beta", "warmup_iters"});
  SketchSection s;
  read_index(j, "rank", s.rank, w);
  read(j, "beta", s.beta, w);
  read_index(j, "warmup_iters", s.warmup_iters, w);
  return s;
}

RankControllerConfig parse_rank_controller(const json& j) {
  const std::string w = "rank_controller";
  check_keys(j, w,
             {"r0", "r_min", "r_max", "p_decrease", "p_increase", "dr_down", "dr_up",
              "tau_reset", "improve_rel_tol"});
  RankControllerConfig c;
  read_index(j, "r0", c.r0, w);
  read_index(j, "r_min", c.r_min, w);
  read_index(j, "r_max", c.r_max, w);
  read_index(j, "p_decrease", c.p_decrease, w);
  read_index(j, "p_increase", c.p_increase, w);
  read_index(j, "dr_down", c.dr_down, w);
  read_index(j, "dr_up", c.dr_up, w);
  read_index(j, "tau_reset", c.tau_reset, w);
  read(j, "improve_rel_tol", c.improve_rel_tol, w);
  return c;
}

}  // namespace

Index ExperimentConfig::input_dim() const {
  return dataset.kind == DatasetKind::mnist ? 784 : dataset.input_dim;
}

Index ExperimentConfig::output_dim() const {
  switch (dataset.kind) {
    case DatasetKind::mnist: return 10;
    case DatasetKind::synthetic_classify: return dataset.classes;
    case DatasetKind::synthetic_regress: return dataset.output_dim;
  }
  return 0;
}

OutputKind ExperimentConfig::output_kind() const {
  return dataset.kind == DatasetKind::synthetic_regress ? OutputKind::mse
                                                        : OutputKind::softmax_xent;
}

std::vector<Index> ExperimentConfig::default_sketched_layers() const {
  if (mode == RunMode::exact) return {};
  if (mlp.sketched_layers) return *mlp.sketched_layers;
  std::vector<Index> dims{input_dim()};
  for (Index i = 0; i < mlp.hidden_layers; ++i) dims.push_back(mlp.hidden_width);
  dims.push_back(output_dim());
  return mode == RunMode::monitor_only ? MLPConfig::all_hidden_layers(dims)
                                       : MLPConfig::uniform_hidden_layers(dims);
}

MLPConfig ExperimentConfig::mlp_config() const {
  MLPConfig c;
  c.layer_dims.push_back(input_dim());
  for (Index i = 0; i < mlp.hidden_layers; ++i) c.layer_dims.push_back(mlp.hidden_width);
  c.layer_dims.push_back(output_dim());
  c.activation = mlp.activation;
  c.output = output_kind();
  c.sketched_layers = default_sketched_layers();
  std::sort(c.sketched_layers.begin(), c.sketched_layers.end());
  switch (mode) {
    case RunMode::exact: c.grad_mode = GradMode::exact; break;
    case RunMode::monitor_only: c.grad_mode = GradMode::monitor_only; break;
    default: c.grad_mode = GradMode::sketched; break;
  }
  return c;
}

SketchConfig ExperimentConfig::sketch_config() const {
  const SketchSection s = sketch.value_or(SketchSection{});
  Index r = s.rank;
  if (mode == RunMode::sketched_adaptive && rank_controller) r = rank_controller->r0;
  return SketchConfig::for_rank(r, s.beta, batch_size, s.warmup_iters);
}

void ExperimentConfig::validate() const {
  const bool adaptive = mode == RunMode::sketched_adaptive;
  if (rank_controller.has_value() != adaptive)
    throw ConfigError(adaptive ? "rank_controller is required in sketched-adaptive mode"
                               : "rank_controller is only allowed in sketched-adaptive mode");
  if (mode == RunMode::exact && sketch.has_value())
    throw ConfigError("sketch section is not allowed in exact mode");
  if (mode != RunMode::exact && !sketch.has_value())
    throw ConfigError("sketch section is required in mode " + std::string(to_string(mode)));
  if (adaptive && sketch->rank != rank_controller->r0)
    throw ConfigError("sketch.rank must equal rank_controller.r0 in adaptive mode");

  if (mlp.hidden_layers < 1) throw ConfigError("mlp.hidden_layers must be >= 1");
  if (mlp.hidden_width < 1) throw ConfigError("mlp.hidden_width must be >= 1");
  if (!(mlp.init_gain > 0.0) || !std::isfinite(mlp.init_gain))
    throw ConfigError("mlp.init_gain must be positive");
  if (!std::isfinite(mlp.hidden_bias)) throw ConfigError("mlp.hidden_bias must be finite");
  if (mode == RunMode::exact && mlp.sketched_layers && !mlp.sketched_layers->empty())
    throw ConfigError("mlp.sketched_layers must be empty in exact mode");

  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");

  const DatasetConfig& d = dataset;
  if (d.train_limit < 0 || d.test_limit < 0) throw ConfigError("dataset limits must be >= 0");
  if (d.kind != DatasetKind::mnist) {
    if (d.n_train < batch_size) throw ConfigError("dataset.n_train must be >= batch_size");
    if (d.n_test < 1) throw ConfigError("dataset.n_test must be >= 1");
    if (d.input_dim < 1) throw ConfigError("dataset.input_dim must be >= 1");
    if (d.latent_rank < 1 || d.latent_rank > d.input_dim)
      throw ConfigError("dataset.latent_rank must lie in [1, input_dim]");
    if (d.kind == DatasetKind::synthetic_classify && d.classes < 2)
      throw ConfigError("dataset.classes must be >= 2");
    if (d.kind == DatasetKind::synthetic_regress && d.output_dim < 1)
      throw ConfigError("dataset.output_dim must be >= 1");
  }

  if (mode != RunMode::exact) sketch_config().validate();
  if (rank_controller) rank_controller->validate();
  const MLPConfig m = mlp_config();
  m.validate();
  if (mode != RunMode::exact && m.sketched_layers.empty())
    throw ConfigError("no layer to sketch: need a hidden layer whose input width equals "
                      "hidden_width, or an explicit mlp.sketched_layers");
}

ExperimentConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  const std::string w = "config";
  check_keys(j, w,
             {"mode", "dataset", "mlp", "sketch", "rank_controller", "optimizer", "lr",
              "batch_size", "epochs", "seed", "output_dir", "record_wall_time", "diagnostics",
              "checkpoint"});
  ExperimentConfig c;
  c.mode = read_enum(j, "mode", c.mode, w,
                     {RunMode::exact, RunMode::sketched_fixed, RunMode::sketched_adaptive,
                      RunMode::monitor_only});
  if (j.contains("dataset")) c.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("mlp")) c.mlp = parse_mlp(j.at("mlp"));
  if (j.contains("sketch")) c.sketch = parse_sketch(j.at("sketch"));
  if (j.contains("rank_controller"))
    c.rank_controller = parse_rank_controller(j.at("rank_controller"));
  c.optimizer = read_enum(j, "optimizer", c.optimizer, w, {OptimizerKind::adam, OptimizerKind::sgd});
  read(j, "lr", c.lr, w);
  read_index(j, "batch_size", c.batch_size, w);
  read_index(j, "epochs", c.epochs, w);
  read_seed(j, "seed", c.seed, w);
  read(j, "output_dir", c.output_dir, w);
  read(j, "record_wall_time", c.record_wall_time, w);
  read(j, "diagnostics", c.diagnostics, w);
  read(j, "checkpoint", c.checkpoint, w);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["mode"] = to_string(mode);
  auto& d = j["dataset"];
  d["kind"] = to_string(dataset.kind);
  if (dataset.kind == DatasetKind::mnist) {
    d["path"] = dataset.path;
    d["train_limit"] = dataset.train_limit;
    d["test_limit"] = dataset.test_limit;
  } else {
    d["n_train"] = dataset.n_train;
    d["n_test"] = dataset.n_test;
    d["input_dim"] = dataset.input_dim;
    if (dataset.kind == DatasetKind::synthetic_classify)
      d["classes"] = dataset.classes;
    else
      d["output_dim"] = dataset.output_dim;
    d["latent_rank"] = dataset.latent_rank;
    d["seed"] = dataset.seed;
  }
  auto& m = j["mlp"];
  m["hidden_width"] = mlp.hidden_width;
  m["hidden_layers"] = mlp.hidden_layers;
  m["activation"] = to_string(mlp.activation);
  m["sketched_layers"] = mlp_config().sketched_layers;
  m["init"] = to_string(mlp.init);
  m["init_gain"] = mlp.init_gain;
  m["hidden_bias"] = mlp.hidden_bias;
  if (sketch) {
    j["sketch"] = {{"rank", sketch->rank},
                   {"beta", sketch->beta},
                   {"warmup_iters", sketch->warmup_iters}};
  }
  if (rank_controller) {
    const auto& r = *rank_controller;
    j["rank_controller"] = {{"r0", r.r0},
                            {"r_min", r.r_min},
                            {"r_max", r.r_max},
                            {"p_decrease", r.p_decrease},
                            {"p_increase", r.p_increase},
                            {"dr_down", r.dr_down},
                            {"dr_up", r.dr_up},
                            {"tau_reset", r.tau_reset},
                            {"improve_rel_tol", r.improve_rel_tol}};
  }
  j["optimizer"] = to_string(optimizer);
  j["lr"] = lr;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["record_wall_time"] = record_wall_time;
  j["diagnostics"] = diagnostics;
  j["checkpoint"] = checkpoint;
  return j.dump(2) + "\n";
}

ExperimentConfig desk_mnist_config(RunMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  if (mode != RunMode::exact) c.sketch = SketchSection{};
  if (mode == RunMode::sketched_adaptive) c.rank_controller = RankControllerConfig{};
  c.output_dir = "runs/" + std::string(to_string(mode));
  return c;
}

void apply_paper_scale(ExperimentConfig& config) {
  config.mlp.hidden_width = 512;
  config.mlp.hidden_layers = 3;
  config.epochs = 50;
  config.dataset.train_limit = 0;
  config.dataset.test_limit = 0;
}

}  // namespace emasketch
