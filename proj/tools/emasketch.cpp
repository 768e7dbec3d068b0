#include "emasketch/config.hpp"
#include "emasketch/experiment.hpp"
#include "emasketch/idx.hpp"
#include "emasketch/monitor.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace es = emasketch;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

void print_result(const es::ExperimentConfig& cfg, const es::ExperimentResult& r) {
  const bool classify = cfg.output_kind() == es::OutputKind::softmax_xent;
  std::cout << fmt::format("mode={} epochs={} final_train_loss={:.6f} {}={:.4f} final_rank={}\n",
                           es::to_string(cfg.mode), cfg.epochs, r.epoch_loss.back(),
                           classify ? "test_accuracy" : "test_mse", r.test_metric, r.final_rank);
  std::cout << "outputs written to " << cfg.output_dir << "\n";
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out, bool paper_scale, const std::string& data) {
  es::ExperimentConfig cfg =
      config_path.empty() ? es::desk_mnist_config(es::RunMode::exact) : es::load_config(config_path);
  if (paper_scale) es::apply_paper_scale(cfg);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.output_dir = out;
  if (!data.empty()) cfg.dataset.path = data;
  cfg.validate();
  print_result(cfg, es::run_experiment(cfg));
  return kOk;
}

int run_monitor_demo(const std::string& which, std::uint64_t seed, const std::string& out,
                     bool paper_scale, const std::string& variant, const std::string& data,
                     es::Index epochs) {
  es::MonitoringDemoOptions o;
  o.healthy = which == "healthy";
  o.seed = seed;
  o.paper_scale = paper_scale;
  o.xavier_tanh_variant = variant == "xavier-tanh";
  o.data_dir = data;
  o.epochs = epochs;
  o.output_dir = out.empty() ? "runs/monitor-demo-" + which : out;
  const es::ExperimentConfig cfg = es::monitoring_demo_config(o);
  const es::ExperimentResult r = es::run_experiment(cfg);
  std::cout << fmt::format("{} network: final train accuracy {:.4f}, test accuracy {:.4f}, "
                           "final-3-epoch stable rank {:.4f}\n",
                           which, r.epoch_train_acc.back(), r.test_metric,
                           es::final_stable_rank(r, 3));
  std::cout << "outputs written to " << cfg.output_dir << "\n";
  return kOk;
}

int run_bench(std::uint64_t seed, es::Index trials, const std::string& out) {
  es::SketchBenchOptions o;
  o.seed = seed;
  o.trials = trials;
  const auto rows = es::run_sketch_bench(o);
  std::ostringstream csv;
  es::write_bench_csv(csv, rows);
  std::cout << csv.str();
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream f(std::filesystem::path(out) / "sketch_bench.csv", std::ios::binary);
    f << csv.str();
    if (!f) throw es::DataError("cannot write sketch_bench.csv in " + out);
  }
  return kOk;
}

int run_memory_report(std::int64_t layers, std::int64_t width, std::int64_t rank,
                      std::int64_t batch, std::int64_t window, const std::string& out) {
  const std::string json = es::memory_report(layers, width, rank, batch, window).to_json();
  std::cout << json;
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    std::ofstream f(std::filesystem::path(out) / "memory_report.json", std::ios::binary);
    f << json;
    if (!f) throw es::DataError("cannot write memory_report.json in " + out);
  }
  return kOk;
}

int run_idx_dump(const std::string& path, std::size_t limit) {
  const es::IdxTensor t = es::load_idx_file(path);
  std::string dims;
  for (auto d : t.dims) dims += (dims.empty() ? "" : " x ") + std::to_string(d);
  std::cout << "dims: " << dims << "\n";
  std::cout << "elements: " << t.element_count() << "\n";
  const std::size_t row = t.dims.size() >= 2 ? t.element_count() / t.dims[0] : 1;
  const std::size_t items = t.dims.empty() ? 0 : std::min<std::size_t>(limit, t.dims[0]);
  for (std::size_t i = 0; i < items; ++i) {
    std::cout << "[" << i << "]";
    for (std::size_t j = 0; j < row; ++j) std::cout << ' ' << int(t.values[i * row + j]);
    std::cout << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMA activation sketching: training, monitoring and sketch benchmarks"};
  app.require_subcommand(1);

  std::string config_path, out, data, variant = "bias", which, idx_path;
  std::optional<std::uint64_t> seed;
  std::uint64_t demo_seed = 1, bench_seed = 1;
  bool paper_scale = false;
  es::Index epochs = 10, trials = 100;
  std::int64_t layers = 16, width = 1024, rank = 4, batch = 128, window = 5;
  std::size_t limit = 5;

  auto* train = app.add_subcommand("train", "Train an MLP from a JSON config");
  train->add_option("--config", config_path, "Experiment config (JSON)");
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out, "Override the output directory");
  train->add_option("--data", data, "Override the MNIST directory");
  train->add_flag("--paper-scale", paper_scale, "512-wide layers, full MNIST, 50 epochs");

  auto* bench = app.add_subcommand("sketch-bench", "Reconstruction error vs sqrt(6) tail energy");
  bench->add_option("--seed", bench_seed, "Base seed")->capture_default_str();
  bench->add_option("--trials", trials, "Projection draws per case")->capture_default_str();
  bench->add_option("--out", out, "Directory for sketch_bench.csv");

  auto* demo = app.add_subcommand("monitor-demo", "Healthy vs problematic deep network monitoring");
  demo->add_option("network", which, "healthy | problematic")
      ->required()
      ->check(CLI::IsMember({"healthy", "problematic"}));
  demo->add_option("--seed", demo_seed, "Seed")->capture_default_str();
  demo->add_option("--out", out, "Output directory");
  demo->add_option("--data", data, "MNIST directory")->default_str("data/mnist");
  demo->add_option("--epochs", epochs, "Epochs")->capture_default_str();
  demo->add_option("--variant", variant, "Problematic recipe: bias | xavier-tanh")
      ->check(CLI::IsMember({"bias", "xavier-tanh"}))
      ->capture_default_str();
  demo->add_flag("--paper-scale", paper_scale, "16 x 1024 hidden layers, full MNIST");

  auto* mem = app.add_subcommand("memory-report", "Closed-form sketch vs checkpoint storage");
  mem->add_option("--layers", layers, "L")->capture_default_str();
  mem->add_option("--width", width, "d")->capture_default_str();
  mem->add_option("--rank", rank, "r")->capture_default_str();
  mem->add_option("--batch", batch, "N_b")->capture_default_str();
  mem->add_option("--window", window, "T")->capture_default_str();
  mem->add_option("--out", out, "Directory for memory_report.json");

  auto* dump = app.add_subcommand("idx-dump", "Decode an IDX file (.gz accepted)");
  dump->add_option("file", idx_path, "IDX file")->required();
  dump->add_option("--limit", limit, "Items to print")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return run_train(config_path, seed, out, paper_scale, data);
    if (*bench) return run_bench(bench_seed, trials, out);
    if (*demo)
      return run_monitor_demo(which, demo_seed, out, paper_scale, variant,
                              data.empty() ? "data/mnist" : data, epochs);
    if (*mem) return run_memory_report(layers, width, rank, batch, window, out);
    if (*dump) return run_idx_dump(idx_path, limit);
  } catch (const es::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const es::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const es::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const es::ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kOk;
}
