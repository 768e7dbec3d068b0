// Acceptance checks. `acceptance` runs every criterion; `acceptance 3 7`
// runs a subset. One PASS/FAIL line per criterion; exit status 1 if any fail.

#include "emasketch/ema_sketch.hpp"
#include "emasketch/experiment.hpp"
#include "emasketch/random.hpp"
#include "emasketch/reconstruction.hpp"
#include "emasketch/sketch_core.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "rank_simulator.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace emasketch;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kBoundSlack = 1.2;
constexpr double kExactRankRelErr = 1e-8;
constexpr double kStreamTol = 1e-11;
constexpr double kLemmaTol = 1e-10;
constexpr double kFusedTol = 1e-10;
constexpr double kGradRelTol = 1e-5;
constexpr double kExactAccuracyFloor = 0.90;
constexpr double kSketchedGapPoints = 6.0;
constexpr std::int64_t kSketchBytes = 1769472;
constexpr std::int64_t kCheckpointBytes = 64LL * 1024 * 1024;
constexpr std::int64_t kTotalBytes = 320LL * 1024 * 1024;
constexpr double kReductionPct = 99.0;
constexpr double kStableRankSeparation = 3.0;
constexpr double kChanceBandPoints = 5.0;
constexpr double kHealthyAccuracyFloor = 0.90;
constexpr Index kRankSequences = 10000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

const fs::path kSource = EMASKETCH_SOURCE_DIR;
const fs::path kMnist = kSource / "data" / "mnist";

Outcome bound_check() {
  SketchBenchOptions o;  // 200 x 150, r in {2, 5, 10}, 100 seeds
  const auto rows = run_sketch_bench(o);
  bool ok = rows.size() == 9;
  double worst = 0.0;
  std::string where;
  for (const auto& r : rows) {
    const double ratio = r.mean_error / r.bound;
    if (ratio > worst) {
      worst = ratio;
      where = fmt::format("{} r={}", r.spectrum, r.r);
    }
    ok = ok && r.mean_error <= kBoundSlack * r.bound;
  }
  return {ok, fmt::format("9 cases x {} seeds; worst mean/(sqrt6*tau) = {:.3f} ({}) <= {}", o.trials,
                          worst, where, kBoundSlack)};
}

Outcome exact_rank() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GaussianStream g(seed);
    const Index rank = 1 + static_cast<Index>(seed % 6);
    const Index n_s = 40 + static_cast<Index>(g.uniform() * 60);
    const Index n_t = 30 + static_cast<Index>(g.uniform() * 60);
    const Matrix U = g.normal_matrix(n_s, rank) * g.normal_matrix(rank, n_t);
    const Index r = rank + static_cast<Index>(seed % 3);
    const auto p = make_control_projections(derive_seed(seed, 9), ControlDims::for_rank(r, n_s, n_t));
    const auto rec = reconstruct(sketch_static(U, p), p);
    worst = std::max(worst, oracle::frobenius(U - rec.U_tilde) / oracle::frobenius(U));
  }
  return {worst <= kExactRankRelErr,
          fmt::format("20 seeds; worst relative error {:.2e} <= {:.0e}", worst, kExactRankRelErr)};
}

Outcome streaming() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GaussianStream g(seed + 100);
    const Index n_s = 10 + static_cast<Index>(g.uniform() * 91);
    const Index n_t = 10 + static_cast<Index>(g.uniform() * 91);
    const Matrix U = g.normal_matrix(n_s, n_t);
    const auto dims = ControlDims::for_rank(1 + static_cast<Index>(seed % 4), n_s, n_t);
    const auto p = make_control_projections(seed, dims);
    auto s = ControlSketch::zeros(dims);
    for (Index i = 1; i <= n_t; ++i) stream_update(s, p, U.col(i - 1), i);
    const Matrix X = oracle::matmul(p.Upsilon, U);
    const Matrix Y = oracle::matmul(U, oracle::transpose(p.Omega));
    const Matrix Z = oracle::matmul(oracle::matmul(p.Phi, U), oracle::transpose(p.Psi));
    const auto st = sketch_static(U, p);
    worst = std::max({worst, max_abs(s.X - st.X), max_abs(s.Y - st.Y), max_abs(s.Z - st.Z),
                      max_abs(s.X - X), max_abs(s.Y - Y), max_abs(s.Z - Z)});
  }
  return {worst <= kStreamTol,
          fmt::format("20 seeds up to 100x100; worst max-abs {:.2e} <= {:.0e}", worst, kStreamTol)};
}

Outcome lemma_one() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Index nb = 32, d = 24, steps = 50;
    const double beta = 0.85 + 0.02 * static_cast<double>(seed);
    const auto cfg = SketchConfig::for_rank(3, beta, nb);
    const auto proj = make_nn_projections(seed, cfg, 2);
    auto st = init_layer_sketch(cfg, d);
    GaussianStream g(seed + 50);
    std::vector<Matrix> prev_t, curr_t;
    for (Index i = 0; i < steps; ++i) {
      const Matrix a0 = g.normal_matrix(nb, d), a1 = g.normal_matrix(nb, d);
      ema_update(st, proj, 2, a0, a1, beta);
      prev_t.push_back(oracle::transpose(a0));
      curr_t.push_back(oracle::transpose(a1));
    }
    const Matrix ap = oracle::ema_sum(prev_t, beta), ac = oracle::ema_sum(curr_t, beta);
    Matrix z = oracle::matmul(ac, proj.Phi);
    for (Index j = 0; j < z.cols(); ++j) z.col(j) *= proj.psi(2)(j);
    worst = std::max({worst, max_abs(st.X_s - oracle::matmul(ap, proj.Upsilon)),
                      max_abs(st.Y_s - oracle::matmul(ac, proj.Omega)), max_abs(st.Z_s - z)});
  }
  return {worst <= kLemmaTol,
          fmt::format("X, Y, Z over 50 steps x 5 seeds; worst max-abs {:.2e} <= {:.0e}", worst,
                      kLemmaTol)};
}

Outcome fused_vs_naive() {
  double worst = 0.0;
  bool no_square = true;
  for (Index d : {8, 64, 512}) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto cfg = SketchConfig::for_rank(2, 0.9, 64);
      const auto proj = make_nn_projections(seed * 31 + static_cast<std::uint64_t>(d), cfg, 1);
      auto st = init_layer_sketch(cfg, d);
      GaussianStream g(seed);
      for (int i = 0; i < 6; ++i)
        ema_update(st, proj, 1, g.normal_matrix(64, d), g.normal_matrix(64, d), cfg.beta);
      TransientLog log;
      const Matrix fused = reconstruct_fused(st, proj, &log).A_tilde;
      if (d > 64 && log.contains(d, d)) no_square = false;
      const Matrix naive = oracle::naive_activation_reconstruction(st.X_s, st.Y_s, st.Z_s, proj.Omega);
      worst = std::max(worst, max_abs(fused - naive));
    }
  }
  return {worst <= kFusedTol && no_square,
          fmt::format("d in {{8, 64, 512}} x 20 states; worst max-abs {:.2e} <= {:.0e}; no d x d "
                      "buffer: {}",
                      worst, kFusedTol, no_square ? "yes" : "no")};
}

Outcome gradient_check() {
  double worst = 0.0;
  Index checked = 0;
  const std::vector<std::vector<Index>> archs{{2, 3, 2}, {10, 16, 16, 10}};
  std::uint64_t seed = 1;
  for (const auto& dims : archs) {
    MLPConfig c;
    c.layer_dims = dims;
    const auto p = init_params(c, seed);
    GaussianStream g(seed + 10);
    const Index n = dims.front() == 2 ? 4 : 8;
    const Matrix x = g.normal_matrix(n, dims.front());
    std::vector<Index> y;
    for (Index i = 0; i < n; ++i) y.push_back(static_cast<Index>(g.uniform() * dims.back()));
    const auto rep = gradcheck::check(p, c, x, Targets::classes(y));
    worst = std::max(worst, rep.max_rel_error);
    checked += rep.checked;
    ++seed;
  }
  return {worst <= kGradRelTol,
          fmt::format("2-3-2 and 10-16-16-10, {} entries; worst relative error {:.2e} <= {:.0e}",
                      checked, worst, kGradRelTol)};
}

ExperimentConfig mnist_config(RunMode mode) {
  ExperimentConfig c = desk_mnist_config(mode);
  c.dataset.path = kMnist.string();
  return c;
}

struct MnistRuns {
  std::optional<DataSplit> data;
  std::optional<ExperimentResult> exact;

  const DataSplit& dataset() {
    if (!data) data = load_mnist(kMnist, 10000, 2000);
    return *data;
  }
  const ExperimentResult& exact_run() {
    if (!exact) exact = run_experiment(mnist_config(RunMode::exact), {false, &dataset()});
    return *exact;
  }
};

MnistRuns& mnist() {
  static MnistRuns runs;
  return runs;
}

Outcome mnist_accuracy() {
  const auto& ds = mnist().dataset();
  const auto& exact = mnist().exact_run();
  const auto sk = run_experiment(mnist_config(RunMode::sketched_fixed), {false, &ds});
  const double gap = 100.0 * (exact.test_metric - sk.test_metric);
  const bool ok = exact.test_metric >= kExactAccuracyFloor && gap <= kSketchedGapPoints;
  return {ok, fmt::format("{}/{} split, 10 epochs; exact {:.2f}% (>= {:.0f}%), sketched r=2 "
                          "{:.2f}%, gap {:.2f} points (<= {:.0f})",
                          ds.train.size(), ds.test.size(), 100.0 * exact.test_metric,
                          100.0 * kExactAccuracyFloor, 100.0 * sk.test_metric, gap,
                          kSketchedGapPoints)};
}

Outcome monitor_transparency() {
  const auto& exact = mnist().exact_run();
  const auto mon = run_experiment(mnist_config(RunMode::monitor_only), {false, &mnist().dataset()});
  bool same = exact.batch_losses.size() == mon.batch_losses.size();
  for (std::size_t i = 0; same && i < exact.batch_losses.size(); ++i)
    same = exact.batch_losses[i] == mon.batch_losses[i];
  same = same && exact.params == mon.params;
  return {same, fmt::format("{} optimizer steps; loss trajectory and final weights bit-identical: {}",
                            exact.batch_losses.size(), same ? "yes" : "no")};
}

Outcome memory() {
  const auto m = memory_report(16, 1024, 4, 128, 5);
  const bool ok = m.sketch_bytes == kSketchBytes && m.traditional_checkpoint_bytes == kCheckpointBytes &&
                  m.traditional_monitor_bytes == kTotalBytes && m.reduction_pct >= kReductionPct;
  return {ok, fmt::format("sketch {} B, checkpoint {} B, total {} B, reduction {:.2f}%",
                          m.sketch_bytes, m.traditional_checkpoint_bytes,
                          m.traditional_monitor_bytes, m.reduction_pct)};
}

Outcome stable_rank_discrimination() {
  MonitoringDemoOptions o;
  o.data_dir = kMnist.string();
  const auto& ds = mnist().dataset();
  o.healthy = true;
  const auto healthy = run_monitoring_demo(o, {false, &ds});
  o.healthy = false;
  const auto bad = run_monitoring_demo(o, {false, &ds});
  const double sr_h = final_stable_rank(healthy, 3);
  const double sr_p = final_stable_rank(bad, 3);
  const double sep = sr_h - sr_p;
  double worst_dev = 0.0;
  for (double acc : bad.epoch_train_acc) worst_dev = std::max(worst_dev, std::abs(acc - 0.1));
  const bool near_chance = 100.0 * worst_dev <= kChanceBandPoints;
  const bool healthy_ok = healthy.test_metric >= kHealthyAccuracyFloor;
  const bool ok = sep >= kStableRankSeparation && near_chance && healthy_ok;
  return {ok, fmt::format("stable rank healthy {:.3f} vs problematic {:.3f}, separation {:.3f} "
                          "(>= {:.1f}); problematic accuracy max deviation from chance {:.2f} "
                          "points (<= {:.0f}); healthy test accuracy {:.2f}% (>= {:.0f}%)",
                          sr_h, sr_p, sep, kStableRankSeparation, 100.0 * worst_dev,
                          kChanceBandPoints, 100.0 * healthy.test_metric,
                          100.0 * kHealthyAccuracyFloor)};
}

Outcome rank_controller() {
  const auto r = rank_sim::compare_random_sequences(kRankSequences, 99);
  const Index boundary = rank_sim::boundary_failures();
  const bool ok = r.mismatches == 0 && r.out_of_range == 0 && boundary == 0;
  return {ok, fmt::format("{} sequences, {} decisions, {} mismatches, {} out of range, {} boundary "
                          "failures",
                          kRankSequences, r.decisions, r.mismatches, r.out_of_range, boundary)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file below `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

Outcome determinism() {
  const fs::path work = fs::temp_directory_path() / "emasketch_acceptance_determinism";
  const fs::path cli = EMASKETCH_CLI;
  const std::string synth_cfg = (work / "synthetic.json").string();
  const std::vector<std::string> runs{
      "train --config " + synth_cfg + " --out OUT/train",
      "train --config " + (kSource / "configs" / "regression_monitor.json").string() +
          " --out OUT/regress",
      "sketch-bench --trials 5 --out OUT/bench",
      "monitor-demo problematic --epochs 1 --data " + kMnist.string() + " --out OUT/demo",
      "memory-report --layers 16 --width 1024 --rank 4 --window 5 --out OUT/mem",
      "idx-dump " + (kMnist / "t10k-labels-idx1-ubyte.gz").string() + " --limit 3"};

  fs::remove_all(work);
  fs::create_directories(work);
  {
    std::ofstream cfg(synth_cfg);
    cfg << R"({"mode": "sketched-adaptive",
  "dataset": {"kind": "synthetic-classify", "n_train": 1024, "n_test": 256, "input_dim": 24,
              "classes": 5, "latent_rank": 6},
  "mlp": {"hidden_width": 24, "hidden_layers": 3},
  "sketch": {"rank": 2}, "rank_controller": {"p_decrease": 2},
  "batch_size": 64, "epochs": 5, "lr": 0.005, "diagnostics": true})";
  }

  std::vector<std::map<std::string, std::string>> results;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const fs::path out = work / "out";
    fs::remove_all(out);
    fs::create_directories(out);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::string args = runs[i];
      for (auto pos = args.find("OUT"); pos != std::string::npos; pos = args.find("OUT"))
        args.replace(pos, 3, out.string());
      const std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>&1", cli.string(), args,
                                          (out / fmt::format("stdout_{}.txt", i)).string());
      const int rc = std::system(cmd.c_str());
      if (rc != 0) return {false, fmt::format("command failed ({}): {}", rc, args)};
    }
    results.push_back(snapshot(out));
  }
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [name, content] : results[0]) {
    auto it = results[1].find(name);
    if (it == results[1].end() || it->second != content) {
      if (differing++ == 0) first_diff = name;
    }
  }
  const bool ok = differing == 0 && results[0].size() == results[1].size();
  fs::remove_all(work);
  return {ok, fmt::format("{} CLI invocations x 2, {} output files compared byte for byte; {} differ{}",
                          runs.size(), results[0].size(), differing,
                          first_diff.empty() ? "" : " (first: " + first_diff + ")")};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "sqrt(6) tail-energy bound", bound_check},
      {2, "exact-rank recovery", exact_rank},
      {3, "streaming equals static sketch", streaming},
      {4, "EMA temporal expansion identity", lemma_one},
      {5, "fused vs naive activation reconstruction", fused_vs_naive},
      {6, "exact backprop finite differences", gradient_check},
      {7, "MNIST desk-scale accuracy", mnist_accuracy},
      {8, "monitor-only transparency", monitor_transparency},
      {9, "memory accounting", memory},
      {10, "stable-rank discrimination", stable_rank_discrimination},
      {11, "rank controller conformance", rank_controller},
      {12, "CLI determinism", determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  bool all_pass = true;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << fmt::format("criterion {:2d} {} | {} | {} [{:.1f}s]", c.id,
                             o.pass ? "PASS" : "FAIL", c.name, o.detail, secs)
              << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
