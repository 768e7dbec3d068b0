#include "emasketch/monitor.hpp"

#include <Eigen/SVD>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace emasketch {

double grad_norm_estimate(const LayerSketchState& state) { return state.Z_s.norm(); }

double stable_rank(const LayerSketchState& state) {
  if (state.Y_s.size() == 0 || state.Y_s.isZero(0.0))
    throw NumericalError("stable_rank: Y sketch is zero");
  Eigen::JacobiSVD<Matrix> svd(state.Y_s);
  const double top = svd.singularValues()(0);
  return state.Y_s.squaredNorm() / (top * top);
}

namespace {

std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.16e}", v);
}

double parse_real(const std::string& s) {
  if (s == "nan") return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw DataError("metrics csv: bad real '" + s + "'");
  return v;
}

}  // namespace

void emit_records(std::ostream& out, const std::vector<MonitorRecord>& records) {
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    out << r.epoch << ',' << r.layer << ',' << fmt_real(r.z_norm) << ','
        << fmt_real(r.stable_rank) << ',' << fmt_real(r.train_loss) << ','
        << fmt_real(r.train_acc) << ',' << r.current_r << ',' << r.wall_ms << '\n';
  }
  if (!out) throw DataError("metrics csv: write failed");
}

std::vector<MonitorRecord> parse_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw DataError("metrics csv: missing or unexpected header");
  std::vector<MonitorRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 8) throw DataError("metrics csv: expected 8 fields in '" + line + "'");
    MonitorRecord r;
    r.epoch = std::stoll(f[0]);
    r.layer = std::stoll(f[1]);
    r.z_norm = parse_real(f[2]);
    r.stable_rank = parse_real(f[3]);
    r.train_loss = parse_real(f[4]);
    r.train_acc = parse_real(f[5]);
    r.current_r = std::stoll(f[6]);
    r.wall_ms = std::stoll(f[7]);
    out.push_back(r);
  }
  return out;
}

MemoryReport memory_report(std::int64_t layers, std::int64_t width, std::int64_t rank,
                           std::int64_t batch_size, std::int64_t window) {
  if (layers < 1 || width < 1 || rank < 1 || batch_size < 1 || window < 1)
    throw ConfigError("memory_report: all arguments must be positive");
  MemoryReport m;
  m.layers = layers;
  m.width = width;
  m.rank = rank;
  m.k = 2 * rank + 1;
  m.s = m.k;
  m.batch_size = batch_size;
  m.window = window;

  const std::int64_t sketch_elems = layers * width * (m.k + m.k + m.s);
  const std::int64_t checkpoint_elems = layers * width * width;
  m.sketch_bytes = sketch_elems * 4;
  m.traditional_checkpoint_bytes = checkpoint_elems * 4;
  m.traditional_monitor_bytes = m.traditional_checkpoint_bytes * window;
  m.per_iter_activation_bytes = layers * batch_size * width * 4;
  m.per_iter_sketch_bytes = layers * width * (2 * m.k + m.s) * 4;
  m.reduction_pct = 100.0 * (1.0 - static_cast<double>(m.sketch_bytes) /
                                       static_cast<double>(m.traditional_monitor_bytes));
  m.sketch_bytes_f64 = sketch_elems * 8;
  m.traditional_monitor_bytes_f64 = checkpoint_elems * 8 * window;
  return m;
}

std::string MemoryReport::to_json() const {
  nlohmann::ordered_json j;
  j["layers"] = layers;
  j["width"] = width;
  j["rank"] = rank;
  j["k"] = k;
  j["s"] = s;
  j["batch_size"] = batch_size;
  j["window"] = window;
  j["bytes_per_element"] = 4;
  j["sketch_bytes"] = sketch_bytes;
  j["traditional_checkpoint_bytes"] = traditional_checkpoint_bytes;
  j["traditional_monitor_bytes"] = traditional_monitor_bytes;
  j["per_iter_activation_bytes"] = per_iter_activation_bytes;
  j["per_iter_sketch_bytes"] = per_iter_sketch_bytes;
  j["reduction_pct"] = reduction_pct;
  j["sketch_bytes_f64"] = sketch_bytes_f64;
  j["traditional_monitor_bytes_f64"] = traditional_monitor_bytes_f64;
  return j.dump(2) + "\n";
}

}  // namespace emasketch
