#pragma once

// Sketch-derived diagnostics and closed-form memory accounting.

#include "emasketch/common.hpp"
#include "emasketch/ema_sketch.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace emasketch {

/// |Z_s|_F, a proxy for the layer's gradient magnitude.
double grad_norm_estimate(const LayerSketchState& state);

/// |Y_s|_F^2 / sigma_max(Y_s)^2. Throws NumericalError for an all-zero Y_s.
double stable_rank(const LayerSketchState& state);

struct MonitorRecord {
  std::int64_t epoch = 0;
  std::int64_t layer = 0;
  double z_norm = 0.0;
  double stable_rank = 0.0;  // NaN when undefined (zero sketch)
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::int64_t current_r = 0;
  std::int64_t wall_ms = 0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,layer,z_norm,stable_rank,train_loss,train_acc,current_r,wall_ms";

/// Fixed formatting: reals as %.16e (exact round trip), NaN as "nan".
void emit_records(std::ostream& out, const std::vector<MonitorRecord>& records);
std::vector<MonitorRecord> parse_records(std::istream& in);

struct MemoryReport {
  std::int64_t layers = 0;
  std::int64_t width = 0;
  std::int64_t rank = 0;
  std::int64_t k = 0;
  std::int64_t s = 0;
  std::int64_t batch_size = 0;
  std::int64_t window = 0;
  // 4 bytes per element
  std::int64_t sketch_bytes = 0;
  std::int64_t traditional_checkpoint_bytes = 0;
  std::int64_t traditional_monitor_bytes = 0;
  std::int64_t per_iter_activation_bytes = 0;
  std::int64_t per_iter_sketch_bytes = 0;
  double reduction_pct = 0.0;
  // same quantities at 8 bytes per element (the arithmetic width actually used)
  std::int64_t sketch_bytes_f64 = 0;
  std::int64_t traditional_monitor_bytes_f64 = 0;

  std::string to_json() const;
};

/// L layers of width d, rank r (k = s = 2r+1), batch N_b, window T.
MemoryReport memory_report(std::int64_t layers, std::int64_t width, std::int64_t rank,
                           std::int64_t batch_size, std::int64_t window);

}  // namespace emasketch
