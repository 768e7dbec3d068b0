#pragma once

#include "emasketch/common.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace emasketch {

/// Reproducible standard-normal source.
///
/// Engine: std::mt19937_64 (fully specified by the standard). Uniforms take the
/// top 53 bits of one engine draw; normals come in pairs from the basic
/// Box-Muller transform. std::normal_distribution is avoided because its
/// algorithm differs between standard libraries.
class GaussianStream {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64/box-muller/v1";

  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double uniform();  // in [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();

  /// Column-major fill.
  Matrix normal_matrix(Index rows, Index cols);
  Vector normal_vector(Index n);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace emasketch
