#pragma once

// Binary training checkpoint (layout in docs/checkpoint_format.md).

#include "emasketch/common.hpp"
#include "emasketch/network.hpp"
#include "emasketch/rank_controller.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace emasketch {

struct Checkpoint {
  std::string config_json;  // ExperimentConfig::to_json of the run
  std::int64_t epoch = 0;   // epochs completed
  Params params;
  std::optional<AdamState> adam;
  std::optional<SketchConfig> sketch_config;
  std::uint64_t projection_seed = 0;
  std::vector<std::pair<Index, LayerSketchState>> sketches;
  std::optional<RankControllerState> rank_state;
};

inline constexpr char kCheckpointMagic[8] = {'E', 'M', 'S', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n);

}  // namespace emasketch
