#pragma once

// IDX container (the MNIST distribution format): big-endian u32 magic
// 0x0000TTNN (TT = element type, NN = rank), one big-endian u32 per
// dimension, then the raw row-major payload. Only unsigned-byte (0x08)
// tensors are supported.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace emasketch {

struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> values;

  std::uint64_t element_count() const;
  bool operator==(const IdxTensor&) const = default;
};

/// Throws DataError("bad magic" / "truncated payload" / "dimension overflow" / ...).
IdxTensor parse_idx(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);

/// Reads a whole file; transparently gunzips paths ending in ".gz".
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

IdxTensor load_idx_file(const std::filesystem::path& path);

}  // namespace emasketch
