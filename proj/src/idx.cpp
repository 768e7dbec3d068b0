#include "emasketch/idx.hpp"

#include "emasketch/common.hpp"

#include <zlib.h>

#include <fstream>
#include <limits>
#include <string>

namespace emasketch {

namespace {

constexpr std::uint8_t kUnsignedByte = 0x08;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::uint64_t IdxTensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw DataError("idx: truncated header");
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != kUnsignedByte || bytes[3] == 0)
    throw DataError("idx: bad magic");
  const std::size_t rank = bytes[3];
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw DataError("idx: truncated header");

  IdxTensor t;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint32_t d = read_be32(bytes, 4 + 4 * i);
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d)
      throw DataError("idx: dimension overflow");
    count *= d;
    t.dims.push_back(d);
  }
  if (count > std::numeric_limits<std::size_t>::max() - header)
    throw DataError("idx: dimension overflow");
  const std::size_t payload = bytes.size() - header;
  if (payload < count) throw DataError("idx: truncated payload");
  if (payload > count) throw DataError("idx: trailing bytes after payload");
  t.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor) {
  if (tensor.dims.empty() || tensor.dims.size() > 255) throw DataError("idx: bad rank");
  if (tensor.element_count() != tensor.values.size())
    throw DataError("idx: value count does not match dimensions");
  std::vector<std::uint8_t> out{0, 0, kUnsignedByte, static_cast<std::uint8_t>(tensor.dims.size())};
  for (auto d : tensor.dims) write_be32(out, d);
  out.insert(out.end(), tensor.values.begin(), tensor.values.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  std::vector<std::uint8_t> out;
  if (path.extension() == ".gz") {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (f == nullptr) throw DataError("cannot open " + path.string());
    std::uint8_t buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw DataError("gzip decode failed: " + path.string());
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  out.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return out;
}

IdxTensor load_idx_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_idx(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace emasketch
