#include "emasketch/checkpoint.hpp"

#include "emasketch/idx.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace emasketch {

using nlohmann::ordered_json;

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

static_assert(std::numeric_limits<double>::is_iec559);

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

class PayloadWriter {
 public:
  ordered_json tensor(const std::string& name, const Matrix& m) {
    ordered_json t = {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()},
                      {"offset", data_.size() / 8}};
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) put_u64(data_, std::bit_cast<std::uint64_t>(m(i, j)));
    return t;
  }
  const std::vector<std::uint8_t>& bytes() const { return data_; }

 private:
  std::vector<std::uint8_t> data_;
};

class PayloadReader {
 public:
  PayloadReader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n / 8) {}

  Matrix tensor(const ordered_json& entry, const std::string& name) const {
    if (entry.at("name").get<std::string>() != name)
      throw DataError("checkpoint: expected tensor '" + name + "'");
    const Index rows = entry.at("rows").get<Index>();
    const Index cols = entry.at("cols").get<Index>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (rows < 0 || cols < 0 ||
        offset + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) > n_)
      throw DataError("checkpoint: tensor '" + name + "' exceeds payload");
    Matrix m(rows, cols);
    std::size_t pos = offset;
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = std::bit_cast<double>(get_u64(data_ + 8 * pos++));
    return m;
  }

 private:
  const std::uint8_t* data_;
  std::size_t n_;
};

Vector as_vector(const Matrix& m) {
  if (m.cols() != 1) throw DataError("checkpoint: expected a column vector");
  return m.col(0);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  PayloadWriter payload;
  ordered_json header;
  header["config"] = ordered_json::parse(ckpt.config_json.empty() ? "{}" : ckpt.config_json);
  header["epoch"] = ckpt.epoch;
  ordered_json tensors = ordered_json::array();
  for (std::size_t l = 0; l < ckpt.params.size(); ++l) {
    const std::string n = std::to_string(l + 1);
    tensors.push_back(payload.tensor("W" + n, ckpt.params[l].W));
    tensors.push_back(payload.tensor("b" + n, ckpt.params[l].b));
  }
  header["params"] = tensors;

  if (ckpt.adam) {
    const AdamState& a = *ckpt.adam;
    ordered_json t = ordered_json::array();
    for (std::size_t l = 0; l < a.mW.size(); ++l) {
      const std::string n = std::to_string(l + 1);
      t.push_back(payload.tensor("mW" + n, a.mW[l]));
      t.push_back(payload.tensor("vW" + n, a.vW[l]));
      t.push_back(payload.tensor("mb" + n, a.mb[l]));
      t.push_back(payload.tensor("vb" + n, a.vb[l]));
    }
    header["adam"] = {{"t", a.t},         {"lr", a.lr},   {"beta1", a.beta1},
                      {"beta2", a.beta2}, {"eps", a.eps}, {"tensors", t}};
  }

  if (ckpt.sketch_config) {
    const SketchConfig& s = *ckpt.sketch_config;
    ordered_json layers = ordered_json::array();
    for (const auto& [layer, st] : ckpt.sketches) {
      const std::string n = std::to_string(layer);
      layers.push_back({{"layer", layer},
                        {"d", st.d},
                        {"d_in", st.d_in},
                        {"n_updates", st.n_updates},
                        {"X_s", payload.tensor("X_s" + n, st.X_s)},
                        {"Y_s", payload.tensor("Y_s" + n, st.Y_s)},
                        {"Z_s", payload.tensor("Z_s" + n, st.Z_s)}});
    }
    header["sketch"] = {{"r", s.r},
                        {"k", s.k},
                        {"s", s.s},
                        {"beta", s.beta},
                        {"warmup_iters", s.warmup_iters},
                        {"batch_size", s.batch_size},
                        {"projection_seed", ckpt.projection_seed},
                        {"layers", layers}};
  }

  if (ckpt.rank_state) {
    const RankControllerState& r = *ckpt.rank_state;
    header["rank_controller"] = {{"r", r.r},
                                 {"best_metric", std::isfinite(r.best_metric)
                                                     ? ordered_json(r.best_metric)
                                                     : ordered_json(nullptr)},
                                 {"epochs_improving", r.epochs_improving},
                                 {"epochs_stagnant", r.epochs_stagnant}};
  }

  const std::string htext = header.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 0);
  put_u64(out, htext.size());
  out.insert(out.end(), htext.begin(), htext.end());
  put_u64(out, payload.bytes().size());
  out.insert(out.end(), payload.bytes().begin(), payload.bytes().end());
  put_u64(out, fnv1a64(out.data(), out.size()));
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 4 + 8 + 8 + 8 ||
      std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw DataError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  if (get_u64(bytes.data() + body) != fnv1a64(bytes.data(), body))
    throw DataError("checkpoint: checksum mismatch");
  if (get_u32(bytes.data() + 8) != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version");
  const std::uint64_t hlen = get_u64(bytes.data() + 16);
  if (24 + hlen + 8 > body) throw DataError("checkpoint: truncated header");
  const std::uint64_t plen = get_u64(bytes.data() + 24 + hlen);
  if (24 + hlen + 8 + plen != body || plen % 8 != 0)
    throw DataError("checkpoint: payload length mismatch");

  Checkpoint c;
  try {
    const ordered_json h = ordered_json::parse(bytes.begin() + 24, bytes.begin() + 24 + hlen);
    const PayloadReader payload(bytes.data() + 24 + hlen + 8, plen);
    c.config_json = h.at("config").dump(2) + "\n";
    c.epoch = h.at("epoch").get<std::int64_t>();
    const auto& params = h.at("params");
    for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
      const std::string n = std::to_string(i / 2 + 1);
      c.params.push_back({payload.tensor(params[i], "W" + n),
                          as_vector(payload.tensor(params[i + 1], "b" + n))});
    }
    if (h.contains("adam")) {
      const auto& a = h.at("adam");
      AdamState s;
      s.t = a.at("t").get<std::uint64_t>();
      s.lr = a.at("lr").get<double>();
      s.beta1 = a.at("beta1").get<double>();
      s.beta2 = a.at("beta2").get<double>();
      s.eps = a.at("eps").get<double>();
      const auto& t = a.at("tensors");
      for (std::size_t i = 0; i + 3 < t.size(); i += 4) {
        const std::string n = std::to_string(i / 4 + 1);
        s.mW.push_back(payload.tensor(t[i], "mW" + n));
        s.vW.push_back(payload.tensor(t[i + 1], "vW" + n));
        s.mb.push_back(as_vector(payload.tensor(t[i + 2], "mb" + n)));
        s.vb.push_back(as_vector(payload.tensor(t[i + 3], "vb" + n)));
      }
      c.adam = std::move(s);
    }
    if (h.contains("sketch")) {
      const auto& s = h.at("sketch");
      SketchConfig sc;
      sc.r = s.at("r").get<Index>();
      sc.k = s.at("k").get<Index>();
      sc.s = s.at("s").get<Index>();
      sc.beta = s.at("beta").get<double>();
      sc.warmup_iters = s.at("warmup_iters").get<Index>();
      sc.batch_size = s.at("batch_size").get<Index>();
      c.sketch_config = sc;
      c.projection_seed = s.at("projection_seed").get<std::uint64_t>();
      for (const auto& e : s.at("layers")) {
        const Index layer = e.at("layer").get<Index>();
        const std::string n = std::to_string(layer);
        LayerSketchState st;
        st.d = e.at("d").get<Index>();
        st.d_in = e.at("d_in").get<Index>();
        st.n_updates = e.at("n_updates").get<std::uint64_t>();
        st.X_s = payload.tensor(e.at("X_s"), "X_s" + n);
        st.Y_s = payload.tensor(e.at("Y_s"), "Y_s" + n);
        st.Z_s = payload.tensor(e.at("Z_s"), "Z_s" + n);
        c.sketches.emplace_back(layer, std::move(st));
      }
    }
    if (h.contains("rank_controller")) {
      const auto& r = h.at("rank_controller");
      RankControllerState s;
      s.r = r.at("r").get<Index>();
      s.best_metric = r.at("best_metric").is_null() ? std::numeric_limits<double>::infinity()
                                                     : r.at("best_metric").get<double>();
      s.epochs_improving = r.at("epochs_improving").get<Index>();
      s.epochs_stagnant = r.at("epochs_stagnant").get<Index>();
      c.rank_state = s;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace emasketch
