#pragma once

// Binary checkpoint:
//   "GNGAN"  u32 version  u32 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f64 (row-major)
// All integers and floats little-endian. Network specs, Adam state, iteration,
// seed and config hash are stored as tensors in the same framing.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gngan/error.hpp"
#include "gngan/model.hpp"

namespace gngan {

inline constexpr char kCheckpointMagic[5] = {'G', 'N', 'G', 'A', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  GnGanModel model;
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

using TensorList = std::vector<std::pair<std::string, Matrix>>;

inline Matrix u64_tensor(std::uint64_t v) {
  Matrix m(1, 2);
  m(0, 0) = static_cast<double>(v >> 32);
  m(0, 1) = static_cast<double>(v & 0xffffffffULL);
  return m;
}

inline std::uint64_t tensor_u64(const Matrix& m) {
  if (m.rows() != 1 || m.cols() != 2) throw FormatError("checkpoint: malformed integer tensor");
  return (static_cast<std::uint64_t>(m(0, 0)) << 32) | static_cast<std::uint64_t>(m(0, 1));
}

inline void add_network(TensorList& out, const std::string& prefix, const Mlp& net) {
  const auto specs = net.specs();
  Matrix s(static_cast<Eigen::Index>(specs.size()), 3);
  for (std::size_t k = 0; k < specs.size(); ++k) {
    s(static_cast<Eigen::Index>(k), 0) = static_cast<double>(specs[k].in_dim);
    s(static_cast<Eigen::Index>(k), 1) = static_cast<double>(specs[k].out_dim);
    s(static_cast<Eigen::Index>(k), 2) = static_cast<double>(static_cast<int>(specs[k].activation));
  }
  out.emplace_back(prefix + ".spec", std::move(s));
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    out.emplace_back(prefix + ".W" + std::to_string(k), net.layers[k].weight);
    out.emplace_back(prefix + ".b" + std::to_string(k), net.layers[k].bias);
  }
}

inline void add_adam(TensorList& out, const std::string& prefix, const AdamState& s) {
  Matrix meta(1, 6);
  meta << static_cast<double>(s.step), s.lr, s.base_lr, s.beta1, s.beta2, s.epsilon;
  out.emplace_back(prefix + ".meta", std::move(meta));
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    out.emplace_back(prefix + ".m" + std::to_string(i), s.m[i]);
    out.emplace_back(prefix + ".v" + std::to_string(i), s.v[i]);
  }
}

class TensorMap {
public:
  explicit TensorMap(std::map<std::string, Matrix> t) : t_(std::move(t)) {}
  const Matrix& at(const std::string& name) const {
    auto it = t_.find(name);
    if (it == t_.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return t_.contains(name); }

private:
  std::map<std::string, Matrix> t_;
};

inline Mlp read_network(const TensorMap& t, const std::string& prefix) {
  const Matrix& s = t.at(prefix + ".spec");
  if (s.cols() != 3) throw FormatError("checkpoint: malformed spec for " + prefix);
  Mlp net;
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    const auto act = static_cast<int>(s(k, 2));
    if (act < 0 || act > 2) throw FormatError("checkpoint: unknown activation in " + prefix);
    Layer l;
    l.weight = t.at(prefix + ".W" + std::to_string(k));
    l.bias = t.at(prefix + ".b" + std::to_string(k));
    l.activation = static_cast<Activation>(act);
    if (l.weight.rows() != static_cast<Eigen::Index>(s(k, 1)) || l.weight.cols() != static_cast<Eigen::Index>(s(k, 0)) ||
        l.bias.rows() != 1 || l.bias.cols() != l.weight.rows()) {
      throw FormatError("checkpoint: layer " + std::to_string(k) + " of " + prefix + " disagrees with its spec");
    }
    net.layers.push_back(std::move(l));
  }
  validate_specs(net.specs());
  return net;
}

inline AdamState read_adam(const TensorMap& t, const std::string& prefix, std::span<const Matrix* const> params) {
  const Matrix& meta = t.at(prefix + ".meta");
  if (meta.rows() != 1 || meta.cols() != 6) throw FormatError("checkpoint: malformed " + prefix + ".meta");
  AdamState s;
  s.step = static_cast<std::uint64_t>(meta(0, 0));
  s.lr = meta(0, 1);
  s.base_lr = meta(0, 2);
  s.beta1 = meta(0, 3);
  s.beta2 = meta(0, 4);
  s.epsilon = meta(0, 5);
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.push_back(t.at(prefix + ".m" + std::to_string(i)));
    s.v.push_back(t.at(prefix + ".v" + std::to_string(i)));
    if (s.m.back().rows() != params[i]->rows() || s.m.back().cols() != params[i]->cols() ||
        s.v.back().rows() != params[i]->rows() || s.v.back().cols() != params[i]->cols()) {
      throw FormatError("checkpoint: " + prefix + " moment " + std::to_string(i) + " has the wrong shape");
    }
  }
  return s;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  detail::TensorList t;
  detail::add_network(t, "E", c.model.encoder);
  detail::add_network(t, "G", c.model.generator);
  detail::add_network(t, "D", c.model.discriminator);
  detail::add_adam(t, "adam.ae", c.model.ae_opt);
  detail::add_adam(t, "adam.d", c.model.d_opt);
  detail::add_adam(t, "adam.g", c.model.g_opt);
  t.emplace_back("iteration", detail::u64_tensor(c.iteration));
  t.emplace_back("seed", detail::u64_tensor(c.seed));
  t.emplace_back("config_hash", detail::u64_tensor(c.config_hash));

  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_u32(os, c.version);
  detail::put_u32(os, static_cast<std::uint32_t>(t.size()));
  for (const auto& [name, m] : t) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_f64(os, m.data()[i]);
  }
  if (!os) throw FormatError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[sizeof kCheckpointMagic];
  if (!is.read(magic, sizeof magic)) throw FormatError("checkpoint truncated");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw FormatError("checkpoint: bad magic");
  const auto version = detail::get_u32(is);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = detail::get_u32(is);
  std::map<std::string, Matrix> tensors;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = detail::get_u32(is);
    if (len > 4096) throw FormatError("checkpoint: implausible tensor name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("checkpoint truncated");
    const auto rows = detail::get_u32(is);
    const auto cols = detail::get_u32(is);
    if (static_cast<std::uint64_t>(rows) * cols > (1ULL << 28)) throw FormatError("checkpoint: implausible tensor size");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = detail::get_f64(is);
    tensors.insert_or_assign(std::move(name), std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");

  const detail::TensorMap t(std::move(tensors));
  Checkpoint c;
  c.version = version;
  c.model.encoder = detail::read_network(t, "E");
  c.model.generator = detail::read_network(t, "G");
  c.model.discriminator = detail::read_network(t, "D");
  c.model.ae_opt = detail::read_adam(t, "adam.ae", autoencoder_parameters(c.model));
  c.model.d_opt = detail::read_adam(t, "adam.d", std::as_const(c.model.discriminator).parameters());
  c.model.g_opt = detail::read_adam(t, "adam.g", std::as_const(c.model.generator).parameters());
  c.iteration = detail::tensor_u64(t.at("iteration"));
  c.seed = detail::tensor_u64(t.at("seed"));
  c.config_hash = detail::tensor_u64(t.at("config_hash"));
  return c;
}

/// Writes via a temporary file and renames, so a reader never sees a partial file.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    write_checkpoint(os, c);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

/// Throws unless the checkpoint was produced under `expected` (or `force` is set).
inline void check_config_hash(const Checkpoint& c, std::uint64_t expected, bool force = false) {
  if (c.config_hash != expected && !force) {
    throw ValueError("checkpoint was trained with a different configuration (hash mismatch); use --force to load anyway");
  }
}

}  // namespace gngan
