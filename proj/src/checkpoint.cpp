#include "dwm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dwm/errors.hpp"

namespace dwm {

namespace {

constexpr char kMagic[8] = {'D', 'W', 'M', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

}  // namespace

void Checkpoint::put_matrix(const std::string& name, const Eigen::MatrixXf& m) {
  Block b;
  b.dtype = kF32;
  b.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  b.data.resize(sizeof(float) * m.size());
  std::memcpy(b.data.data(), m.data(), b.data.size());
  blocks_[name] = std::move(b);
}

Eigen::MatrixXf Checkpoint::matrix(const std::string& name) const {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) throw IoError("checkpoint: missing block '" + name + "'");
  const Block& b = it->second;
  if (b.dtype != kF32 || b.dims.size() != 2) throw IoError("checkpoint: block '" + name + "' is not an f32 matrix");
  Eigen::MatrixXf m(static_cast<Eigen::Index>(b.dims[0]), static_cast<Eigen::Index>(b.dims[1]));
  if (b.data.size() != sizeof(float) * m.size()) throw IoError("checkpoint: block '" + name + "' has a bad payload size");
  std::memcpy(m.data(), b.data.data(), b.data.size());
  return m;
}

void Checkpoint::put_u64(const std::string& name, std::uint64_t v) {
  Block b;
  b.dtype = kU64;
  b.dims = {1};
  b.data.resize(sizeof(std::uint64_t));
  std::memcpy(b.data.data(), &v, sizeof(v));
  blocks_[name] = std::move(b);
}

std::uint64_t Checkpoint::u64(const std::string& name) const {
  auto it = blocks_.find(name);
  if (it == blocks_.end()) throw IoError("checkpoint: missing block '" + name + "'");
  if (it->second.dtype != kU64) throw IoError("checkpoint: block '" + name + "' is not u64");
  std::uint64_t v = 0;
  std::memcpy(&v, it->second.data.data(), sizeof(v));
  return v;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, config_hash);
  write_pod(out, static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& [name, b] : blocks_) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(b.dtype));
    write_pod(out, static_cast<std::uint32_t>(b.dims.size()));
    for (std::uint64_t d : b.dims) write_pod(out, d);
    write_pod(out, static_cast<std::uint64_t>(b.data.size()));
    out.write(b.data.data(), static_cast<std::streamsize>(b.data.size()));
  }
  if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("checkpoint: bad magic in '" + path + "'");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) throw IoError("checkpoint: unsupported version");
  Checkpoint ck;
  ck.config_hash = read_pod<std::uint64_t>(in);
  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Block b;
    b.dtype = static_cast<DType>(read_pod<std::uint32_t>(in));
    const auto rank = read_pod<std::uint32_t>(in);
    b.dims.resize(rank);
    for (auto& d : b.dims) d = read_pod<std::uint64_t>(in);
    const auto payload = read_pod<std::uint64_t>(in);
    b.data.resize(payload);
    in.read(b.data.data(), static_cast<std::streamsize>(payload));
    if (!in) throw IoError("checkpoint: truncated block '" + name + "'");
    ck.blocks_[name] = std::move(b);
  }
  return ck;
}

}  // namespace dwm
