#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dwm {

// Versioned binary container: magic, version, config hash, then named blocks
// of (dtype, shape, raw little-endian payload). float32 blocks carry network
// parameters and replay contents; u64 blocks carry counters. Written bytes
// are a pure function of the stored state, so identical states produce
// identical files on the same platform.
class Checkpoint {
 public:
  enum DType : std::uint32_t { kF32 = 0, kU64 = 1 };

  struct Block {
    DType dtype = kF32;
    std::vector<std::uint64_t> dims;
    std::vector<char> data;
  };

  std::uint64_t config_hash = 0;

  void put_matrix(const std::string& name, const Eigen::MatrixXf& m);
  Eigen::MatrixXf matrix(const std::string& name) const;

  void put_u64(const std::string& name, std::uint64_t v);
  std::uint64_t u64(const std::string& name) const;

  bool has(const std::string& name) const { return blocks_.count(name) > 0; }
  const std::map<std::string, Block>& blocks() const { return blocks_; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Block> blocks_;
};

}  // namespace dwm
