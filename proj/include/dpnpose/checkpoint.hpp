#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpnpose/config.hpp"
#include "dpnpose/optim.hpp"
#include "dpnpose/posenet.hpp"

namespace dpnpose {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// On-disk layout, all integers and floats little-endian:
///
///   magic     8 bytes  "DPNPOSE\0"
///   version   u32      (1)
///   config    u32 length + UTF-8 key=value text
///   step      u64
///   lr        f32
///   momentum  f32
///   params    u32 count + records
///   velocity  u32 count + records
///   crc32     u32 over all preceding bytes
///
/// record: u32 name length, name bytes, u32 rank, rank x u32 dims,
///         prod(dims) x f32 values.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::uint64_t step = 0;
  float learning_rate = 0.0f;
  float momentum = 0.0f;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> velocity;
};

Checkpoint make_checkpoint(const ProjectConfig& config, const PoseNetwork& network,
                           const OptimizerState& optimizer, std::uint64_t step);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
std::string serialize_checkpoint(const Checkpoint& ckpt);

// Throws CheckpointError naming the field that failed (bad magic, unknown
// version, checksum, truncation, implausible rank or size).
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Copies tensors into the network after checking that the names and shapes
// agree exactly; the error names the offending tensor.
void apply_checkpoint(const Checkpoint& ckpt, PoseNetwork& network,
                      OptimizerState* optimizer = nullptr);

struct LoadedModel {
  ProjectConfig config;
  std::unique_ptr<PoseNetwork> network;
};
LoadedModel model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dpnpose
