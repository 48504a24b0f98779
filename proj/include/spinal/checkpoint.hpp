#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "spinal/nn.hpp"
#include "spinal/optim.hpp"

namespace spinal {

// On-disk layout: 8-byte magic "SPINALCK", little-endian u64 header length,
// JSON header (format version, model config, train-config digest, tensor
// directory with shapes and offsets), then all tensor payloads as
// little-endian 64-bit reals in directory order.
struct Checkpoint {
  int format_version = 1;
  nn::ModelConfig config;
  std::string train_digest;
  nn::ParamMap params;
  std::optional<AdamState> adam;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a hex digest, used to stamp checkpoints with their train config.
std::string fnv1a_hex(const std::string& text);

}  // namespace spinal
