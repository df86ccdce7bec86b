#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tokencast/core/tensor.hpp"

namespace tokencast::io {

inline constexpr int kCheckpointVersion = 1;

// Ordered list of named tensors; order fixes the payload layout.
using NamedTensors = std::vector<std::pair<std::string, core::Tensor>>;

// "TKC1", u32 little-endian header length, JSON header, then the payload of
// little-endian doubles in directory order.
struct Checkpoint {
  int version = kCheckpointVersion;
  std::string stage;
  nlohmann::json meta = nlohmann::json::object();
  NamedTensors tensors;

  const core::Tensor& tensor(const std::string& name) const;
  bool has(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// SHA-256 over a tensor's values; used to prove tensors were not modified.
std::string tensor_digest(const core::Tensor& t);

// Copies values of each named tensor from the checkpoint into the matching
// destination (shapes must agree).
void restore_tensors(const Checkpoint& ckpt, const NamedTensors& dest);

}  // namespace tokencast::io
