#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace retinagan {

/// Named tensors plus a JSON metadata block.
///
/// On disk: the line "RETINAGAN-CKPT 1", an 8-byte little-endian header
/// length, the JSON header ({"meta": ..., "tensors": [{name, dtype, shape,
/// offset, nbytes}, ...]}), then the raw little-endian tensor bytes.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter and buffer of `module` as "<prefix>.<name>".
void collect_module_state(const torch::nn::Module& module, const std::string& prefix, Checkpoint& checkpoint);

/// Copies "<prefix>.<name>" tensors back into the module's parameters and
/// buffers. Throws on missing names or shape mismatches.
void restore_module_state(torch::nn::Module& module, const std::string& prefix, const Checkpoint& checkpoint);

}  // namespace retinagan
