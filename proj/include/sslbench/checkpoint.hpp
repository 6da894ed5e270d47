#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sslbench/nn.hpp"

namespace sslbench {

// File layout: "SSLBCKPT", u32 version, u64 header length, JSON header,
// then the raw float64 payload. The header carries caller metadata under
// "meta" and a tensor index {name, shape, offset} where offsets count
// doubles from the start of the payload.
struct Checkpoint {
  nlohmann::ordered_json meta;
  std::vector<nn::NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const nlohmann::ordered_json& meta,
                     const std::vector<nn::NamedTensor>& tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Content hash of a checkpoint file.
std::string checkpoint_id(const std::filesystem::path& path);

// Copies every state entry of `module` from `ckpt[prefix + name]`. Entries
// listed in `skip` are left alone. Missing names or shape mismatches throw.
void load_module_state(const Checkpoint& ckpt, nn::Module& module, const std::string& prefix = "",
                       const std::vector<std::string>& skip = {});

}  // namespace sslbench
