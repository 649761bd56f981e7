#pragma once

#include <string>
#include <vector>

#include "eisderm/nn.hpp"
#include "eisderm/tensor.hpp"

namespace eisderm {

// Flat binary parameter container:
//   magic "EDCK", u32 version, u64 entry count,
//   per entry: u32 name length, name bytes, u32 rank, u64 dims..., f64 payload
// (little-endian throughout).
struct CheckpointEntry {
  std::string name;
  ad::Shape shape;
  std::vector<double> data;
};

void save_checkpoint(const std::string& path,
                     const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

// Serialize / restore a model's ParamMap (tensors + buffers).
void save_params(const std::string& path, const nn::ParamMap& pm);
void load_params(const std::string& path, nn::ParamMap& pm);

}  // namespace eisderm
