#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vcf/nn/layers.hpp"
#include "vcf/nn/tensor.hpp"

namespace vcf::nn {

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct CheckpointLayer {
  LayerInfo info;
  std::vector<std::string> params;  ///< names into Checkpoint::tensors
};

/// A trained model on disk: `model.json` holds the architecture descriptor
/// (kind, version, seed, epoch, training config, layer list with parameter
/// shapes); `model.bin` holds every parameter tensor as little-endian float32,
/// concatenated in descriptor order.
struct Checkpoint {
  int version = 1;
  std::string kind;
  std::uint64_t seed = 0;
  int epoch = 0;
  std::vector<std::pair<std::string, double>> config;
  std::vector<CheckpointLayer> layers;
  std::vector<NamedTensor> tensors;

  const Tensor<float>& tensor(const std::string& name) const;
  double config_value(const std::string& key, double fallback) const;
};

std::string checkpoint_descriptor(const Checkpoint& ck);
std::string checkpoint_blob(const Checkpoint& ck);
Checkpoint parse_checkpoint(const std::string& descriptor, const std::string& blob);

/// `dir` is created if needed; throws IoError on failure.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace vcf::nn
