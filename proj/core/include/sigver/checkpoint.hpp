#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sigver/model.hpp"

namespace sigver {

// Checkpoint file: 8-byte magic "SGVCKPT1", uint64 LE manifest length, JSON
// manifest, then a concatenated little-endian float32 payload. The manifest
// lists {name, shape, dtype, byte_offset} per tensor (offsets relative to
// the payload start) plus the model config and training subject ids;
// optimizer moments ride along as "adam.m.<name>" / "adam.v.<name>" when the
// checkpoint is taken mid-training.
struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> training_subjects;
  std::map<std::string, nn::Tensor<float>> tensors;
  std::int64_t adam_step = 0;
  bool has_optimizer_state = false;
};

void save_checkpoint(const std::filesystem::path& path,
                     const nn::SiameseModel<float>& model,
                     const std::vector<std::string>& training_subjects,
                     const nn::AdamOptimizer<float>* optimizer = nullptr);

Checkpoint read_checkpoint(const std::filesystem::path& path);

// Rebuilds the model from the stored config and overwrites every parameter
// from the checkpoint tensors.
nn::SiameseModel<float> model_from_checkpoint(const Checkpoint& checkpoint);

// Restores Adam moments saved alongside the parameters.
void restore_optimizer(const Checkpoint& checkpoint,
                       const nn::SiameseModel<float>& model,
                       nn::AdamOptimizer<float>& optimizer);

}  // namespace sigver
