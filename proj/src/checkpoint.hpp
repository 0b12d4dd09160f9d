#pragma once

#include <filesystem>

#include "config.hpp"
#include "networks.hpp"
#include "optim.hpp"

namespace mduit {

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  Adam optimizer{0.5, 0.999};
  int epoch = 0;  // completed epochs
  long step = 0;  // completed steps
};

// One archive with all six parameter collections, the Adam state, the
// counters and the canonical config text with its hash.
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config,
                     const ModelParams& params, const Adam& optimizer, int epoch,
                     long step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Convenience for inference: the model described by a checkpoint.
Model load_model(const std::filesystem::path& path);

}  // namespace mduit
