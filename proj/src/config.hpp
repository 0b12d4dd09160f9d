#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "datamodel.hpp"
#include "networks.hpp"

namespace mduit {

// Everything that determines a training run. The output directory is not
// part of it, so a run can be resumed or replayed elsewhere.
struct TrainConfig {
  HyperParams hp;

  int image_size = 64;
  int content_channels = 64;
  int base_channels = 16;
  int embed_dim = 128;
  int filter_hidden = 128;
  int filter_groups = 0;  // 0: one group per content channel (depthwise)
  bool filter_bias = true;
  int disc_channels = 16;
  double gem_eps = 1e-6;
  std::uint64_t backbone_seed = 1234;
  std::string backbone_tap = "relu3";
  std::string backbone_weights;

  // "normal": weights ~ N(0, init_std^2). "fan_in": std sqrt(2 / fan_in) per
  // tensor, which keeps activations from shrinking layer by layer in the
  // normalization-free encoder and generator.
  std::string init_scheme = "normal";

  int k_candidates = 20;
  std::uint64_t seed = 1;
  int checkpoint_interval = 1;  // epochs
  int steps_per_epoch = 0;      // 0: one step per training record
  // Replaces the translated image by a color-jittered copy of the source
  // and trains only the content/embedding path with the contrastive loss.
  bool ablation_no_i2i = false;
  double jitter_strength = 0.3;

  NetworkConfig network() const;
  void validate() const;

  // Applies one `key = value` assignment; unknown keys and malformed
  // values are config errors.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // Sorted `key = value` lines; identical configs dump identically.
  std::string dump() const;
  std::uint64_t hash() const;
};

// Lines are `key = value`; `#` starts a comment; blank lines are ignored.
void apply_config_text(TrainConfig& config, const std::string& text,
                       const std::string& origin = "config");
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& config);

// 2e-4-style shortest round-trip formatting.
std::string format_double(double v);

}  // namespace mduit
