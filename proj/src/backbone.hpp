#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/autograd.hpp"
#include "datamodel.hpp"

namespace mduit {

/// Frozen perceptual feature extractor feeding the appearance filter encoder.
///
/// The default backend is a fixed random stack of three conv + ReLU layers
/// (3x3 stride 1, then two 4x4 stride 2), He-initialized from `seed` with
/// zero biases. Alternatively the same layer layout can be loaded from a
/// tensor archive (`weights_path`) holding conv{1,2,3}.{weight,bias}.
/// `tap` picks the output layer: relu1 (stride 1), relu2 (stride 2) or
/// relu3 (stride 4, the default).
struct BackboneConfig {
  std::uint64_t seed = 1234;
  std::vector<int> channels{8, 16, 32};
  std::string tap = "relu3";
  std::string weights_path;  // empty = seeded random stack
};

class Backbone {
 public:
  explicit Backbone(BackboneConfig config = {});

  // Gradients flow to the input only; the weights are constants.
  ag::Var extract(const ag::Var& image) const;
  Tensor extract(const Image& image) const;

  int out_channels() const;
  int stride() const;
  int min_size() const { return 8; }
  const BackboneConfig& config() const { return config_; }

  // Serialized to the archive layout accepted by `weights_path`.
  void save_weights(const std::filesystem::path& path) const;
  // Checksum over all weights; constant for the lifetime of a Backbone.
  std::uint64_t fingerprint() const;

 private:
  struct Layer {
    ag::Var weight, bias;
    int stride, pad;
  };
  int tap_depth() const;

  BackboneConfig config_;
  std::vector<Layer> layers_;
};

}  // namespace mduit
