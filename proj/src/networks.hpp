#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "adaptive_conv.hpp"
#include "backbone.hpp"
#include "core/autograd.hpp"
#include "datamodel.hpp"

namespace mduit {

/// Layer widths and shapes for all six trainable networks. Every tensor
/// shape follows from these fields.
struct NetworkConfig {
  int image_size = 64;
  int content_channels = 64;  // c
  int base_channels = 16;     // E_c stem width, doubled at the first downsample
  int filter_k = 5;
  int filter_groups = 64;     // = c: depthwise
  bool filter_bias = true;
  int filter_hidden = 128;
  int embed_dim = 128;        // K
  int disc_channels = 16;
  double gem_eps = 1e-6;
  BackboneConfig backbone;

  static constexpr int kEncoderStride = 4;
  static constexpr int kDiscriminatorStride = 8;

  FilterSpec filter_spec() const;
  void validate() const;
};

enum class ParamKind { kWeight, kBias, kGemExponent };

struct Param {
  std::string name;  // qualified, e.g. "e_c.down1.weight"
  ag::Var var;
  ParamKind kind;
};

class ParamCollection {
 public:
  explicit ParamCollection(std::string name = {}) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }
  void add(const std::string& local, Shape shape, ParamKind kind);
  const ag::Var& operator[](std::string_view local) const;
  std::vector<Param>& entries() { return entries_; }
  const std::vector<Param>& entries() const { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::string name_;
  std::vector<Param> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct ModelParams {
  ParamCollection e_c{"e_c"}, e_a{"e_a"}, g{"g"}, d_i{"d_i"}, d_a{"d_a"},
      h{"h"};

  std::array<ParamCollection*, 6> all();
  std::array<const ParamCollection*, 6> all() const;
  std::array<ParamCollection*, 4> generator_side();
  std::array<ParamCollection*, 2> discriminator_side();
};

// Zero-filled tensors of the right shapes, all requiring grad. Values are
// set by the trainer's initializer or loaded from a checkpoint.
ModelParams allocate_params(const NetworkConfig& config);

class Model {
 public:
  Model(NetworkConfig config, ModelParams params);

  const NetworkConfig& config() const { return config_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }

  // E_c: (3, H, W) -> (c, H/4, W/4).
  ag::Var encode_content(const ag::Var& image) const;
  // Backbone + E_a.
  AppearanceFilter appearance_filter(const ag::Var& image) const;
  // G: (c, h, w) -> (3, 4h, 4w) in [-1, 1].
  ag::Var generate_image(const ag::Var& feature) const;
  // Patch probability maps (1, H/8, W/8).
  ag::Var discriminate_image(const ag::Var& image) const;
  ag::Var discriminate_appearance(const ag::Var& a, const ag::Var& b) const;
  // H: GeM pool -> FC -> ReLU -> FC -> L2 normalize.
  ag::Var embed(const ag::Var& feature) const;

  // G(E_c(source) (x) E_a(target)), no graph recorded.
  Image translate(const Image& source, const Image& target) const;
  // Content pathway descriptor used for mining and localization.
  Embedding embedding_of(const Image& image) const;

  // One line per tensor plus per-network totals; derived from the config.
  std::string parameter_report() const;

 private:
  void check_image(const ag::Var& image, const char* what) const;

  NetworkConfig config_;
  ModelParams params_;
  Backbone backbone_;
};

}  // namespace mduit
