#include "backbone.hpp"

#include <cmath>
#include <random>

#include "core/archive.hpp"
#include "core/error.hpp"
#include "core/hash.hpp"

namespace mduit {

namespace {
constexpr int kKernels[3] = {3, 4, 4};
constexpr int kStrides[3] = {1, 2, 2};
constexpr int kPads[3] = {1, 1, 1};
}  // namespace

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  require(config_.channels.size() == 3, "backbone needs exactly 3 layers",
          ErrorCode::kConfig);
  (void)tap_depth();
  TensorArchive loaded;
  const bool from_file = !config_.weights_path.empty();
  if (from_file) loaded = read_archive(config_.weights_path);
  std::mt19937_64 rng(config_.seed);
  int c_in = 3;
  for (int i = 0; i < 3; ++i) {
    const int c_out = config_.channels[i];
    require(c_out > 0, "backbone channel counts must be positive",
            ErrorCode::kConfig);
    const int k = kKernels[i];
    const Shape wshape{c_out, c_in, k, k};
    Tensor w(wshape), b(Shape{c_out}, 0.0);
    const std::string prefix = "conv" + std::to_string(i + 1);
    if (from_file) {
      w = loaded.get(prefix + ".weight");
      b = loaded.get(prefix + ".bias");
      require(w.shape() == wshape && b.shape() == Shape{c_out},
              "backbone weights file has wrong shape for " + prefix,
              ErrorCode::kConfig);
    } else {
      std::normal_distribution<double> n01(0.0, std::sqrt(2.0 / (c_in * k * k)));
      for (double& v : w.values()) v = n01(rng);
    }
    layers_.push_back({ag::Var(std::move(w)), ag::Var(std::move(b)),
                       kStrides[i], kPads[i]});
    c_in = c_out;
  }
}

int Backbone::tap_depth() const {
  if (config_.tap == "relu1") return 1;
  if (config_.tap == "relu2") return 2;
  if (config_.tap == "relu3") return 3;
  fail(ErrorCode::kConfig, "unknown backbone tap layer '" + config_.tap +
                               "' (expected relu1, relu2 or relu3)");
}

int Backbone::out_channels() const { return config_.channels[tap_depth() - 1]; }

int Backbone::stride() const {
  int s = 1;
  for (int i = 0; i < tap_depth(); ++i) s *= kStrides[i];
  return s;
}

ag::Var Backbone::extract(const ag::Var& image) const {
  require(image.value().rank() == 3 && image.value().dim(0) == 3,
          "backbone input must be a (3, H, W) image");
  const int h = image.value().dim(1), w = image.value().dim(2);
  require(h >= min_size() && w >= min_size(),
          "image smaller than backbone minimum of " +
              std::to_string(min_size()) + " pixels");
  require(h % 4 == 0 && w % 4 == 0,
          "backbone input size must be a multiple of 4");
  ag::Var x = image;
  for (int i = 0; i < tap_depth(); ++i) {
    const Layer& l = layers_[i];
    x = ag::relu(ag::conv2d(x, l.weight, l.bias, l.stride, l.pad));
  }
  return x;
}

Tensor Backbone::extract(const Image& image) const {
  ag::NoGradGuard guard;
  return extract(ag::Var(image.tensor())).value();
}

void Backbone::save_weights(const std::filesystem::path& path) const {
  TensorArchive ar;
  ar.meta["kind"] = "backbone";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "conv" + std::to_string(i + 1);
    ar.tensors.emplace_back(prefix + ".weight", layers_[i].weight.value());
    ar.tensors.emplace_back(prefix + ".bias", layers_[i].bias.value());
  }
  write_archive(path, ar);
}

std::uint64_t Backbone::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers_) {
    for (const Tensor* t : {&l.weight.value(), &l.bias.value()}) {
      h = fnv1a64(std::span<const unsigned char>(
                      reinterpret_cast<const unsigned char*>(t->data()),
                      t->size() * sizeof(double)),
                  h);
    }
  }
  return h;
}

}  // namespace mduit
