#include "networks.hpp"

#include <sstream>

#include "core/error.hpp"

namespace mduit {

namespace {

constexpr double kLeakySlope = 0.2;

void add_conv(ParamCollection& pc, const std::string& name, int c_in,
              int c_out, int k) {
  pc.add(name + ".weight", {c_out, c_in, k, k}, ParamKind::kWeight);
  pc.add(name + ".bias", {c_out}, ParamKind::kBias);
}

void add_linear(ParamCollection& pc, const std::string& name, int n_in,
                int n_out) {
  pc.add(name + ".weight", {n_out, n_in}, ParamKind::kWeight);
  pc.add(name + ".bias", {n_out}, ParamKind::kBias);
}

ag::Var conv(const ParamCollection& pc, const std::string& name,
             const ag::Var& x, int stride, int pad) {
  return ag::conv2d(x, pc[name + ".weight"], pc[name + ".bias"], stride, pad);
}

ag::Var residual_block(const ParamCollection& pc, const std::string& name,
                       const ag::Var& x) {
  ag::Var y = ag::relu(conv(pc, name + ".conv1", x, 1, 1));
  y = conv(pc, name + ".conv2", y, 1, 1);
  return ag::add(x, y);
}

void add_discriminator(ParamCollection& pc, int c_in, int d) {
  add_conv(pc, "conv1", c_in, d, 4);
  add_conv(pc, "conv2", d, 2 * d, 4);
  add_conv(pc, "conv3", 2 * d, 4 * d, 4);
  add_conv(pc, "score", 4 * d, 1, 3);
}

ag::Var run_discriminator(const ParamCollection& pc, const ag::Var& x) {
  ag::Var y = ag::leaky_relu(conv(pc, "conv1", x, 2, 1), kLeakySlope);
  y = ag::leaky_relu(conv(pc, "conv2", y, 2, 1), kLeakySlope);
  y = ag::leaky_relu(conv(pc, "conv3", y, 2, 1), kLeakySlope);
  return ag::sigmoid(conv(pc, "score", y, 1, 1));
}

}  // namespace

FilterSpec NetworkConfig::filter_spec() const {
  return {content_channels, filter_groups, filter_k, filter_bias};
}

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* what) {
    require(v > 0, std::string(what) + " must be positive", ErrorCode::kConfig);
  };
  positive(image_size, "image_size");
  positive(content_channels, "content_channels");
  positive(base_channels, "base_channels");
  positive(filter_hidden, "filter_hidden");
  positive(embed_dim, "embed_dim");
  positive(disc_channels, "disc_channels");
  require(image_size % kDiscriminatorStride == 0,
          "image_size must be a multiple of 8", ErrorCode::kConfig);
  require(gem_eps > 0.0, "gem_eps must be positive", ErrorCode::kConfig);
  filter_spec().validate();
}

void ParamCollection::add(const std::string& local, Shape shape,
                          ParamKind kind) {
  require(!index_.contains(local), "duplicate parameter " + name_ + "." + local,
          ErrorCode::kInvalidArgument);
  index_.emplace(local, entries_.size());
  entries_.push_back({name_ + "." + local, ag::Var(Tensor(std::move(shape)), true),
                      kind});
}

const ag::Var& ParamCollection::operator[](std::string_view local) const {
  auto it = index_.find(local);
  if (it == index_.end())
    fail(ErrorCode::kInvalidArgument,
         "no parameter " + name_ + "." + std::string(local));
  return entries_[it->second].var;
}

std::size_t ParamCollection::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_) n += p.var.value().size();
  return n;
}

void ParamCollection::zero_grad() {
  for (auto& p : entries_) p.var.zero_grad();
}

std::array<ParamCollection*, 6> ModelParams::all() {
  return {&e_c, &e_a, &g, &d_i, &d_a, &h};
}
std::array<const ParamCollection*, 6> ModelParams::all() const {
  return {&e_c, &e_a, &g, &d_i, &d_a, &h};
}
std::array<ParamCollection*, 4> ModelParams::generator_side() {
  return {&e_c, &e_a, &g, &h};
}
std::array<ParamCollection*, 2> ModelParams::discriminator_side() {
  return {&d_i, &d_a};
}

ModelParams allocate_params(const NetworkConfig& cfg) {
  cfg.validate();
  const int b = cfg.base_channels, c = cfg.content_channels;
  ModelParams p;

  add_conv(p.e_c, "stem", 3, b, 3);
  add_conv(p.e_c, "down1", b, 2 * b, 4);
  add_conv(p.e_c, "down2", 2 * b, c, 4);
  for (const char* r : {"res1", "res2"}) {
    add_conv(p.e_c, std::string(r) + ".conv1", c, c, 3);
    add_conv(p.e_c, std::string(r) + ".conv2", c, c, 3);
  }

  const Backbone probe(cfg.backbone);
  add_linear(p.e_a, "fc1", probe.out_channels(), cfg.filter_hidden);
  add_linear(p.e_a, "fc2", cfg.filter_hidden, cfg.filter_spec().output_count());

  for (const char* r : {"res1", "res2"}) {
    add_conv(p.g, std::string(r) + ".conv1", c, c, 3);
    add_conv(p.g, std::string(r) + ".conv2", c, c, 3);
  }
  add_conv(p.g, "up1", c, 2 * b, 3);
  add_conv(p.g, "up2", 2 * b, b, 3);
  add_conv(p.g, "out", b, 3, 3);

  add_discriminator(p.d_i, 3, cfg.disc_channels);
  add_discriminator(p.d_a, 6, cfg.disc_channels);

  p.h.add("gem_p", {1}, ParamKind::kGemExponent);
  add_linear(p.h, "fc1", c, cfg.embed_dim);
  add_linear(p.h, "fc2", cfg.embed_dim, cfg.embed_dim);
  return p;
}

Model::Model(NetworkConfig config, ModelParams params)
    : config_(std::move(config)),
      params_(std::move(params)),
      backbone_(config_.backbone) {
  config_.validate();
}

void Model::check_image(const ag::Var& image, const char* what) const {
  require(image.defined() && image.value().rank() == 3 &&
              image.value().dim(0) == 3,
          std::string(what) + ": expected a (3, H, W) image, got " +
              (image.defined() ? shape_str(image.shape()) : "nothing"));
  require(image.value().dim(1) % NetworkConfig::kDiscriminatorStride == 0 &&
              image.value().dim(2) % NetworkConfig::kDiscriminatorStride == 0,
          std::string(what) + ": image size must be a multiple of 8, got " +
              shape_str(image.shape()));
}

ag::Var Model::encode_content(const ag::Var& image) const {
  check_image(image, "encode_content");
  const auto& p = params_.e_c;
  ag::Var x = ag::relu(conv(p, "stem", image, 1, 1));
  x = ag::relu(conv(p, "down1", x, 2, 1));
  x = ag::relu(conv(p, "down2", x, 2, 1));
  x = residual_block(p, "res1", x);
  return residual_block(p, "res2", x);
}

AppearanceFilter Model::appearance_filter(const ag::Var& image) const {
  check_image(image, "appearance_filter");
  const auto& p = params_.e_a;
  FilterEncoderParams fp{p["fc1.weight"], p["fc1.bias"], p["fc2.weight"],
                         p["fc2.bias"]};
  return generate_filter(backbone_.extract(image), fp, config_.filter_spec());
}

ag::Var Model::generate_image(const ag::Var& feature) const {
  require(feature.defined() && feature.value().rank() == 3 &&
              feature.value().dim(0) == config_.content_channels,
          "generate_image: expected (" +
              std::to_string(config_.content_channels) +
              ", h, w) feature, got " +
              (feature.defined() ? shape_str(feature.shape()) : "nothing"));
  const auto& p = params_.g;
  ag::Var x = residual_block(p, "res1", feature);
  x = residual_block(p, "res2", x);
  x = ag::relu(conv(p, "up1", ag::upsample_nearest2x(x), 1, 1));
  x = ag::relu(conv(p, "up2", ag::upsample_nearest2x(x), 1, 1));
  return ag::tanh(conv(p, "out", x, 1, 1));
}

ag::Var Model::discriminate_image(const ag::Var& image) const {
  check_image(image, "discriminate_image");
  return run_discriminator(params_.d_i, image);
}

ag::Var Model::discriminate_appearance(const ag::Var& a,
                                       const ag::Var& b) const {
  check_image(a, "discriminate_appearance");
  check_image(b, "discriminate_appearance");
  require(a.shape() == b.shape(), "discriminate_appearance: size mismatch " +
                                      shape_str(a.shape()) + " vs " +
                                      shape_str(b.shape()));
  return run_discriminator(params_.d_a, ag::concat_channels(a, b));
}

ag::Var Model::embed(const ag::Var& feature) const {
  require(feature.defined() && feature.value().rank() == 3 &&
              feature.value().dim(0) == config_.content_channels,
          "embed: expected a (c, h, w) content feature");
  require(feature.value().all_finite(), "embed: non-finite content feature");
  const auto& p = params_.h;
  const ag::Var pooled = ag::gem_pool(feature, p["gem_p"], config_.gem_eps);
  const ag::Var hidden =
      ag::relu(ag::linear(pooled, p["fc1.weight"], p["fc1.bias"]));
  return ag::l2_normalize(ag::linear(hidden, p["fc2.weight"], p["fc2.bias"]));
}

Image Model::translate(const Image& source, const Image& target) const {
  ag::NoGradGuard guard;
  const ag::Var f = encode_content(ag::Var(source.tensor()));
  const AppearanceFilter w = appearance_filter(ag::Var(target.tensor()));
  return Image::clamped(generate_image(apply(f, w)).value());
}

Embedding Model::embedding_of(const Image& image) const {
  ag::NoGradGuard guard;
  const ag::Var z = embed(encode_content(ag::Var(image.tensor())));
  return Embedding(z.value().storage());
}

std::string Model::parameter_report() const {
  std::ostringstream os;
  std::size_t total = 0;
  for (const ParamCollection* pc : params_.all()) {
    for (const auto& p : pc->entries())
      os << p.name << ' ' << shape_str(p.var.shape()) << '\n';
    os << pc->name() << " total " << pc->scalar_count() << '\n';
    total += pc->scalar_count();
  }
  os << "all total " << total << '\n';
  return os.str();
}

}  // namespace mduit
