#include "adaptive_conv.hpp"

#include <cmath>

#include "core/error.hpp"

namespace mduit {

void AppearanceFilter::validate(int content_channels) const {
  require(weights.defined() && weights.value().rank() == 4,
          "appearance filter weights must be (c_out, c_in_per_group, k, k)");
  require(groups >= 1, "appearance filter groups must be positive");
  const int k = kernel_size();
  require(weights.value().dim(3) == k, "appearance filter kernel must be square");
  require(k % 2 == 1,
          "appearance filter kernel size " + std::to_string(k) +
              " is even; same padding is undefined",
          ErrorCode::kConfig);
  require(c_out() % groups == 0,
          "appearance filter c_out not divisible by groups");
  require(c_in_per_group() * groups == content_channels,
          "appearance filter " + shape_str(weights.shape()) + " with groups=" +
              std::to_string(groups) + " does not match " +
              std::to_string(content_channels) + " content channels");
  require(weights.value().all_finite(), "appearance filter has non-finite weights");
  if (bias.defined()) {
    require(bias.value().rank() == 1 && bias.value().dim(0) == c_out(),
            "appearance filter bias must have c_out entries");
    require(bias.value().all_finite(), "appearance filter has non-finite bias");
  }
}

int FilterSpec::weight_count() const {
  return channels * (channels / groups) * kernel_size * kernel_size;
}

void FilterSpec::validate() const {
  require(channels > 0 && groups > 0 && kernel_size > 0,
          "filter spec entries must be positive", ErrorCode::kConfig);
  require(channels % groups == 0, "content channels not divisible by groups",
          ErrorCode::kConfig);
  require(kernel_size % 2 == 1, "filter kernel size must be odd",
          ErrorCode::kConfig);
}

AppearanceFilter generate_filter(const ag::Var& target_features,
                                 const FilterEncoderParams& params,
                                 const FilterSpec& spec) {
  spec.validate();
  require(target_features.value().rank() == 3,
          "generate_filter expects a (c, h, w) feature map");
  const int c_in = params.fc1_weight.value().dim(1);
  require(target_features.value().dim(0) == c_in,
          "feature channels " + std::to_string(target_features.value().dim(0)) +
              " do not match filter encoder input " + std::to_string(c_in));
  require(params.fc2_weight.value().dim(0) == spec.output_count(),
          "filter encoder output size does not match filter spec");
  const ag::Var pooled = ag::global_avg_pool(target_features);
  const ag::Var hidden =
      ag::relu(ag::linear(pooled, params.fc1_weight, params.fc1_bias));
  const ag::Var flat = ag::linear(hidden, params.fc2_weight, params.fc2_bias);
  const int k = spec.kernel_size;
  AppearanceFilter f;
  f.groups = spec.groups;
  f.weights = ag::reshape(ag::slice(flat, 0, spec.weight_count()),
                          {spec.channels, spec.channels / spec.groups, k, k});
  if (spec.bias) f.bias = ag::slice(flat, spec.weight_count(), spec.channels);
  return f;
}

ag::Var apply(const ag::Var& content, const AppearanceFilter& filter) {
  require(content.defined() && content.value().rank() == 3,
          "apply expects a (c, h, w) content feature");
  filter.validate(content.value().dim(0));
  const int pad = (filter.kernel_size() - 1) / 2;
  return ag::conv2d(content, filter.weights, filter.bias, 1, pad,
                    filter.groups);
}

Tensor expand_block_diagonal(const AppearanceFilter& filter) {
  const Tensor& w = filter.weights.value();
  const int c_out = filter.c_out(), cpg = filter.c_in_per_group();
  const int k = filter.kernel_size(), groups = filter.groups;
  const int c_in = cpg * groups, opg = c_out / groups;
  Tensor dense(Shape{c_out, c_in, k, k}, 0.0);
  for (int o = 0; o < c_out; ++o) {
    const int g = o / opg;
    for (int i = 0; i < cpg; ++i)
      for (int t = 0; t < k * k; ++t)
        dense[(static_cast<std::size_t>(o) * c_in + g * cpg + i) * k * k + t] =
            w[(static_cast<std::size_t>(o) * cpg + i) * k * k + t];
  }
  return dense;
}

AppearanceFilter statistics_transfer_filter(const Tensor& source_mean,
                                            const Tensor& source_std,
                                            const Tensor& target_mean,
                                            const Tensor& target_std) {
  const std::size_t c = source_mean.size();
  require(source_std.size() == c && target_mean.size() == c &&
              target_std.size() == c,
          "statistics vectors must have equal length");
  Tensor w(Shape{static_cast<int>(c), 1, 1, 1}), b(Shape{static_cast<int>(c)});
  for (std::size_t i = 0; i < c; ++i) {
    require(source_std[i] > 0.0, "source channel std must be positive");
    w[i] = target_std[i] / source_std[i];
    b[i] = target_mean[i] - w[i] * source_mean[i];
  }
  AppearanceFilter f;
  f.weights = ag::Var(std::move(w));
  f.bias = ag::Var(std::move(b));
  f.groups = static_cast<int>(c);
  return f;
}

ag::Var flatten_weights(const AppearanceFilter& filter) {
  return ag::reshape(filter.weights,
                     {static_cast<int>(filter.weights.value().size())});
}

}  // namespace mduit
