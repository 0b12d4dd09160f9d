#pragma once

#include "core/autograd.hpp"

namespace mduit {

/// Convolution weights generated from a target image. Shape
/// (c_out, c_in_per_group, k, k) with `groups` groups over the content
/// channels; the default is depthwise (groups = c,
/// c_in_per_group = 1, c_out = c).
struct AppearanceFilter {
  ag::Var weights;
  ag::Var bias;  // (c_out) or undefined
  int groups = 1;

  int c_out() const { return weights.value().dim(0); }
  int c_in_per_group() const { return weights.value().dim(1); }
  int kernel_size() const { return weights.value().dim(2); }
  bool has_bias() const { return bias.defined(); }

  // Throws unless the shape is consistent with `content_channels` channels
  // and every entry is finite. Even kernels are a config error.
  void validate(int content_channels) const;
};

struct FilterSpec {
  int channels = 64;  // content channels c (= c_out)
  int groups = 64;
  int kernel_size = 5;
  bool bias = true;

  int weight_count() const;
  int output_count() const { return weight_count() + (bias ? channels : 0); }
  void validate() const;
};

/// E_a: global average pool over backbone features, two fully-connected
/// layers (ReLU between), then reshape of the flat output into a filter.
struct FilterEncoderParams {
  ag::Var fc1_weight, fc1_bias;  // (hidden, c_backbone), (hidden)
  ag::Var fc2_weight, fc2_bias;  // (spec.output_count(), hidden), (...)
};

AppearanceFilter generate_filter(const ag::Var& target_features,
                                 const FilterEncoderParams& params,
                                 const FilterSpec& spec);

// Grouped 2D convolution of content features (c, h, w) with "same" zero
// padding of (k - 1) / 2.
ag::Var apply(const ag::Var& content, const AppearanceFilter& filter);

// Dense (c_out, c, k, k) weights equal to the grouped filter laid out
// block-diagonally.
Tensor expand_block_diagonal(const AppearanceFilter& filter);

// 1x1 depthwise filter that maps per-channel statistics (mean, std) of a
// source feature onto those of a target: w = std_t / std_s,
// b = mean_t - w * mean_s.
AppearanceFilter statistics_transfer_filter(const Tensor& source_mean,
                                            const Tensor& source_std,
                                            const Tensor& target_mean,
                                            const Tensor& target_std);

// Flattened weights (bias excluded); used by cosine-based losses and
// similarity reports.
ag::Var flatten_weights(const AppearanceFilter& filter);

}  // namespace mduit
