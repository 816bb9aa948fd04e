#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "agunet/ghost.hpp"

namespace agunet {

struct AttentionBlockSpec {
  Index channels = 0;
  Index channel_reduction = 16;
  Index spatial_kernel = 7;
  bool channel = true;
  bool spatial = true;

  Index hidden_channels() const { return std::max<Index>(1, channels / channel_reduction); }

  void validate() const {
    if (channels < 1) throw ConfigurationError("attention: channels must be positive");
    if (channel_reduction < 1) throw ConfigurationError("attention: channel_reduction must be >= 1");
    if (spatial_kernel < 1 || spatial_kernel % 2 == 0) throw ConfigurationError("attention: spatial kernel must be odd");
  }
};

inline Index count_parameters(const AttentionBlockSpec& spec) {
  Index total = 0;
  const Index c = spec.channels;
  const Index h = spec.hidden_channels();
  if (spec.channel) total += 2 * c * h + c + h;
  if (spec.spatial) total += 2 * spec.spatial_kernel * spec.spatial_kernel + 1;
  return total;
}

template <typename Scalar>
struct ChannelAttentionWeights {
  Var<Scalar> reduce_weight;  // (hidden, C, 1, 1)
  Var<Scalar> reduce_bias;
  Var<Scalar> expand_weight;  // (C, hidden, 1, 1), zero at init
  Var<Scalar> expand_bias;
};

template <typename Scalar>
struct SpatialAttentionWeights {
  Var<Scalar> weight;  // (1, 2, k, k), zero at init
  Var<Scalar> bias;
};

/// Gate layers start at zero so every gate begins at sigmoid(0) = 0.5.
template <typename Scalar>
ChannelAttentionWeights<Scalar> make_channel_attention_weights(const AttentionBlockSpec& spec,
                                                               ParameterSet<Scalar>& params,
                                                               const std::string& prefix, Rng& rng) {
  spec.validate();
  const Index c = spec.channels;
  const Index h = spec.hidden_channels();
  return {params.add_parameter(prefix + ".reduce.weight", xavier_uniform<Scalar>(Shape{h, c, 1, 1}, rng)),
          params.add_parameter(prefix + ".reduce.bias", Tensor<Scalar>::Zero(Shape{1, h, 1, 1})),
          params.add_parameter(prefix + ".expand.weight", Tensor<Scalar>::Zero(Shape{c, h, 1, 1})),
          params.add_parameter(prefix + ".expand.bias", Tensor<Scalar>::Zero(Shape{1, c, 1, 1}))};
}

template <typename Scalar>
SpatialAttentionWeights<Scalar> make_spatial_attention_weights(const AttentionBlockSpec& spec,
                                                               ParameterSet<Scalar>& params,
                                                               const std::string& prefix) {
  spec.validate();
  const Index k = spec.spatial_kernel;
  return {params.add_parameter(prefix + ".weight", Tensor<Scalar>::Zero(Shape{1, 2, k, k})),
          params.add_parameter(prefix + ".bias", Tensor<Scalar>::Zero(Shape{1, 1, 1, 1}))};
}

/// Per-(sample, channel) gate in (0, 1): squeeze by global average pooling,
/// excite through a reduce/expand pair, broadcast over space.
template <typename Scalar>
Var<Scalar> channel_attention_gate(const Var<Scalar>& x, const AttentionBlockSpec& spec,
                                   const ChannelAttentionWeights<Scalar>& w) {
  if (x.shape().c != spec.channels) {
    throw ConfigurationError("channel attention expects " + std::to_string(spec.channels) + " channels, got " +
                             std::to_string(x.shape().c));
  }
  const Var<Scalar> squeezed = global_avg_pool(x);
  const Var<Scalar> hidden = relu(conv2d(squeezed, w.reduce_weight, w.reduce_bias));
  return sigmoid(conv2d(hidden, w.expand_weight, w.expand_bias));
}

template <typename Scalar>
Var<Scalar> channel_attention(const Var<Scalar>& x, const AttentionBlockSpec& spec,
                              const ChannelAttentionWeights<Scalar>& w) {
  return mul(x, channel_attention_gate(x, spec, w));
}

/// Per-(sample, pixel) gate in (0, 1) from a k x k convolution over the
/// channel-mean and channel-max maps, broadcast over channels.
template <typename Scalar>
Var<Scalar> spatial_attention_gate(const Var<Scalar>& x, const AttentionBlockSpec& spec,
                                   const SpatialAttentionWeights<Scalar>& w) {
  return sigmoid(conv2d(channel_mean_max(x), w.weight, w.bias, {1, spec.spatial_kernel / 2, 1}));
}

template <typename Scalar>
Var<Scalar> spatial_attention(const Var<Scalar>& x, const AttentionBlockSpec& spec,
                              const SpatialAttentionWeights<Scalar>& w) {
  return mul(x, spatial_attention_gate(x, spec, w));
}

struct DepthAttentionSpec {
  Index branch_count = 0;
  Index channels = 0;
};

template <typename Scalar>
struct DepthAttentionWeights {
  std::vector<Var<Scalar>> score_weight;  // per branch (1, C, 1, 1)
  std::vector<Var<Scalar>> score_bias;    // per branch (1, 1, 1, 1)
};

template <typename Scalar>
DepthAttentionWeights<Scalar> make_depth_attention_weights(const DepthAttentionSpec& spec,
                                                           ParameterSet<Scalar>& params,
                                                           const std::string& prefix) {
  if (spec.branch_count < 1 || spec.channels < 1) throw ConfigurationError("depth attention: empty spec");
  DepthAttentionWeights<Scalar> w;
  for (Index k = 0; k < spec.branch_count; ++k) {
    const std::string p = prefix + ".branch" + std::to_string(k);
    w.score_weight.push_back(params.add_parameter(p + ".weight", Tensor<Scalar>::Zero(Shape{1, spec.channels, 1, 1})));
    w.score_bias.push_back(params.add_parameter(p + ".bias", Tensor<Scalar>::Zero(Shape{1, 1, 1, 1})));
  }
  return w;
}

template <typename Scalar>
struct DepthAttentionResult {
  Var<Scalar> output;                 // sum_k w_k * branch_k
  Var<Scalar> weights;                // (N, K, 1, 1), a probability vector per sample
  std::vector<Var<Scalar>> weighted;  // w_k * branch_k
};

/// Softmax weighting across same-shape branches: each branch is scored from
/// its global-average descriptor and the scores are normalised per sample.
template <typename Scalar>
DepthAttentionResult<Scalar> depth_attention(const std::vector<Var<Scalar>>& branches, const DepthAttentionSpec& spec,
                                             const DepthAttentionWeights<Scalar>& w) {
  if (branches.empty()) throw UsageError("depth attention: no branches");
  const Shape s = branches.front().shape();
  for (const auto& b : branches) {
    if (!(b.shape() == s)) throw ConfigurationError("depth attention: branch shapes differ " + b.shape().str() + " vs " + s.str());
  }
  if (static_cast<Index>(branches.size()) != spec.branch_count || s.c != spec.channels) {
    throw ConfigurationError("depth attention: expected " + std::to_string(spec.branch_count) + " branches of " +
                             std::to_string(spec.channels) + " channels");
  }
  std::vector<Var<Scalar>> scores;
  for (std::size_t k = 0; k < branches.size(); ++k) {
    scores.push_back(conv2d(global_avg_pool(branches[k]), w.score_weight[k], w.score_bias[k]));
  }
  DepthAttentionResult<Scalar> result;
  result.weights = softmax_channels(concat_channels(scores));
  for (std::size_t k = 0; k < branches.size(); ++k) {
    result.weighted.push_back(mul(branches[k], slice_channels(result.weights, static_cast<Index>(k), 1)));
    result.output = k == 0 ? result.weighted.back() : add(result.output, result.weighted.back());
  }
  return result;
}

template <typename Scalar>
struct AttentionWrapWeights {
  GhostBottleneckWeights<Scalar> bottleneck;
  ChannelAttentionWeights<Scalar> channel;
  SpatialAttentionWeights<Scalar> spatial;
};

template <typename Scalar>
AttentionWrapWeights<Scalar> make_attention_wrap_weights(const GhostBottleneckSpec& bottleneck,
                                                         const AttentionBlockSpec& attn, ParameterSet<Scalar>& params,
                                                         const std::string& prefix, Rng& rng) {
  AttentionWrapWeights<Scalar> w;
  w.bottleneck = make_ghost_bottleneck_weights(bottleneck, params, prefix + ".bottleneck", rng);
  if (attn.channel) w.channel = make_channel_attention_weights(attn, params, prefix + ".channel_attention", rng);
  if (attn.spatial) w.spatial = make_spatial_attention_weights(attn, params, prefix + ".spatial_attention");
  return w;
}

/// A(G(x)): ghost bottleneck, then channel attention, then spatial attention.
template <typename Scalar>
Var<Scalar> attention_wrap(const Var<Scalar>& x, const GhostBottleneckSpec& bottleneck, const AttentionBlockSpec& attn,
                           const AttentionWrapWeights<Scalar>& w, bool training) {
  if ((attn.channel || attn.spatial) && attn.channels != bottleneck.out_channels) {
    throw ConfigurationError("attention channels " + std::to_string(attn.channels) +
                             " differ from bottleneck output " + std::to_string(bottleneck.out_channels));
  }
  Var<Scalar> y = ghost_bottleneck_forward(x, bottleneck, w.bottleneck, training);
  if (attn.channel) y = channel_attention(y, attn, w.channel);
  if (attn.spatial) y = spatial_attention(y, attn, w.spatial);
  return y;
}

}  // namespace agunet
