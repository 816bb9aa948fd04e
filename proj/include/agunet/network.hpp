#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "agunet/attention.hpp"

namespace agunet {

/// How the branches entering a nested node are merged.
enum class MergeMode { Concat, Sum };

inline std::string to_string(MergeMode mode) { return mode == MergeMode::Concat ? "concat" : "sum"; }
inline MergeMode merge_mode_from_string(const std::string& s) {
  if (s == "concat") return MergeMode::Concat;
  if (s == "sum") return MergeMode::Sum;
  throw ConfigurationError("unknown merge mode '" + s + "' (expected concat or sum)");
}

struct NetworkSpec {
  Index depth = 5;
  Index base_channels = 32;
  Index in_channels = 1;
  Index num_classes = 2;
  Index ghost_ratio = 2;
  Index expansion = 2;  // bottleneck hidden width = expansion * out_channels
  Index channel_reduction = 16;
  Index spatial_kernel = 7;
  bool channel_attention = true;
  bool spatial_attention = true;
  bool depth_attention = true;
  bool deep_supervision = true;
  MergeMode merge_mode = MergeMode::Concat;

  Index node_count() const { return depth * (depth + 1) / 2; }
  Index channels(Index level) const { return base_channels << level; }
  /// Input height and width must be multiples of this.
  Index input_multiple() const { return Index{1} << (depth - 1); }
  Index head_count() const { return depth == 1 || !deep_supervision ? 1 : depth - 1; }

  void validate() const {
    if (depth < 1 || depth > 8) throw ConfigurationError("network depth must be in 1..8, got " + std::to_string(depth));
    if (base_channels < 1 || in_channels < 1) throw ConfigurationError("network channel counts must be positive");
    if (num_classes < 2) throw ConfigurationError("network needs at least 2 classes");
    if (ghost_ratio < 1 || expansion < 1) throw ConfigurationError("ghost_ratio and expansion must be >= 1");
    if (base_channels % ghost_ratio != 0) {
      throw ConfigurationError("base_channels " + std::to_string(base_channels) + " not divisible by ghost_ratio " +
                               std::to_string(ghost_ratio));
    }
    if (channel_reduction < 1) throw ConfigurationError("channel_reduction must be >= 1");
    if (spatial_kernel < 1 || spatial_kernel % 2 == 0) throw ConfigurationError("spatial_kernel must be odd");
  }
};

/// Per-node layout of the triangular grid X(level, depth), level + depth < L.
struct NodeLayout {
  Index level = 0;
  Index depth = 0;
  GhostBottleneckSpec bottleneck;
  AttentionBlockSpec attention;
  Index branch_count = 0;  // inputs merged at a nested node (skips + up-sampled)

  std::string name() const { return "node_" + std::to_string(level) + "_" + std::to_string(depth); }
};

/// Nodes in evaluation order: the encoder column first, then each nested
/// column j = 1..L-1 from the top level down.
inline std::vector<NodeLayout> node_layouts(const NetworkSpec& spec) {
  spec.validate();
  std::vector<NodeLayout> nodes;
  auto make = [&](Index i, Index j, Index in_channels) {
    NodeLayout n;
    n.level = i;
    n.depth = j;
    const Index out = spec.channels(i);
    n.bottleneck = GhostBottleneckSpec{in_channels, out, spec.expansion * out, 1, spec.ghost_ratio};
    n.attention = AttentionBlockSpec{out, spec.channel_reduction, spec.spatial_kernel, spec.channel_attention,
                                     spec.spatial_attention};
    n.branch_count = j == 0 ? 1 : j + 1;
    nodes.push_back(n);
  };
  for (Index i = 0; i < spec.depth; ++i) make(i, 0, i == 0 ? spec.in_channels : spec.channels(i - 1));
  for (Index j = 1; j < spec.depth; ++j) {
    for (Index i = 0; i + j < spec.depth; ++i) {
      const Index c = spec.channels(i);
      make(i, j, spec.merge_mode == MergeMode::Concat ? (j + 1) * c : c);
    }
  }
  return nodes;
}

/// Analytic trainable-parameter count, independent of any built network.
inline Index count_parameters(const NetworkSpec& spec) {
  Index total = 0;
  for (const auto& n : node_layouts(spec)) {
    total += count_parameters(n.bottleneck) + count_parameters(n.attention);
    if (n.depth > 0) {
      const Index c = spec.channels(n.level);
      total += spec.channels(n.level + 1) * c + c;            // up-sampling projection
      if (spec.depth_attention) total += n.branch_count * (c + 1);  // branch scorers
    }
  }
  total += spec.head_count() * (spec.base_channels * spec.num_classes + spec.num_classes);
  return total;
}

template <typename Scalar>
struct NetworkOutput {
  std::vector<Var<Scalar>> heads;  // per-head logits, top row X(0, 1..L-1)
  Var<Scalar> fused;               // sum of the heads
};

/// Elementwise sum of per-head logits.
template <typename Scalar>
Var<Scalar> fuse_outputs(const std::vector<Var<Scalar>>& heads) {
  if (heads.empty()) throw UsageError("fuse_outputs: no heads");
  Var<Scalar> fused = heads.front();
  for (std::size_t k = 1; k < heads.size(); ++k) fused = add(fused, heads[k]);
  return fused;
}

/// With deep supervision off only the last head contributes.
template <typename Scalar>
Var<Scalar> fuse_outputs(const std::vector<Var<Scalar>>& heads, bool deep_supervision) {
  if (heads.empty()) throw UsageError("fuse_outputs: no heads");
  return deep_supervision ? fuse_outputs(heads) : heads.back();
}

/// Nested encoder-decoder of attention-wrapped ghost bottlenecks.
template <typename Scalar>
class Network {
 public:
  Network(const NetworkSpec& spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
    spec_.validate();
    Rng rng(seed);
    for (const auto& layout : node_layouts(spec_)) {
      GridNode node;
      node.layout = layout;
      const std::string prefix = layout.name();
      node.weights = make_attention_wrap_weights(layout.bottleneck, layout.attention, params_, prefix, rng);
      if (layout.depth > 0) {
        const Index c = spec_.channels(layout.level);
        node.up_weight = params_.add_parameter(
            prefix + ".upsample.weight", xavier_uniform<Scalar>(Shape{c, spec_.channels(layout.level + 1), 1, 1}, rng));
        node.up_bias = params_.add_parameter(prefix + ".upsample.bias", Tensor<Scalar>::Zero(Shape{1, c, 1, 1}));
        if (spec_.depth_attention) {
          node.depth_spec = DepthAttentionSpec{layout.branch_count, c};
          node.depth_weights = make_depth_attention_weights(node.depth_spec, params_, prefix + ".depth_attention");
        }
      }
      nodes_.push_back(std::move(node));
    }
    for (Index h = 0; h < spec_.head_count(); ++h) {
      const std::string prefix = "head_" + std::to_string(h);
      heads_.push_back(
          {params_.add_parameter(prefix + ".weight",
                                 xavier_uniform<Scalar>(Shape{spec_.num_classes, spec_.base_channels, 1, 1}, rng)),
           params_.add_parameter(prefix + ".bias", Tensor<Scalar>::Zero(Shape{1, spec_.num_classes, 1, 1}))});
    }
  }

  const NetworkSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  Index node_count() const { return static_cast<Index>(nodes_.size()); }
  std::vector<NodeLayout> layouts() const {
    std::vector<NodeLayout> out;
    for (const auto& n : nodes_) out.push_back(n.layout);
    return out;
  }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  void check_input(const Shape& s) const {
    if (s.c != spec_.in_channels) {
      throw ConfigurationError("network expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                               std::to_string(s.c));
    }
    const Index m = spec_.input_multiple();
    if (s.h % m != 0 || s.w % m != 0) {
      const Index ph = (m - s.h % m) % m;
      const Index pw = (m - s.w % m) % m;
      throw UsageError("input " + std::to_string(s.h) + "x" + std::to_string(s.w) + " is not divisible by " +
                       std::to_string(m) + "; pad by " + std::to_string(ph) + " rows and " + std::to_string(pw) +
                       " columns");
    }
  }

  NetworkOutput<Scalar> forward(const Var<Scalar>& x, bool training) const {
    check_input(x.shape());
    const Index L = spec_.depth;
    std::vector<std::vector<Var<Scalar>>> grid(L, std::vector<Var<Scalar>>(L));
    for (const auto& node : nodes_) {
      const Index i = node.layout.level;
      const Index j = node.layout.depth;
      Var<Scalar> input;
      if (j == 0) {
        input = i == 0 ? x : max_pool2x2(grid[i - 1][0]);
      } else {
        std::vector<Var<Scalar>> branches(grid[i].begin(), grid[i].begin() + j);
        branches.push_back(conv2d(upsample_nearest2x(grid[i + 1][j - 1]), node.up_weight, node.up_bias));
        if (spec_.depth_attention) {
          auto attended = depth_attention(branches, node.depth_spec, node.depth_weights);
          branches = std::move(attended.weighted);
        }
        if (spec_.merge_mode == MergeMode::Concat) {
          input = concat_channels(branches);
        } else {
          input = branches.front();
          for (std::size_t k = 1; k < branches.size(); ++k) input = add(input, branches[k]);
        }
      }
      grid[i][j] = attention_wrap(input, node.layout.bottleneck, node.layout.attention, node.weights, training);
    }

    NetworkOutput<Scalar> out;
    const Index first = L == 1 ? 0 : (spec_.deep_supervision ? 1 : L - 1);
    for (Index h = 0; h < spec_.head_count(); ++h) {
      out.heads.push_back(conv2d(grid[0][first + h], heads_[h].first, heads_[h].second));
    }
    out.fused = fuse_outputs(out.heads);
    return out;
  }

 private:
  struct GridNode {
    NodeLayout layout;
    AttentionWrapWeights<Scalar> weights;
    Var<Scalar> up_weight;
    Var<Scalar> up_bias;
    DepthAttentionSpec depth_spec;
    DepthAttentionWeights<Scalar> depth_weights;
  };

  NetworkSpec spec_;
  std::uint64_t seed_;
  ParameterSet<Scalar> params_;
  std::vector<GridNode> nodes_;
  std::vector<std::pair<Var<Scalar>, Var<Scalar>>> heads_;
};

struct ParameterReport {
  Index total = 0;
  std::vector<std::pair<std::string, Index>> per_module;  // node_i_j and head_k groups
  Index dense_twin_total = 0;  // same topology with ratio 1 (dense) convolutions
  double ratio = 0.0;          // dense_twin_total / total
};

/// Counts the built network's weights by enumeration and the dense twin
/// analytically from its spec.
template <typename Scalar>
ParameterReport parameter_report(const Network<Scalar>& net) {
  ParameterReport report;
  report.total = net.parameters().parameter_count();
  for (const auto& layout : net.layouts()) {
    report.per_module.emplace_back(layout.name(), net.parameters().parameter_count(layout.name() + "."));
  }
  for (Index h = 0; h < net.spec().head_count(); ++h) {
    const std::string name = "head_" + std::to_string(h);
    report.per_module.emplace_back(name, net.parameters().parameter_count(name + "."));
  }
  NetworkSpec twin = net.spec();
  twin.ghost_ratio = 1;
  report.dense_twin_total = count_parameters(twin);
  report.ratio = static_cast<double>(report.dense_twin_total) / static_cast<double>(report.total);
  return report;
}

}  // namespace agunet
