#pragma once

#include <string>

#include "agunet/ops.hpp"
#include "agunet/parameters.hpp"

namespace agunet {

/// Ghost module: a dense primary convolution produces out/ratio intrinsic
/// maps, a per-channel cheap convolution derives the remaining ghost maps
/// from them, and the two are concatenated. Each branch carries its own
/// scale/shift; ratio == 1 degenerates to a plain convolution.
struct GhostModuleSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index ratio = 2;
  Index primary_kernel = 1;
  Index cheap_kernel = 3;
  Index stride = 1;
  bool relu = true;

  Index intrinsic_channels() const { return out_channels / ratio; }
  Index ghost_channels() const { return out_channels - intrinsic_channels(); }

  void validate() const {
    if (in_channels < 1 || out_channels < 1) throw ConfigurationError("ghost module: channel counts must be positive");
    if (ratio < 1) throw ConfigurationError("ghost module: ratio must be >= 1");
    if (out_channels % ratio != 0) {
      throw ConfigurationError("ghost module: out_channels " + std::to_string(out_channels) +
                               " not divisible by ratio " + std::to_string(ratio));
    }
    if (primary_kernel < 1 || primary_kernel % 2 == 0 || cheap_kernel < 1 || cheap_kernel % 2 == 0) {
      throw ConfigurationError("ghost module: kernel sizes must be odd");
    }
    if (stride != 1 && stride != 2) throw ConfigurationError("ghost module: stride must be 1 or 2");
  }
};

/// Convolution weights of the module (no standalone bias; beta plays that role).
inline Index ghost_conv_parameters(const GhostModuleSpec& spec) {
  spec.validate();
  return spec.in_channels * spec.intrinsic_channels() * spec.primary_kernel * spec.primary_kernel +
         spec.ghost_channels() * spec.cheap_kernel * spec.cheap_kernel;
}

/// Weights of a dense convolution with the same in/out channels and primary kernel.
inline Index dense_conv_parameters(const GhostModuleSpec& spec) {
  return spec.in_channels * spec.out_channels * spec.primary_kernel * spec.primary_kernel;
}

inline double compression_ratio(const GhostModuleSpec& spec) {
  return static_cast<double>(dense_conv_parameters(spec)) / static_cast<double>(ghost_conv_parameters(spec));
}

/// Scale/shift parameters of both branches.
inline Index ghost_norm_parameters(const GhostModuleSpec& spec) {
  return 2 * spec.intrinsic_channels() + (spec.ghost_channels() > 0 ? 2 * spec.ghost_channels() : 0);
}

template <typename Scalar>
struct GhostModuleWeights {
  Var<Scalar> primary;  // (intrinsic, in, k, k)
  NormWeights<Scalar> primary_norm;
  Var<Scalar> cheap;  // (ghost, 1, k, k), undefined when ratio == 1
  NormWeights<Scalar> cheap_norm;
};

template <typename Scalar>
Var<Scalar> apply_norm(const Var<Scalar>& x, const NormWeights<Scalar>& w, bool training) {
  return batch_norm(x, w.gamma, w.beta, w.running_mean, w.running_var, training);
}

template <typename Scalar>
GhostModuleWeights<Scalar> make_ghost_module_weights(const GhostModuleSpec& spec, ParameterSet<Scalar>& params,
                                                     const std::string& prefix, Rng& rng) {
  spec.validate();
  GhostModuleWeights<Scalar> w;
  const Index k = spec.primary_kernel;
  w.primary = params.add_parameter(prefix + ".primary.weight",
                                   xavier_uniform<Scalar>(Shape{spec.intrinsic_channels(), spec.in_channels, k, k}, rng));
  w.primary_norm = make_norm_weights(spec.intrinsic_channels(), params, prefix + ".primary.norm");
  if (spec.ghost_channels() > 0) {
    const Index c = spec.cheap_kernel;
    w.cheap = params.add_parameter(prefix + ".cheap.weight",
                                   xavier_uniform<Scalar>(Shape{spec.ghost_channels(), 1, c, c}, rng));
    w.cheap_norm = make_norm_weights(spec.ghost_channels(), params, prefix + ".cheap.norm");
  }
  return w;
}

template <typename Scalar>
Var<Scalar> ghost_module_forward(const Var<Scalar>& x, const GhostModuleSpec& spec,
                                 const GhostModuleWeights<Scalar>& w, bool training) {
  spec.validate();
  if (x.shape().c != spec.in_channels) {
    throw ConfigurationError("ghost module expects " + std::to_string(spec.in_channels) + " channels, got " +
                             std::to_string(x.shape().c));
  }
  auto activate = [&](Var<Scalar> v) { return spec.relu ? relu(v) : v; };
  const Var<Scalar> intrinsic = activate(apply_norm(
      conv2d(x, w.primary, Var<Scalar>{}, {spec.stride, spec.primary_kernel / 2, 1}), w.primary_norm, training));
  if (spec.ghost_channels() == 0) return intrinsic;
  const Var<Scalar> ghost = activate(apply_norm(
      conv2d(intrinsic, w.cheap, Var<Scalar>{}, {1, spec.cheap_kernel / 2, spec.intrinsic_channels()}), w.cheap_norm,
      training));
  return concat_channels<Scalar>({intrinsic, ghost});
}

/// Residual block: expand ghost module (ReLU), optional stride-2 depthwise
/// step, project ghost module (linear), plus a shortcut that is the identity
/// when shapes allow and a depthwise/pointwise projection otherwise.
struct GhostBottleneckSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index expansion_channels = 0;
  Index stride = 1;
  Index ratio = 2;
  Index primary_kernel = 1;
  Index cheap_kernel = 3;
  Index depthwise_kernel = 3;

  GhostModuleSpec expand() const {
    return {in_channels, expansion_channels, ratio, primary_kernel, cheap_kernel, 1, true};
  }
  GhostModuleSpec project() const {
    return {expansion_channels, out_channels, ratio, primary_kernel, cheap_kernel, 1, false};
  }
  bool identity_shortcut() const { return stride == 1 && in_channels == out_channels; }

  void validate() const {
    if (stride != 1 && stride != 2) throw ConfigurationError("ghost bottleneck: stride must be 1 or 2");
    if (depthwise_kernel < 1 || depthwise_kernel % 2 == 0) {
      throw ConfigurationError("ghost bottleneck: depthwise kernel must be odd");
    }
    expand().validate();
    project().validate();
  }
};

/// Trainable scalars: convolution weights plus scale/shift pairs.
inline Index count_parameters(const GhostModuleSpec& spec) {
  return ghost_conv_parameters(spec) + ghost_norm_parameters(spec);
}

inline Index count_parameters(const GhostBottleneckSpec& spec) {
  Index total = count_parameters(spec.expand()) + count_parameters(spec.project());
  const Index k2 = spec.depthwise_kernel * spec.depthwise_kernel;
  if (spec.stride == 2) total += spec.expansion_channels * (k2 + 2);
  if (!spec.identity_shortcut()) {
    if (spec.stride == 2) total += spec.in_channels * (k2 + 2);
    total += spec.out_channels * (spec.in_channels + 2);
  }
  return total;
}

template <typename Scalar>
struct GhostBottleneckWeights {
  GhostModuleWeights<Scalar> expand;
  Var<Scalar> downsample;  // (hidden, 1, k, k) when stride == 2
  NormWeights<Scalar> downsample_norm;
  GhostModuleWeights<Scalar> project;
  Var<Scalar> shortcut_depthwise;  // (in, 1, k, k) when stride == 2
  NormWeights<Scalar> shortcut_depthwise_norm;
  Var<Scalar> shortcut_pointwise;  // (out, in, 1, 1) unless identity
  NormWeights<Scalar> shortcut_pointwise_norm;
};

template <typename Scalar>
GhostBottleneckWeights<Scalar> make_ghost_bottleneck_weights(const GhostBottleneckSpec& spec,
                                                             ParameterSet<Scalar>& params, const std::string& prefix,
                                                             Rng& rng) {
  spec.validate();
  GhostBottleneckWeights<Scalar> w;
  const Index k = spec.depthwise_kernel;
  w.expand = make_ghost_module_weights(spec.expand(), params, prefix + ".expand", rng);
  if (spec.stride == 2) {
    w.downsample = params.add_parameter(prefix + ".downsample.weight",
                                        xavier_uniform<Scalar>(Shape{spec.expansion_channels, 1, k, k}, rng));
    w.downsample_norm = make_norm_weights(spec.expansion_channels, params, prefix + ".downsample.norm");
  }
  w.project = make_ghost_module_weights(spec.project(), params, prefix + ".project", rng);
  if (!spec.identity_shortcut()) {
    if (spec.stride == 2) {
      w.shortcut_depthwise = params.add_parameter(prefix + ".shortcut.depthwise.weight",
                                                  xavier_uniform<Scalar>(Shape{spec.in_channels, 1, k, k}, rng));
      w.shortcut_depthwise_norm = make_norm_weights(spec.in_channels, params, prefix + ".shortcut.depthwise.norm");
    }
    w.shortcut_pointwise = params.add_parameter(
        prefix + ".shortcut.pointwise.weight",
        xavier_uniform<Scalar>(Shape{spec.out_channels, spec.in_channels, 1, 1}, rng));
    w.shortcut_pointwise_norm = make_norm_weights(spec.out_channels, params, prefix + ".shortcut.pointwise.norm");
  }
  return w;
}

template <typename Scalar>
Var<Scalar> ghost_bottleneck_forward(const Var<Scalar>& x, const GhostBottleneckSpec& spec,
                                     const GhostBottleneckWeights<Scalar>& w, bool training) {
  spec.validate();
  if (x.shape().c != spec.in_channels) {
    throw ConfigurationError("ghost bottleneck expects " + std::to_string(spec.in_channels) + " channels, got " +
                             std::to_string(x.shape().c));
  }
  const Index pad = spec.depthwise_kernel / 2;
  Var<Scalar> main = ghost_module_forward(x, spec.expand(), w.expand, training);
  if (spec.stride == 2) {
    main = apply_norm(conv2d(main, w.downsample, Var<Scalar>{}, {2, pad, spec.expansion_channels}), w.downsample_norm,
                      training);
  }
  main = ghost_module_forward(main, spec.project(), w.project, training);

  Var<Scalar> shortcut = x;
  if (!spec.identity_shortcut()) {
    if (spec.stride == 2) {
      shortcut = apply_norm(conv2d(shortcut, w.shortcut_depthwise, Var<Scalar>{}, {2, pad, spec.in_channels}),
                            w.shortcut_depthwise_norm, training);
    }
    shortcut = apply_norm(conv2d(shortcut, w.shortcut_pointwise, Var<Scalar>{}), w.shortcut_pointwise_norm, training);
  }
  if (!(main.shape() == shortcut.shape())) {
    throw ConfigurationError("ghost bottleneck residual mismatch: " + main.shape().str() + " vs " +
                             shortcut.shape().str());
  }
  return add(main, shortcut);
}

}  // namespace agunet
