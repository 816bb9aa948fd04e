#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "agunet/autograd.hpp"
#include "agunet/random.hpp"

namespace agunet {

/// Xavier/Glorot uniform samples on +-sqrt(6 / (fan_in + fan_out)).
/// For a (out, in/groups, kh, kw) weight fan_in = in/groups*kh*kw and
/// fan_out = out*kh*kw.
template <typename Scalar>
Tensor<Scalar> xavier_uniform(const Shape& shape, Rng& rng) {
  const double receptive = static_cast<double>(shape.h * shape.w);
  const double fan_in = static_cast<double>(shape.c) * receptive;
  const double fan_out = static_cast<double>(shape.n) * receptive;
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<Scalar> out(shape);
  for (Index i = 0; i < out.size(); ++i) out.flat()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  return out;
}

template <typename Scalar>
Tensor<Scalar> xavier_init(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  return xavier_uniform<Scalar>(shape, rng);
}

/// Named, ordered collection of trainable parameters and state buffers.
/// Paths are hierarchical ("node_1_0.bottleneck.expand.primary.weight").
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string path;
    Var<Scalar> var;
    bool trainable;
  };

  Var<Scalar> add_parameter(const std::string& path, Tensor<Scalar> init) { return add(path, std::move(init), true); }
  Var<Scalar> add_buffer(const std::string& path, Tensor<Scalar> init) { return add(path, std::move(init), false); }

  const std::vector<Entry>& entries() const { return entries_; }

  std::optional<Var<Scalar>> find(const std::string& path) const {
    for (const auto& e : entries_) {
      if (e.path == path) return e.var;
    }
    return std::nullopt;
  }

  /// Number of trainable scalars.
  Index parameter_count() const {
    Index total = 0;
    for (const auto& e : entries_) total += e.trainable ? e.var.value().size() : 0;
    return total;
  }

  Index parameter_count(const std::string& prefix) const {
    Index total = 0;
    for (const auto& e : entries_) {
      if (e.trainable && e.path.rfind(prefix, 0) == 0) total += e.var.value().size();
    }
    return total;
  }

  void zero_grad() const {
    for (const auto& e : entries_) e.var.zero_grad();
  }

  /// Copies values from another set with identical paths and shapes.
  template <typename Other>
  void assign_from(const ParameterSet<Other>& other) {
    if (other.entries().size() != entries_.size()) throw ConfigurationError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& src = other.entries()[i];
      auto& dst = entries_[i];
      if (src.path != dst.path || !(src.var.shape() == dst.var.shape())) {
        throw ConfigurationError("parameter mismatch at " + dst.path + " vs " + src.path);
      }
      dst.var.mutable_value() = src.var.value().template cast<Scalar>();
    }
  }

 private:
  Var<Scalar> add(const std::string& path, Tensor<Scalar> init, bool trainable) {
    if (find(path)) throw ConfigurationError("duplicate parameter path " + path);
    Var<Scalar> var(std::move(init), trainable);
    entries_.push_back({path, var, trainable});
    return var;
  }

  std::vector<Entry> entries_;
};

/// Learnable per-channel scale/shift plus running statistics.
template <typename Scalar>
struct NormWeights {
  Var<Scalar> gamma;
  Var<Scalar> beta;
  Var<Scalar> running_mean;
  Var<Scalar> running_var;
};

template <typename Scalar>
NormWeights<Scalar> make_norm_weights(Index channels, ParameterSet<Scalar>& params, const std::string& prefix) {
  const Shape s{1, channels, 1, 1};
  return {params.add_parameter(prefix + ".gamma", Tensor<Scalar>::Constant(s, Scalar(1))),
          params.add_parameter(prefix + ".beta", Tensor<Scalar>::Zero(s)),
          params.add_buffer(prefix + ".running_mean", Tensor<Scalar>::Zero(s)),
          params.add_buffer(prefix + ".running_var", Tensor<Scalar>::Constant(s, Scalar(1)))};
}

}  // namespace agunet
