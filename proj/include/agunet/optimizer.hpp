#pragma once

#include <cmath>
#include <vector>

#include "agunet/parameters.hpp"

namespace agunet {

/// Adaptive-moment optimiser with bias correction.
template <typename Scalar>
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  explicit Adam(const ParameterSet<Scalar>& params, Options options = {}) : options_(options) {
    for (const auto& e : params.entries()) {
      if (!e.trainable) continue;
      slots_.push_back({e.var, Tensor<Scalar>::Zero(e.var.shape()), Tensor<Scalar>::Zero(e.var.shape())});
    }
  }

  void step(double learning_rate) {
    ++steps_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    const Scalar b1 = static_cast<Scalar>(options_.beta1);
    const Scalar b2 = static_cast<Scalar>(options_.beta2);
    const Scalar step_size = static_cast<Scalar>(learning_rate / c1);
    const Scalar inv_sqrt_c2 = static_cast<Scalar>(1.0 / std::sqrt(c2));
    const Scalar eps = static_cast<Scalar>(options_.epsilon);
    for (auto& slot : slots_) {
      const auto g = slot.param.grad().flat().array();
      auto m = slot.m.flat().array();
      auto v = slot.v.flat().array();
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
      slot.param.mutable_value().flat().array() -= step_size * m / (v.sqrt() * inv_sqrt_c2 + eps);
    }
  }

  long steps() const { return steps_; }

 private:
  struct Slot {
    Var<Scalar> param;
    Tensor<Scalar> m;
    Tensor<Scalar> v;
  };

  Options options_;
  std::vector<Slot> slots_;
  long steps_ = 0;
};

}  // namespace agunet
