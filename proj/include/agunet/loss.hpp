#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "agunet/ops.hpp"

namespace agunet {

/// Integer class targets for a (N, H, W) batch.
struct LabelBatch {
  Index n = 0;
  Index h = 0;
  Index w = 0;
  std::vector<std::int32_t> labels;  // NHW order

  std::int32_t operator()(Index b, Index y, Index x) const { return labels[(b * h + y) * w + x]; }
};

struct LossWeights {
  double dice = 1.0;
  double cross_entropy = 1.0;
  double smooth = 1.0;  // soft-Dice smoothing in numerator and denominator
};

/// dice * (1 - mean foreground soft-Dice) + cross_entropy * mean pixel CE.
/// Soft-Dice sums run over the whole batch; softmax is taken across classes.
template <typename Scalar>
Var<Scalar> combined_loss(const Var<Scalar>& logits, const LabelBatch& target, const LossWeights& weights = {}) {
  const Shape s = logits.shape();
  if (s.n != target.n || s.h != target.h || s.w != target.w) {
    throw UsageError("combined_loss: logits " + s.str() + " vs target " + std::to_string(target.n) + "x" +
                     std::to_string(target.h) + "x" + std::to_string(target.w));
  }
  const Index K = s.c;
  if (K < 2) throw UsageError("combined_loss: need at least 2 classes");
  for (const auto t : target.labels) {
    if (t < 0 || t >= K) throw UsageError("combined_loss: label " + std::to_string(t) + " outside 0.." + std::to_string(K - 1));
  }
  const Index P = s.plane();
  const Index pixels = s.n * P;
  const Scalar smooth = static_cast<Scalar>(weights.smooth);

  auto prob = std::make_shared<Tensor<Scalar>>(s);
  double ce = 0.0;
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  Array inter = Array::Zero(K), psum = Array::Zero(K), gsum = Array::Zero(K);
  for (Index n = 0; n < s.n; ++n) {
    auto z = logits.value().sample(n);
    auto p = prob->sample(n);
    const auto zmax = z.colwise().maxCoeff().eval();
    p = (z.rowwise() - zmax).array().exp().matrix();
    const auto denom = p.colwise().sum().eval();
    p.array().rowwise() /= denom.array();
    for (Index q = 0; q < P; ++q) {
      const std::int32_t t = target.labels[n * P + q];
      ce -= static_cast<double>(z(t, q) - zmax(q) - std::log(denom(q)));
      inter(t) += p(t, q);
      gsum(t) += Scalar(1);
    }
    psum += p.rowwise().sum().array();
  }
  ce /= static_cast<double>(pixels);
  const Array dice = (Scalar(2) * inter + smooth) / (psum + gsum + smooth);
  const Scalar dice_mean = dice.tail(K - 1).mean();
  const Scalar loss = static_cast<Scalar>(weights.dice) * (Scalar(1) - dice_mean) +
                      static_cast<Scalar>(weights.cross_entropy * ce);

  Tensor<Scalar> out(Shape{1, 1, 1, 1}, loss);
  return make_result<Scalar>(std::move(out), {logits}, [logits, target, weights, prob, inter, psum, gsum, smooth, K, P, pixels](Node<Scalar>& self) {
    const Shape s = logits.shape();
    const Scalar upstream = self.grad.flat()[0];
    const Scalar ce_scale = static_cast<Scalar>(weights.cross_entropy) / Scalar(pixels);
    // d(dice term)/dp_c = -w/(K-1) * [2 g / D - (2I + s) / D^2], D = P + G + s.
    const Array denom = psum + gsum + smooth;
    const Array coef_g = Scalar(-2) / denom;
    const Array coef_const = (Scalar(2) * inter + smooth) / denom.square();
    const Scalar dice_scale = static_cast<Scalar>(weights.dice) / Scalar(K - 1);
    Array dp(K);
    for (Index n = 0; n < s.n; ++n) {
      const auto p = prob->sample(n);
      auto gz = logits.mutable_grad().sample(n);
      for (Index q = 0; q < P; ++q) {
        const std::int32_t t = target.labels[n * P + q];
        for (Index c = 0; c < K; ++c) dp(c) = c == 0 ? Scalar(0) : dice_scale * (coef_const(c) + (c == t ? coef_g(c) : Scalar(0)));
        const Scalar dot = (p.col(q).array() * dp).sum();
        for (Index c = 0; c < K; ++c) {
          const Scalar pc = p(c, q);
          const Scalar g_ce = ce_scale * (pc - (c == t ? Scalar(1) : Scalar(0)));
          gz(c, q) += upstream * (g_ce + pc * (dp(c) - dot));
        }
      }
    }
  });
}

/// Mean of the per-head losses.
template <typename Scalar>
Var<Scalar> deep_supervision_loss(const std::vector<Var<Scalar>>& heads, const LabelBatch& target,
                                  const LossWeights& weights = {}) {
  if (heads.empty()) throw UsageError("deep_supervision_loss: no heads");
  Var<Scalar> total = combined_loss(heads.front(), target, weights);
  for (std::size_t k = 1; k < heads.size(); ++k) total = add(total, combined_loss(heads[k], target, weights));
  return heads.size() == 1 ? total : scale(total, Scalar(1) / static_cast<Scalar>(heads.size()));
}

}  // namespace agunet
