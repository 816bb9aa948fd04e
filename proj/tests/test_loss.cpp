#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "agunet/loss.hpp"
#include "gradcheck.hpp"

using namespace agunet;
using agunet::testing::random_tensor;

namespace {

LabelBatch random_labels(Index n, Index h, Index w, int classes, Rng& rng) {
  LabelBatch b{n, h, w, {}};
  for (Index i = 0; i < n * h * w; ++i) b.labels.push_back(static_cast<std::int32_t>(rng.below(classes)));
  return b;
}

/// Loop-level reference of the combined loss.
double reference_loss(const Tensor<double>& z, const LabelBatch& t, const LossWeights& w) {
  const Shape s = z.shape();
  std::vector<double> inter(s.c, 0.0), psum(s.c, 0.0), gsum(s.c, 0.0);
  double ce = 0.0;
  for (Index n = 0; n < s.n; ++n)
    for (Index y = 0; y < s.h; ++y)
      for (Index x = 0; x < s.w; ++x) {
        double denom = 0.0;
        for (Index c = 0; c < s.c; ++c) denom += std::exp(z(n, c, y, x));
        const int label = t(n, y, x);
        ce -= std::log(std::exp(z(n, label, y, x)) / denom);
        for (Index c = 0; c < s.c; ++c) {
          const double p = std::exp(z(n, c, y, x)) / denom;
          psum[c] += p;
          if (c == label) {
            inter[c] += p;
            gsum[c] += 1.0;
          }
        }
      }
  double dice = 0.0;
  for (Index c = 1; c < s.c; ++c) dice += (2.0 * inter[c] + w.smooth) / (psum[c] + gsum[c] + w.smooth);
  dice /= static_cast<double>(s.c - 1);
  return w.dice * (1.0 - dice) + w.cross_entropy * ce / static_cast<double>(s.n * s.h * s.w);
}

}  // namespace

TEST_CASE("uniform binary logits give ln 2 cross-entropy") {
  Rng rng(1);
  const LabelBatch t = random_labels(2, 4, 4, 2, rng);
  Var<double> z(Tensor<double>(Shape{2, 2, 4, 4}));
  const double ce = combined_loss(z, t, {0.0, 1.0, 1.0}).value().flat()[0];
  CHECK(std::abs(ce - std::numbers::ln2) < 1e-15);
}

TEST_CASE("combined loss matches a loop-level reference") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(3));
    const LabelBatch t = random_labels(2, 3, 5, k, rng);
    const Tensor<double> z = random_tensor<double>(Shape{2, k, 3, 5}, rng, 2.0);
    const LossWeights w{rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0), rng.uniform(0.5, 1.5)};
    CHECK(std::abs(combined_loss(Var<double>(z), t, w).value().flat()[0] - reference_loss(z, t, w)) < 1e-12);
  }
}

TEST_CASE("loss is non-negative and vanishes for confident correct logits") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const LabelBatch t = random_labels(2, 4, 4, 4, rng);
    Var<double> z(random_tensor<double>(Shape{2, 4, 4, 4}, rng, 5.0));
    CHECK(combined_loss(z, t).value().flat()[0] >= 0.0);
  }
  const LabelBatch t = random_labels(2, 4, 4, 3, rng);
  double previous = 1e300;
  for (double margin : {1.0, 5.0, 20.0, 60.0}) {
    Tensor<double> z(Shape{2, 3, 4, 4});
    for (Index n = 0; n < 2; ++n)
      for (Index y = 0; y < 4; ++y)
        for (Index x = 0; x < 4; ++x) z(n, t(n, y, x), y, x) = margin;
    const double loss = combined_loss(Var<double>(z), t).value().flat()[0];
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-20);
}

TEST_CASE("combined loss gradient matches finite differences") {
  Rng rng(4);
  for (int k : {2, 4}) {
    const LabelBatch t = random_labels(1, 4, 4, k, rng);
    Var<double> z(random_tensor<double>(Shape{1, k, 4, 4}, rng), true);
    auto f = [&] { return combined_loss(z, t, {0.7, 1.3, 1.0}); };
    const auto r = agunet::testing::check_gradients<double>(f, {z}, 1e-5, 1e-8);
    INFO(r.worst);
    CHECK(r.max_relative_error < 1e-5);
  }
}

TEST_CASE("deep supervision averages per-head losses") {
  Rng rng(5);
  const LabelBatch t = random_labels(2, 4, 4, 3, rng);
  std::vector<Var<double>> heads;
  double total = 0.0;
  for (int h = 0; h < 3; ++h) {
    heads.emplace_back(random_tensor<double>(Shape{2, 3, 4, 4}, rng));
    total += combined_loss(heads.back(), t).value().flat()[0];
  }
  CHECK(std::abs(deep_supervision_loss(heads, t).value().flat()[0] - total / 3.0) < 1e-14);
  CHECK(deep_supervision_loss<double>({heads[0]}, t).value().flat()[0] == combined_loss(heads[0], t).value().flat()[0]);
}

TEST_CASE("labels outside the class range are usage errors") {
  Var<double> z(Tensor<double>(Shape{1, 3, 2, 2}));
  CHECK_THROWS_AS(combined_loss(z, LabelBatch{1, 2, 2, {0, 1, 2, 3}}), UsageError);
  CHECK_THROWS_AS(combined_loss(z, LabelBatch{1, 2, 2, {0, -1, 2, 0}}), UsageError);
  CHECK_THROWS_AS(combined_loss(z, LabelBatch{1, 2, 3, {0, 0, 0, 0, 0, 0}}), UsageError);
  Var<double> one_class(Tensor<double>(Shape{1, 1, 2, 2}));
  CHECK_THROWS_AS(combined_loss(one_class, LabelBatch{1, 2, 2, {0, 0, 0, 0}}), UsageError);
}
