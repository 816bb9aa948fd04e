#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "agunet/data.hpp"
#include "agunet/loss.hpp"
#include "agunet/metrics.hpp"
#include "agunet/network.hpp"

namespace agunet {

struct TrainConfig {
  double learning_rate = 1e-4;
  Index batch_size = 16;
  Index max_epochs = 300;
  Index patience = 100;
  std::uint64_t seed = 0;
  LossWeights loss;
  bool augment = true;
  AugmentPolicy augment_policy;
  double min_improvement = 1e-5;  // val Dice gain that counts as progress

  void validate() const;
};

/// 0.5 * lr0 * (1 + cos(pi * epoch / max_epochs)); epoch is zero-based, so
/// the k-th training epoch (1-based) runs at cosine_lr(k - 1).
double cosine_lr(Index epoch, const TrainConfig& config);

/// Tracks the best validation score. An epoch improves when its score beats
/// the best by at least min_improvement; training stops once `patience`
/// consecutive epochs fail to improve.
class EarlyStopping {
 public:
  EarlyStopping(Index patience, double min_improvement);

  /// Records the score of the next epoch; returns true when training should stop.
  bool update(double score);

  Index epochs_seen() const { return epochs_; }
  Index best_epoch() const { return best_epoch_; }  // 1-based, 0 before any update
  double best_score() const { return best_; }
  bool improved_last() const { return improved_last_; }

 private:
  Index patience_;
  double min_improvement_;
  Index epochs_ = 0;
  Index best_epoch_ = 0;
  Index stale_ = 0;
  double best_ = 0.0;
  bool improved_last_ = false;
};

struct EpochRecord {
  Index epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dice = 0.0;  // mean foreground Dice
  double learning_rate = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  Index best_epoch = 0;
  double best_val_dice = 0.0;
  std::string stop_reason;

  /// One JSON object per line: epoch, train_loss, val_loss, val_dice, lr.
  std::string to_jsonl() const;
  void write(const std::filesystem::path& path) const;
};

TrainHistory read_history(const std::filesystem::path& path);

/// (B, 1, H, W) batch of the selected samples' images.
Tensor<float> make_image_batch(const std::vector<SegmentationSample>& samples, const std::vector<std::size_t>& indices);
LabelBatch make_label_batch(const std::vector<SegmentationSample>& samples, const std::vector<std::size_t>& indices);

/// Per-pixel argmax of the fused output in inference mode.
std::vector<LabelMask> predict(const Network<float>& net, const std::vector<Image>& images, Index batch_size = 16);

struct EvaluationResult {
  double loss = 0.0;  // sample-weighted mean of the per-batch loss
  MetricsRecord metrics;
  std::vector<LabelMask> predictions;
};

EvaluationResult evaluate_network(const Network<float>& net, const std::vector<SegmentationSample>& samples,
                                  const LossWeights& weights, Index batch_size = 16);

struct TrainOptions {
  std::filesystem::path output_dir;  // checkpoint and history are written here when set
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Mini-batch Adam on the deep-supervision loss with a cosine schedule and
/// early stopping on validation Dice. The best-scoring parameters are
/// restored into `net` before returning.
TrainHistory train(Network<float>& net, const std::vector<SegmentationSample>& train_set,
                   const std::vector<SegmentationSample>& val_set, const TrainConfig& config,
                   const TrainOptions& options = {});

}  // namespace agunet
