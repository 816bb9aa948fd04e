#include "agunet/training.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "agunet/checkpoint.hpp"
#include "agunet/optimizer.hpp"

namespace agunet {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigurationError("train.learning_rate must be positive");
  if (batch_size < 1) throw ConfigurationError("train.batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigurationError("train.max_epochs must be >= 1");
  if (patience < 1 || patience > max_epochs) throw ConfigurationError("train.patience must lie in 1..max_epochs");
  if (loss.dice < 0.0 || loss.cross_entropy < 0.0 || loss.dice + loss.cross_entropy <= 0.0) {
    throw ConfigurationError("train loss weights must be non-negative and not both zero");
  }
  if (!(loss.smooth > 0.0)) throw ConfigurationError("train.dice_smooth must be positive");
  if (min_improvement < 0.0) throw ConfigurationError("train.min_improvement must be non-negative");
  augment_policy.validate();
}

double cosine_lr(Index epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch > config.max_epochs) {
    throw UsageError("cosine_lr: epoch " + std::to_string(epoch) + " outside 0.." + std::to_string(config.max_epochs));
  }
  if (epoch == config.max_epochs) return 0.0;
  return 0.5 * config.learning_rate *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(config.max_epochs)));
}

EarlyStopping::EarlyStopping(Index patience, double min_improvement)
    : patience_(patience), min_improvement_(min_improvement) {
  if (patience < 1) throw UsageError("early stopping: patience must be >= 1");
}

bool EarlyStopping::update(double score) {
  ++epochs_;
  improved_last_ = best_epoch_ == 0 || score >= best_ + min_improvement_;
  if (improved_last_) {
    best_ = score;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_;
}

std::string TrainHistory::to_jsonl() const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json row;
    row["epoch"] = e.epoch;
    row["train_loss"] = e.train_loss;
    row["val_loss"] = e.val_loss;
    row["val_dice"] = e.val_dice;
    row["lr"] = e.learning_rate;
    out += row.dump() + "\n";
  }
  return out;
}

void TrainHistory::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << to_jsonl();
}

TrainHistory read_history(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  TrainHistory h;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    try {
      const auto row = nlohmann::json::parse(line);
      h.epochs.push_back({row.at("epoch").get<Index>(), row.at("train_loss").get<double>(),
                          row.at("val_loss").get<double>(), row.at("val_dice").get<double>(),
                          row.at("lr").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed history line in " + path.string() + ": " + e.what());
    }
  }
  for (const auto& e : h.epochs) {
    if (h.best_epoch == 0 || e.val_dice > h.best_val_dice) {
      h.best_epoch = e.epoch;
      h.best_val_dice = e.val_dice;
    }
  }
  return h;
}

Tensor<float> make_image_batch(const std::vector<SegmentationSample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_image_batch: empty batch");
  const Index h = samples.at(indices.front()).image.rows();
  const Index w = samples.at(indices.front()).image.cols();
  Tensor<float> batch(Shape{static_cast<Index>(indices.size()), 1, h, w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Image& img = samples.at(indices[b]).image;
    if (img.rows() != h || img.cols() != w) {
      throw UsageError("make_image_batch: sample " + samples[indices[b]].identifier + " has a different size");
    }
    batch.sample(static_cast<Index>(b)) = Eigen::Map<const RowMatrix<float>>(img.data(), 1, h * w);
  }
  return batch;
}

LabelBatch make_label_batch(const std::vector<SegmentationSample>& samples, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw UsageError("make_label_batch: empty batch");
  LabelBatch batch;
  batch.n = static_cast<Index>(indices.size());
  batch.h = samples.at(indices.front()).mask.rows();
  batch.w = samples.at(indices.front()).mask.cols();
  batch.labels.reserve(static_cast<std::size_t>(batch.n * batch.h * batch.w));
  for (const auto i : indices) {
    const LabelMask& m = samples.at(i).mask;
    if (m.rows() != batch.h || m.cols() != batch.w) {
      throw UsageError("make_label_batch: sample " + samples[i].identifier + " has a different size");
    }
    batch.labels.insert(batch.labels.end(), m.data(), m.data() + m.size());
  }
  return batch;
}

namespace {

std::vector<LabelMask> argmax_masks(const Tensor<float>& logits) {
  const Shape s = logits.shape();
  std::vector<LabelMask> out;
  for (Index n = 0; n < s.n; ++n) {
    const auto z = logits.sample(n);
    LabelMask m(s.h, s.w);
    for (Index q = 0; q < s.plane(); ++q) {
      Index best = 0;
      z.col(q).maxCoeff(&best);
      m.data()[q] = static_cast<std::int32_t>(best);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches_of(std::vector<std::size_t> order, Index batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

std::vector<LabelMask> predict(const Network<float>& net, const std::vector<Image>& images, Index batch_size) {
  if (batch_size < 1) throw UsageError("predict: batch_size must be >= 1");
  std::vector<SegmentationSample> wrapped(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    wrapped[i].image = images[i];
  }
  NoGradGuard guard;
  std::vector<LabelMask> out;
  for (const auto& batch : batches_of(iota(images.size()), batch_size)) {
    const auto output = net.forward(Var<float>(make_image_batch(wrapped, batch)), false);
    for (auto& m : argmax_masks(output.fused.value())) out.push_back(std::move(m));
  }
  return out;
}

EvaluationResult evaluate_network(const Network<float>& net, const std::vector<SegmentationSample>& samples,
                                  const LossWeights& weights, Index batch_size) {
  if (samples.empty()) throw UsageError("evaluate_network: empty sample set");
  NoGradGuard guard;
  EvaluationResult result;
  std::vector<LabelMask> truth;
  double loss_sum = 0.0;
  for (const auto& batch : batches_of(iota(samples.size()), batch_size)) {
    const LabelBatch labels = make_label_batch(samples, batch);
    const auto output = net.forward(Var<float>(make_image_batch(samples, batch)), false);
    loss_sum += static_cast<double>(deep_supervision_loss(output.heads, labels, weights).value().flat()[0]) *
                static_cast<double>(batch.size());
    for (auto& m : argmax_masks(output.fused.value())) result.predictions.push_back(std::move(m));
    for (const auto i : batch) truth.push_back(samples[i].mask);
  }
  result.loss = loss_sum / static_cast<double>(samples.size());
  result.metrics = evaluate(result.predictions, truth, static_cast<int>(net.spec().num_classes));
  return result;
}

TrainHistory train(Network<float>& net, const std::vector<SegmentationSample>& train_set,
                   const std::vector<SegmentationSample>& val_set, const TrainConfig& config,
                   const TrainOptions& options) {
  config.validate();
  if (train_set.empty()) throw UsageError("train: training set is empty");
  if (val_set.empty()) throw UsageError("train: validation set is empty");
  for (const auto& s : train_set) {
    const int top = s.mask.size() ? s.mask.maxCoeff() : 0;
    if (top >= net.spec().num_classes) {
      throw UsageError("train: sample " + s.identifier + " has class " + std::to_string(top) + " but the network has " +
                       std::to_string(net.spec().num_classes) + " classes");
    }
  }

  auto& params = net.parameters();
  Adam<float> optimizer(params);
  EarlyStopping stopper(config.patience, config.min_improvement);
  TrainHistory history;
  std::vector<Tensor<float>> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (const auto& e : params.entries()) best_values.push_back(e.var.value());
  };
  snapshot();

  std::vector<SegmentationSample> batch_samples;
  for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = cosine_lr(epoch - 1, config);
    std::vector<std::size_t> order = iota(train_set.size());
    Rng shuffle_rng(hash_seed(config.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    Index batch_index = 0;
    for (const auto& batch : batches_of(order, config.batch_size)) {
      ++batch_index;
      batch_samples.clear();
      for (const auto i : batch) {
        batch_samples.push_back(config.augment ? augment(train_set[i], config.augment_policy,
                                                         hash_seed(config.seed, i, static_cast<std::uint64_t>(epoch)))
                                               : train_set[i]);
      }
      const auto local = iota(batch.size());
      const LabelBatch labels = make_label_batch(batch_samples, local);
      const auto output = net.forward(Var<float>(make_image_batch(batch_samples, local)), true);
      const Var<float> loss = deep_supervision_loss(output.heads, labels, config.loss);
      const double value = static_cast<double>(loss.value().flat()[0]);
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batch_index << ", lr " << lr;
        throw NumericalError(msg.str());
      }
      params.zero_grad();
      loss.backward();
      optimizer.step(lr);
      loss_sum += value * static_cast<double>(batch.size());
    }

    const EvaluationResult val = evaluate_network(net, val_set, config.loss, config.batch_size);
    const EpochRecord record{epoch, loss_sum / static_cast<double>(train_set.size()), val.loss,
                             val.metrics.mean_dice, lr};
    history.epochs.push_back(record);
    const bool stop = stopper.update(record.val_dice);
    if (stopper.improved_last()) snapshot();
    if (options.on_epoch) options.on_epoch(record);
    if (stop) {
      history.stop_reason = "early stopping: no improvement for " + std::to_string(config.patience) + " epochs";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "reached max_epochs";
  history.best_epoch = stopper.best_epoch();
  history.best_val_dice = stopper.best_score();

  for (std::size_t k = 0; k < best_values.size(); ++k) params.entries()[k].var.mutable_value() = best_values[k];

  if (!options.output_dir.empty()) {
    std::filesystem::create_directories(options.output_dir);
    std::ostringstream dice;
    dice.precision(17);
    dice << history.best_val_dice;
    save_checkpoint(options.output_dir / "checkpoint", net,
                    {{"best_epoch", std::to_string(history.best_epoch)},
                     {"best_val_dice", dice.str()},
                     {"stop_reason", history.stop_reason}});
    history.write(options.output_dir / "history.jsonl");
  }
  return history;
}

}  // namespace agunet
