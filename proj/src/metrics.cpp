#include "agunet/metrics.hpp"

#include <iomanip>
#include <sstream>

#include "agunet/errors.hpp"

namespace agunet {

namespace {

struct Counts {
  long long pred = 0;
  long long gt = 0;
  long long both = 0;
};

Counts count(const LabelMask& pred, const LabelMask& gt, int class_id) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols()) {
    throw UsageError("mask shapes differ: " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                     " vs " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
  }
  const auto p = pred == class_id;
  const auto g = gt == class_id;
  return {p.count(), g.count(), (p && g).count()};
}

double dice_from(const Counts& c) {
  const long long denom = c.pred + c.gt;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.both) / static_cast<double>(denom);
}

double jaccard_from(const Counts& c) {
  const long long uni = c.pred + c.gt - c.both;
  return uni == 0 ? 1.0 : static_cast<double>(c.both) / static_cast<double>(uni);
}

}  // namespace

double dice(const LabelMask& pred, const LabelMask& gt, int class_id) { return dice_from(count(pred, gt, class_id)); }

double jaccard(const LabelMask& pred, const LabelMask& gt, int class_id) {
  return jaccard_from(count(pred, gt, class_id));
}

MetricsRecord evaluate(const std::vector<LabelMask>& predictions, const std::vector<LabelMask>& ground_truth,
                       int num_classes) {
  if (predictions.empty()) throw UsageError("evaluate: empty prediction set");
  if (predictions.size() != ground_truth.size()) {
    throw UsageError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                     std::to_string(ground_truth.size()) + " ground-truth masks");
  }
  if (num_classes < 2) throw UsageError("evaluate: need at least 2 classes");
  MetricsRecord r;
  r.num_classes = num_classes;
  r.samples = predictions.size();
  r.dice.assign(num_classes, 0.0);
  r.jaccard.assign(num_classes, 0.0);
  r.pred_pixels.assign(num_classes, 0);
  r.gt_pixels.assign(num_classes, 0);
  r.intersection_pixels.assign(num_classes, 0);
  for (std::size_t s = 0; s < predictions.size(); ++s) {
    for (int c = 0; c < num_classes; ++c) {
      const Counts k = count(predictions[s], ground_truth[s], c);
      r.dice[c] += dice_from(k);
      r.jaccard[c] += jaccard_from(k);
      r.pred_pixels[c] += k.pred;
      r.gt_pixels[c] += k.gt;
      r.intersection_pixels[c] += k.both;
    }
  }
  const double n = static_cast<double>(r.samples);
  for (int c = 0; c < num_classes; ++c) {
    r.dice[c] /= n;
    r.jaccard[c] /= n;
    if (c > 0) {
      r.mean_dice += r.dice[c];
      r.mean_jaccard += r.jaccard[c];
    }
  }
  r.mean_dice /= static_cast<double>(num_classes - 1);
  r.mean_jaccard /= static_cast<double>(num_classes - 1);
  return r;
}

std::string format_metrics_table(const MetricsRecord& record, const std::string& method,
                                 const std::vector<std::string>& class_names, char delimiter) {
  std::ostringstream os;
  os << "Method" << delimiter << "Metric";
  for (int c = 1; c < record.num_classes; ++c) {
    os << delimiter << (c < static_cast<int>(class_names.size()) ? class_names[c] : "class_" + std::to_string(c));
  }
  os << '\n' << std::fixed << std::setprecision(4);
  auto row = [&](const char* metric, const std::vector<double>& values) {
    os << method << delimiter << metric;
    for (int c = 1; c < record.num_classes; ++c) os << delimiter << values[c];
    os << '\n';
  };
  row("Dice coefficient", record.dice);
  row("Jaccard index", record.jaccard);
  return os.str();
}

std::vector<std::string> default_class_names(int num_classes) {
  static const char* phantom[] = {"background", "VAT", "SAT", "liver"};
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) names.push_back(c < 4 ? phantom[c] : "class_" + std::to_string(c));
  return names;
}

}  // namespace agunet
