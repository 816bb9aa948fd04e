#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace agunet {

/// Integer class id per pixel; 0 is background.
using LabelMask = Eigen::Array<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 2|P n G| / (|P| + |G|) for one class; 1 when both regions are empty.
double dice(const LabelMask& pred, const LabelMask& gt, int class_id);

/// |P n G| / |P u G| for one class; 1 when both regions are empty.
double jaccard(const LabelMask& pred, const LabelMask& gt, int class_id);

struct MetricsRecord {
  int num_classes = 0;
  std::size_t samples = 0;
  // Indexed by class id (background included); values are macro averages
  // of the per-sample scores.
  std::vector<double> dice;
  std::vector<double> jaccard;
  std::vector<long long> pred_pixels;
  std::vector<long long> gt_pixels;
  std::vector<long long> intersection_pixels;
  double mean_dice = 0.0;  // over foreground classes
  double mean_jaccard = 0.0;
};

MetricsRecord evaluate(const std::vector<LabelMask>& predictions, const std::vector<LabelMask>& ground_truth,
                       int num_classes);

/// Delimiter-separated table in the layout Method, Metric, <one column per
/// foreground class>, with a Dice coefficient row and a Jaccard index row.
std::string format_metrics_table(const MetricsRecord& record, const std::string& method,
                                 const std::vector<std::string>& class_names, char delimiter = ',');

/// Display names for class ids: the phantom convention, then "class_<k>".
std::vector<std::string> default_class_names(int num_classes);

}  // namespace agunet
