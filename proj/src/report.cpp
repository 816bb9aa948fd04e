#include "agunet/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "agunet/errors.hpp"

namespace agunet {

Rgb class_color(int class_id) {
  static constexpr Rgb primary[] = {{0, 0, 0}, {230, 159, 0}, {86, 180, 233}, {0, 158, 115}};
  static constexpr Rgb extra[] = {{240, 228, 66}, {0, 114, 178}, {213, 94, 0}, {204, 121, 167}};
  if (class_id < 0) throw UsageError("class_color: negative class id");
  if (class_id < 4) return primary[class_id];
  return extra[(class_id - 4) % 4];
}

RgbImage render_panels(const Image& image, const LabelMask& ground_truth, const LabelMask& prediction,
                       double overlay_alpha) {
  const Eigen::Index h = image.rows(), w = image.cols();
  if (ground_truth.rows() != h || ground_truth.cols() != w || prediction.rows() != h || prediction.cols() != w) {
    throw UsageError("render_panels: image, ground truth and prediction must share one shape");
  }
  if (overlay_alpha < 0.0 || overlay_alpha > 1.0) throw UsageError("render_panels: alpha outside [0, 1]");
  RgbImage out(h, 5 * w);
  auto put = [&](Eigen::Index y, Eigen::Index x, int panel, const Rgb& c) {
    std::copy(c.begin(), c.end(), out.at(y, panel * w + x));
  };
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const double v = std::clamp(static_cast<double>(image(y, x)), 0.0, 1.0);
      const auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
      const Rgb gray{g, g, g};
      const int t = ground_truth(y, x), p = prediction(y, x);
      put(y, x, 0, gray);
      put(y, x, 1, class_color(t));
      put(y, x, 2, class_color(p));
      Rgb diff{0, 0, 0};
      if (t != p) diff = t == 0 ? kFalsePositive : (p == 0 ? kFalseNegative : kClassConfusion);
      put(y, x, 3, diff);
      Rgb blend = gray;
      if (p != 0) {
        const Rgb c = class_color(p);
        for (int k = 0; k < 3; ++k) {
          blend[k] = static_cast<std::uint8_t>(std::lround((1.0 - overlay_alpha) * g + overlay_alpha * c[k]));
        }
      }
      put(y, x, 4, blend);
    }
  }
  return out;
}

std::string panel_legend(const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "columns: image | ground truth | prediction | difference | overlay\n";
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    const Rgb rgb = class_color(static_cast<int>(c));
    os << "class " << c << " (" << class_names[c] << "): rgb(" << int(rgb[0]) << "," << int(rgb[1]) << ","
       << int(rgb[2]) << ")\n";
  }
  os << "difference: false positive rgb(255,0,0), false negative rgb(0,0,255), wrong class rgb(255,255,0)\n";
  return os.str();
}

}  // namespace agunet
