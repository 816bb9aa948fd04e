#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "agunet/data.hpp"
#include "agunet/image_io.hpp"

namespace agunet {

using Rgb = std::array<std::uint8_t, 3>;

/// Fixed class palette: 0 black, 1 orange, 2 sky blue, 3 bluish green,
/// further ids cycle through a secondary set.
Rgb class_color(int class_id);

inline constexpr Rgb kFalsePositive{255, 0, 0};    // predicted foreground on background
inline constexpr Rgb kFalseNegative{0, 0, 255};    // missed foreground
inline constexpr Rgb kClassConfusion{255, 255, 0};  // foreground assigned to the wrong class

/// H x 5W strip: image, ground truth, prediction, difference, overlay of the
/// prediction on the image with the given opacity.
RgbImage render_panels(const Image& image, const LabelMask& ground_truth, const LabelMask& prediction,
                       double overlay_alpha = 0.4);

/// Human-readable colour legend for the panels.
std::string panel_legend(const std::vector<std::string>& class_names);

}  // namespace agunet
