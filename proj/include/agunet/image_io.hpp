#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace agunet {

using Gray16 = Eigen::Array<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Grayscale pixels as stored in the file (8- or 16-bit). Colour inputs are
/// reduced to the mean of their RGB channels.
struct GrayImage {
  Gray16 pixels;
  int bit_depth = 8;
};

struct RgbImage {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  std::vector<std::uint8_t> data;  // row-major RGB triples

  RgbImage() = default;
  RgbImage(Eigen::Index h, Eigen::Index w) : height(h), width(w), data(static_cast<std::size_t>(h * w * 3), 0) {}
  std::uint8_t* at(Eigen::Index y, Eigen::Index x) { return data.data() + (y * width + x) * 3; }
  const std::uint8_t* at(Eigen::Index y, Eigen::Index x) const { return data.data() + (y * width + x) * 3; }
};

GrayImage read_png_gray(const std::filesystem::path& path);
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const Gray16& pixels, int bit_depth);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

}  // namespace agunet
