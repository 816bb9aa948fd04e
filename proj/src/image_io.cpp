#include "agunet/image_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>

#include "agunet/errors.hpp"

namespace agunet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path.string());
  return f;
}

struct DecodedPng {
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::vector<png_byte>> rows;

  unsigned sample(png_uint_32 y, png_uint_32 x, int ch) const {
    const auto& row = rows[y];
    if (bit_depth == 16) {
      const std::size_t i = (static_cast<std::size_t>(x) * channels + ch) * 2;
      return (static_cast<unsigned>(row[i]) << 8) | row[i + 1];
    }
    return row[static_cast<std::size_t>(x) * channels + ch];
  }
};

DecodedPng decode(const std::filesystem::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte header[8];
  if (std::fread(header, 1, 8, file.get()) != 8 || png_sig_cmp(header, 0, 8) != 0) {
    throw DataError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng initialisation failed");
  }
  DecodedPng out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("corrupt PNG file: " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.rows.assign(out.height, std::vector<png_byte>(stride));
  std::vector<png_bytep> pointers(out.height);
  for (png_uint_32 y = 0; y < out.height; ++y) pointers[y] = out.rows[y].data();
  png_read_image(png, pointers.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode(const std::filesystem::path& path, png_uint_32 width, png_uint_32 height, int bit_depth, int color_type,
            const std::vector<std::vector<png_byte>>& rows) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed writing " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  const DecodedPng d = decode(path);
  GrayImage img;
  img.bit_depth = d.bit_depth;
  img.pixels.resize(d.height, d.width);
  const int color_channels = d.channels >= 3 ? 3 : 1;
  for (png_uint_32 y = 0; y < d.height; ++y) {
    for (png_uint_32 x = 0; x < d.width; ++x) {
      unsigned acc = 0;
      for (int c = 0; c < color_channels; ++c) acc += d.sample(y, x, c);
      img.pixels(y, x) = static_cast<std::uint16_t>(acc / color_channels);
    }
  }
  return img;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  const DecodedPng d = decode(path);
  RgbImage img(d.height, d.width);
  const int shift = d.bit_depth == 16 ? 8 : 0;
  for (png_uint_32 y = 0; y < d.height; ++y) {
    for (png_uint_32 x = 0; x < d.width; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x)[c] = static_cast<std::uint8_t>(d.sample(y, x, d.channels >= 3 ? c : 0) >> shift);
    }
  }
  return img;
}

void write_png_gray(const std::filesystem::path& path, const Gray16& pixels, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw UsageError("PNG bit depth must be 8 or 16");
  const auto h = static_cast<png_uint_32>(pixels.rows());
  const auto w = static_cast<png_uint_32>(pixels.cols());
  const std::size_t bytes = bit_depth / 8;
  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(w * bytes));
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      const std::uint16_t v = pixels(y, x);
      if (bit_depth == 16) {
        rows[y][2 * x] = static_cast<png_byte>(v >> 8);
        rows[y][2 * x + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        if (v > 255) throw UsageError("8-bit PNG value out of range in " + path.string());
        rows[y][x] = static_cast<png_byte>(v);
      }
    }
  }
  encode(path, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, rows);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<std::vector<png_byte>> rows(image.height);
  for (Eigen::Index y = 0; y < image.height; ++y) {
    rows[y].assign(image.at(y, 0), image.at(y, 0) + image.width * 3);
  }
  encode(path, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
         rows);
}

}  // namespace agunet
