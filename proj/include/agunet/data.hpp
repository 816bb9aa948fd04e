#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agunet/metrics.hpp"
#include "agunet/random.hpp"

namespace agunet {

/// Single-channel slice, row-major.
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SegmentationSample {
  Image image;  // values in [0, 1]
  LabelMask mask;
  std::string identifier;
  std::string subject_id;
};

/// Synthetic abdominal slice: air outside a deformed body ellipse, a
/// subcutaneous fat ring (2) under the skin line, a muscle wall, and a cavity
/// holding visceral fat blobs (1) and, in liver mode, an organ (3).
struct PhantomSpec {
  Eigen::Index size = 64;
  bool liver = true;
  double noise = 0.03;        // std of additive Gaussian noise
  double deformation = 0.1;   // relative amplitude of boundary wobble
  std::uint64_t seed = 0;

  int num_classes() const { return liver ? 4 : 3; }
  void validate() const;
};

/// Geometry masks (0/1) produced alongside a phantom.
struct PhantomLayout {
  SegmentationSample sample;
  LabelMask body;      // inside the outer body contour
  LabelMask sat_band;  // between the outer contour and the inner fat contour
  LabelMask cavity;    // inside the muscle wall
};

PhantomLayout generate_phantom_layout(const PhantomSpec& spec);
SegmentationSample generate_phantom(const PhantomSpec& spec);

/// Phantoms with seeds hash_seed(spec.seed, i), i = 0..n-1.
std::vector<SegmentationSample> generate_phantoms(const PhantomSpec& spec, std::size_t n);

/// Bilinear resampling on pixel centres (align_corners = false convention).
Image resize_bilinear(const Image& image, Eigen::Index height, Eigen::Index width);
/// Nearest-neighbour resampling; output labels are a subset of the input labels.
LabelMask resize_nearest(const LabelMask& mask, Eigen::Index height, Eigen::Index width);

/// Min-max normalisation to [0, 1]. A constant image maps to zeros and
/// returns false.
bool normalize_minmax(Image& image);

struct PreprocessOptions {
  Eigen::Index height = 256;  // 0 keeps the source size
  Eigen::Index width = 256;
  bool center_crop = false;
  double crop_fraction = 0.75;  // kept side fraction when cropping
};

SegmentationSample preprocess(const Image& raw_image, const LabelMask& raw_mask, const PreprocessOptions& options,
                              std::vector<std::string>* warnings = nullptr);

struct AugmentPolicy {
  double max_rotation_degrees = 15.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double flip_probability = 0.5;  // horizontal only
  double intensity_jitter = 0.1;  // multiplicative, +/-

  static AugmentPolicy identity() { return {0.0, 1.0, 1.0, 0.0, 0.0}; }
  void validate() const;
};

struct AugmentTransform {
  double rotation_degrees = 0.0;
  double scale = 1.0;
  bool flip = false;
  double intensity = 1.0;

  bool geometric_identity() const { return rotation_degrees == 0.0 && scale == 1.0; }
};

AugmentTransform draw_transform(const AugmentPolicy& policy, Rng& rng);

/// Rotation and scaling about the image centre via inverse mapping
/// (bilinear for the image, nearest for the mask, zero fill), then the
/// optional horizontal flip, then intensity scaling clamped to [0, 1].
SegmentationSample apply_transform(const SegmentationSample& sample, const AugmentTransform& t);

SegmentationSample augment(const SegmentationSample& sample, const AugmentPolicy& policy, std::uint64_t seed);

struct SplitRatios {
  double train = 0.7;
  double val = 0.2;
  double test = 0.1;
};

struct DatasetSplit {
  std::vector<SegmentationSample> train;
  std::vector<SegmentationSample> val;
  std::vector<SegmentationSample> test;
};

/// Subject-grouped partition. Subjects are shuffled with the seed;
/// floor(val * S) and floor(test * S) subjects go to val and test and the
/// remainder to train. Samples keep their input order within each part.
DatasetSplit split(const std::vector<SegmentationSample>& samples, const SplitRatios& ratios, std::uint64_t seed);

/// Subject key of a file stem: the part before the first '_'.
std::string subject_from_stem(const std::string& stem);

struct DatasetLayout {
  std::string images_dir = "images";
  std::string masks_dir = "masks";
  int num_classes = 4;
  PreprocessOptions preprocess{0, 0, false, 0.75};
};

struct LoadResult {
  std::vector<SegmentationSample> samples;
  std::vector<std::string> errors;  // pairing and validation problems, one per file
  std::size_t unreadable = 0;
  std::vector<std::string> warnings;
};

/// Reads <root>/images/<stem>.png with <root>/masks/<stem>.png, sorted by
/// stem. Throws DataError when the root or the masks directory is missing.
LoadResult load_dataset(const std::filesystem::path& root, const DatasetLayout& layout = {});

/// Writes 16-bit images and 8-bit masks named by sample identifier.
void write_dataset(const std::vector<SegmentationSample>& samples, const std::filesystem::path& root,
                   const DatasetLayout& layout = {});

}  // namespace agunet
