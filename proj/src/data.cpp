#include "agunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <set>

#include "agunet/errors.hpp"
#include "agunet/image_io.hpp"

namespace agunet {

using Eigen::Index;

namespace {

std::string dims(Index h, Index w) { return std::to_string(h) + "x" + std::to_string(w); }

void require_same_shape(const Image& image, const LabelMask& mask, const std::string& what) {
  if (image.rows() != mask.rows() || image.cols() != mask.cols()) {
    throw UsageError(what + ": image " + dims(image.rows(), image.cols()) + " vs mask " +
                     dims(mask.rows(), mask.cols()));
  }
}

/// Low-order Fourier wobble of a contour, amplitude bounded by `amount`.
struct Wobble {
  double amp[3] = {0, 0, 0};
  double phase[3] = {0, 0, 0};

  Wobble(Rng& rng, double amount) {
    for (int k = 0; k < 3; ++k) {
      amp[k] = amount * rng.uniform(0.0, 1.0) / (k + 1.5);
      phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
  double operator()(double theta) const {
    double v = 1.0;
    for (int k = 0; k < 3; ++k) v += amp[k] * std::cos((k + 2) * theta + phase[k]);
    return v;
  }
};

struct Ellipse {
  double cx, cy, rx, ry, angle;
  bool contains(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return u * u + v * v < 1.0;
  }
};

}  // namespace

void PhantomSpec::validate() const {
  if (size < 16) throw ConfigurationError("phantom: size must be at least 16, got " + std::to_string(size));
  if (noise < 0.0) throw ConfigurationError("phantom: noise must be non-negative");
  if (deformation < 0.0 || deformation > 0.3) throw ConfigurationError("phantom: deformation must lie in [0, 0.3]");
}

PhantomLayout generate_phantom_layout(const PhantomSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Index n = spec.size;
  const double s = static_cast<double>(n);
  const double d = spec.deformation;

  const double cx = (s - 1.0) / 2.0 + rng.uniform(-0.02, 0.02) * s;
  const double cy = (s - 1.0) / 2.0 + rng.uniform(-0.02, 0.02) * s;
  const double ax = 0.40 * s * (1.0 + 0.5 * d * rng.uniform(-1.0, 1.0));
  const double ay = 0.32 * s * (1.0 + 0.5 * d * rng.uniform(-1.0, 1.0));
  const Wobble outer(rng, d);
  const Wobble inner(rng, d);
  const double sat_inner = 1.0 - rng.uniform(0.17, 0.24);
  const double cavity_edge = sat_inner - rng.uniform(0.08, 0.11);

  // Normalised radius: 1 on the outer contour.
  auto radius = [&](double x, double y) {
    const double u = (x - cx) / ax, v = (y - cy) / ay;
    return std::sqrt(u * u + v * v);
  };
  auto theta = [&](double x, double y) { return std::atan2((y - cy) / ay, (x - cx) / ax); };

  std::vector<Ellipse> organs;
  if (spec.liver) {
    organs.push_back({cx - 0.33 * cavity_edge * ax + rng.uniform(-0.04, 0.04) * ax,
                      cy - 0.22 * cavity_edge * ay + rng.uniform(-0.04, 0.04) * ay,
                      ax * cavity_edge * rng.uniform(0.40, 0.50), ay * cavity_edge * rng.uniform(0.38, 0.48),
                      rng.uniform(-0.4, 0.4)});
  }
  std::vector<Ellipse> blobs;
  const int blob_count = 5 + static_cast<int>(rng.below(4));
  for (int attempt = 0; static_cast<int>(blobs.size()) < blob_count && attempt < 200; ++attempt) {
    const double r = cavity_edge * 0.8 * std::sqrt(rng.uniform());
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Ellipse e{cx + r * ax * std::cos(phi), cy + r * ay * std::sin(phi),
                    ax * rng.uniform(0.11, 0.20), ay * rng.uniform(0.11, 0.20), rng.uniform(0.0, std::numbers::pi)};
    if (!organs.empty() && organs.front().contains(e.cx, e.cy)) continue;
    blobs.push_back(e);
  }
  if (blobs.empty()) blobs.push_back({cx, cy, 0.15 * ax, 0.15 * ay, 0.0});

  PhantomLayout out;
  SegmentationSample& sample = out.sample;
  sample.image = Image::Zero(n, n);
  sample.mask = LabelMask::Zero(n, n);
  out.body = LabelMask::Zero(n, n);
  out.sat_band = LabelMask::Zero(n, n);
  out.cavity = LabelMask::Zero(n, n);

  constexpr double air = 0.02, subcutaneous = 0.30, visceral = 0.34, muscle = 0.62, soft = 0.50, organ = 0.72;
  const double gx = rng.uniform(-0.03, 0.03), gy = rng.uniform(-0.03, 0.03);
  for (Index y = 0; y < n; ++y) {
    for (Index x = 0; x < n; ++x) {
      const double px = static_cast<double>(x), py = static_cast<double>(y);
      const double rho = radius(px, py);
      const double t = theta(px, py);
      double value = air;
      int label = 0;
      if (rho < outer(t)) {
        out.body(y, x) = 1;
        const double inner_edge = sat_inner * inner(t);
        if (rho >= inner_edge) {
          out.sat_band(y, x) = 1;
          value = subcutaneous;
          label = 2;
        } else if (rho >= cavity_edge * inner(t)) {
          value = muscle;
        } else {
          out.cavity(y, x) = 1;
          value = soft;
          if (!organs.empty() && organs.front().contains(px, py)) {
            value = organ;
            label = 3;
          } else {
            for (const auto& b : blobs) {
              if (b.contains(px, py)) {
                value = visceral;
                label = 1;
                break;
              }
            }
          }
        }
        value += gx * (px - cx) / ax + gy * (py - cy) / ay;
      }
      sample.image(y, x) = static_cast<float>(std::clamp(value + spec.noise * rng.normal(), 0.0, 1.0));
      sample.mask(y, x) = label;
    }
  }
  normalize_minmax(sample.image);
  sample.identifier = "phantom-" + std::to_string(spec.seed);
  sample.subject_id = sample.identifier;
  return out;
}

SegmentationSample generate_phantom(const PhantomSpec& spec) { return generate_phantom_layout(spec).sample; }

std::vector<SegmentationSample> generate_phantoms(const PhantomSpec& spec, std::size_t n) {
  std::vector<SegmentationSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PhantomSpec p = spec;
    p.seed = hash_seed(spec.seed, i);
    out.push_back(generate_phantom(p));
    char name[32];
    std::snprintf(name, sizeof(name), "phantom-%04zu", i);
    out.back().identifier = name;
    out.back().subject_id = name;
  }
  return out;
}

Image resize_bilinear(const Image& image, Index height, Index width) {
  if (height < 1 || width < 1) throw UsageError("resize: target " + dims(height, width) + " is empty");
  if (image.size() == 0) throw UsageError("resize: source image is empty");
  if (height == image.rows() && width == image.cols()) return image;
  Image out(height, width);
  const double sy = static_cast<double>(image.rows()) / height;
  const double sx = static_cast<double>(image.cols()) / width;
  const Index ymax = image.rows() - 1, xmax = image.cols() - 1;
  for (Index y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(ymax));
    const Index y0 = static_cast<Index>(fy);
    const Index y1 = std::min(y0 + 1, ymax);
    const double wy = fy - y0;
    for (Index x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(xmax));
      const Index x0 = static_cast<Index>(fx);
      const Index x1 = std::min(x0 + 1, xmax);
      const double wx = fx - x0;
      const double top = (1 - wx) * image(y0, x0) + wx * image(y0, x1);
      const double bottom = (1 - wx) * image(y1, x0) + wx * image(y1, x1);
      out(y, x) = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

LabelMask resize_nearest(const LabelMask& mask, Index height, Index width) {
  if (height < 1 || width < 1) throw UsageError("resize: target " + dims(height, width) + " is empty");
  if (mask.size() == 0) throw UsageError("resize: source mask is empty");
  LabelMask out(height, width);
  for (Index y = 0; y < height; ++y) {
    const Index sy = std::min(static_cast<Index>((y + 0.5) * mask.rows() / height), mask.rows() - 1);
    for (Index x = 0; x < width; ++x) {
      const Index sx = std::min(static_cast<Index>((x + 0.5) * mask.cols() / width), mask.cols() - 1);
      out(y, x) = mask(sy, sx);
    }
  }
  return out;
}

bool normalize_minmax(Image& image) {
  if (image.size() == 0) return true;
  const float lo = image.minCoeff();
  const float hi = image.maxCoeff();
  if (!(hi > lo)) {
    image.setZero();
    return false;
  }
  image = ((image - lo) / (hi - lo)).cwiseMax(0.0f).cwiseMin(1.0f);
  return true;
}

SegmentationSample preprocess(const Image& raw_image, const LabelMask& raw_mask, const PreprocessOptions& options,
                              std::vector<std::string>* warnings) {
  require_same_shape(raw_image, raw_mask, "preprocess");
  if (raw_image.size() == 0) throw UsageError("preprocess: empty image");
  if (options.height < 0 || options.width < 0 || (options.height == 0) != (options.width == 0)) {
    throw UsageError("preprocess: target size must be both zero or both positive");
  }
  SegmentationSample out;
  out.image = raw_image;
  out.mask = raw_mask;
  if (options.center_crop) {
    if (!(options.crop_fraction > 0.0 && options.crop_fraction <= 1.0)) {
      throw UsageError("preprocess: crop_fraction must lie in (0, 1]");
    }
    const Index h = std::max<Index>(1, std::lround(options.crop_fraction * raw_image.rows()));
    const Index w = std::max<Index>(1, std::lround(options.crop_fraction * raw_image.cols()));
    const Index top = (raw_image.rows() - h) / 2, left = (raw_image.cols() - w) / 2;
    out.image = raw_image.block(top, left, h, w).eval();
    out.mask = raw_mask.block(top, left, h, w).eval();
  }
  if (options.height > 0) {
    out.image = resize_bilinear(out.image, options.height, options.width);
    out.mask = resize_nearest(out.mask, options.height, options.width);
  }
  if (!normalize_minmax(out.image) && warnings) {
    warnings->push_back("constant image normalised to zeros");
  }
  return out;
}

void AugmentPolicy::validate() const {
  if (max_rotation_degrees < 0.0) throw ConfigurationError("augment: max_rotation_degrees must be non-negative");
  if (!(min_scale > 0.0) || max_scale < min_scale) throw ConfigurationError("augment: need 0 < min_scale <= max_scale");
  if (flip_probability < 0.0 || flip_probability > 1.0) throw ConfigurationError("augment: flip_probability outside [0, 1]");
  if (intensity_jitter < 0.0 || intensity_jitter >= 1.0) throw ConfigurationError("augment: intensity_jitter outside [0, 1)");
}

AugmentTransform draw_transform(const AugmentPolicy& policy, Rng& rng) {
  policy.validate();
  AugmentTransform t;
  t.rotation_degrees = rng.uniform(-policy.max_rotation_degrees, policy.max_rotation_degrees) + 0.0;
  t.scale = rng.uniform(policy.min_scale, policy.max_scale);
  t.flip = rng.uniform() < policy.flip_probability;
  t.intensity = 1.0 + rng.uniform(-policy.intensity_jitter, policy.intensity_jitter);
  return t;
}

namespace {

/// cos/sin with quarter turns snapped to exact values.
std::pair<double, double> rotation_terms(double degrees) {
  const double q = degrees / 90.0;
  if (q == std::round(q)) {
    switch (((static_cast<long long>(std::round(q)) % 4) + 4) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double r = degrees * std::numbers::pi / 180.0;
  return {std::cos(r), std::sin(r)};
}

}  // namespace

SegmentationSample apply_transform(const SegmentationSample& sample, const AugmentTransform& t) {
  require_same_shape(sample.image, sample.mask, "augment");
  if (!(t.scale > 0.0)) throw UsageError("augment: scale must be positive");
  SegmentationSample out = sample;
  const Index h = sample.image.rows(), w = sample.image.cols();
  if (!t.geometric_identity()) {
    const auto [c, s] = rotation_terms(t.rotation_degrees);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    for (Index y = 0; y < h; ++y) {
      for (Index x = 0; x < w; ++x) {
        // Inverse map: rotate the output offset by -angle and undo the scale.
        const double dx = x - cx, dy = y - cy;
        const double sx = (c * dx + s * dy) / t.scale + cx;
        const double sy = (-s * dx + c * dy) / t.scale + cy;

        const double nx = std::floor(sx + 0.5), ny = std::floor(sy + 0.5);
        out.mask(y, x) = (nx >= 0 && nx < w && ny >= 0 && ny < h)
                             ? sample.mask(static_cast<Index>(ny), static_cast<Index>(nx))
                             : 0;

        if (sx < 0.0 || sy < 0.0 || sx > w - 1.0 || sy > h - 1.0) {
          out.image(y, x) = 0.0f;
          continue;
        }
        const Index x0 = static_cast<Index>(sx), y0 = static_cast<Index>(sy);
        const Index x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double wx = sx - x0, wy = sy - y0;
        const double top = (1 - wx) * sample.image(y0, x0) + wx * sample.image(y0, x1);
        const double bottom = (1 - wx) * sample.image(y1, x0) + wx * sample.image(y1, x1);
        out.image(y, x) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  if (t.flip) {
    out.image = out.image.rowwise().reverse().eval();
    out.mask = out.mask.rowwise().reverse().eval();
  }
  if (t.intensity != 1.0) {
    out.image = (out.image * static_cast<float>(t.intensity)).cwiseMax(0.0f).cwiseMin(1.0f);
  }
  return out;
}

SegmentationSample augment(const SegmentationSample& sample, const AugmentPolicy& policy, std::uint64_t seed) {
  Rng rng(seed);
  return apply_transform(sample, draw_transform(policy, rng));
}

DatasetSplit split(const std::vector<SegmentationSample>& samples, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-6) {
    throw UsageError("split: ratios must be non-negative and sum to 1");
  }
  const std::set<std::string> unique_subjects = [&] {
    std::set<std::string> s;
    for (const auto& sample : samples) s.insert(sample.subject_id);
    return s;
  }();
  if (unique_subjects.size() < 3) {
    throw UsageError("split: need at least 3 subjects, got " + std::to_string(unique_subjects.size()));
  }
  std::vector<std::string> subjects(unique_subjects.begin(), unique_subjects.end());
  Rng rng(seed);
  rng.shuffle(subjects);
  const double count = static_cast<double>(subjects.size());
  const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * count + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * count + 1e-9));

  std::map<std::string, int> part;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    part[subjects[i]] = i < n_val ? 1 : (i < n_val + n_test ? 2 : 0);
  }
  DatasetSplit out;
  for (const auto& sample : samples) {
    switch (part.at(sample.subject_id)) {
      case 1: out.val.push_back(sample); break;
      case 2: out.test.push_back(sample); break;
      default: out.train.push_back(sample); break;
    }
  }
  return out;
}

std::string subject_from_stem(const std::string& stem) { return stem.substr(0, stem.find('_')); }

namespace {

namespace fs = std::filesystem;

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  std::map<std::string, fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.emplace(entry.path().stem().string(), entry.path());
  }
  return files;
}

}  // namespace

LoadResult load_dataset(const std::filesystem::path& root, const DatasetLayout& layout) {
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  if (layout.num_classes < 2) throw UsageError("load_dataset: num_classes must be at least 2");
  const fs::path image_dir = root / layout.images_dir;
  const fs::path mask_dir = root / layout.masks_dir;
  const auto images = png_files(image_dir);
  if (!images.empty() && !fs::is_directory(mask_dir)) {
    throw DataError("masks directory not found: " + mask_dir.string());
  }
  const auto masks = png_files(mask_dir);

  LoadResult result;
  for (const auto& [stem, image_path] : images) {
    const auto match = masks.find(stem);
    if (match == masks.end()) {
      result.errors.push_back("missing mask for image " + image_path.string());
      continue;
    }
    GrayImage raw_image, raw_mask;
    try {
      raw_image = read_png_gray(image_path);
      raw_mask = read_png_gray(match->second);
    } catch (const DataError& e) {
      ++result.unreadable;
      result.warnings.push_back(std::string("skipped unreadable pair ") + stem + ": " + e.what());
      continue;
    }
    if (raw_image.pixels.rows() != raw_mask.pixels.rows() || raw_image.pixels.cols() != raw_mask.pixels.cols()) {
      result.errors.push_back(match->second.string() + ": mask " + dims(raw_mask.pixels.rows(), raw_mask.pixels.cols()) +
                              " does not match image " + dims(raw_image.pixels.rows(), raw_image.pixels.cols()));
      continue;
    }
    const int max_label = raw_mask.pixels.size() ? static_cast<int>(raw_mask.pixels.maxCoeff()) : 0;
    if (max_label >= layout.num_classes) {
      result.errors.push_back(match->second.string() + ": class id " + std::to_string(max_label) + " outside [0, " +
                              std::to_string(layout.num_classes) + ")");
      continue;
    }
    std::vector<std::string> warnings;
    SegmentationSample sample = preprocess(raw_image.pixels.cast<float>(), raw_mask.pixels.cast<std::int32_t>(),
                                           layout.preprocess, &warnings);
    for (const auto& w : warnings) result.warnings.push_back(image_path.string() + ": " + w);
    sample.identifier = stem;
    sample.subject_id = subject_from_stem(stem);
    result.samples.push_back(std::move(sample));
  }
  for (const auto& [stem, mask_path] : masks) {
    if (!images.count(stem)) result.errors.push_back("mask without image " + mask_path.string());
  }
  return result;
}

void write_dataset(const std::vector<SegmentationSample>& samples, const std::filesystem::path& root,
                   const DatasetLayout& layout) {
  const fs::path image_dir = root / layout.images_dir;
  const fs::path mask_dir = root / layout.masks_dir;
  fs::create_directories(image_dir);
  fs::create_directories(mask_dir);
  for (const auto& sample : samples) {
    require_same_shape(sample.image, sample.mask, "write_dataset");
    if (sample.identifier.empty() || sample.identifier.find('/') != std::string::npos) {
      throw UsageError("write_dataset: identifier '" + sample.identifier + "' is not a valid file stem");
    }
    if (sample.mask.size() && (sample.mask.minCoeff() < 0 || sample.mask.maxCoeff() > 255)) {
      throw UsageError("write_dataset: mask labels of " + sample.identifier + " do not fit 8 bits");
    }
    const Gray16 pixels = (sample.image.cwiseMax(0.0f).cwiseMin(1.0f) * 65535.0f).round().cast<std::uint16_t>();
    write_png_gray(image_dir / (sample.identifier + ".png"), pixels, 16);
    write_png_gray(mask_dir / (sample.identifier + ".png"), sample.mask.cast<std::uint16_t>(), 8);
  }
}

}  // namespace agunet
