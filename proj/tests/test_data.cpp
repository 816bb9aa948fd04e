#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "agunet/data.hpp"
#include "agunet/errors.hpp"
#include "agunet/image_io.hpp"
#include "temp_dir.hpp"

using namespace agunet;
using Eigen::Index;
namespace fs = std::filesystem;

namespace {

std::map<int, long> class_counts(const LabelMask& m) {
  std::map<int, long> counts;
  for (Index i = 0; i < m.size(); ++i) ++counts[m.data()[i]];
  return counts;
}

SegmentationSample random_sample(Index h, Index w, std::uint64_t seed, int classes = 4) {
  Rng rng(seed);
  SegmentationSample s;
  s.image = Image(h, w);
  s.mask = LabelMask(h, w);
  for (Index i = 0; i < s.image.size(); ++i) {
    s.image.data()[i] = static_cast<float>(rng.uniform());
    s.mask.data()[i] = static_cast<std::int32_t>(rng.below(classes));
  }
  return s;
}

std::vector<SegmentationSample> subjects(std::size_t n) {
  std::vector<SegmentationSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    SegmentationSample s;
    s.identifier = "s" + std::to_string(i);
    s.subject_id = s.identifier;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("phantom generation is deterministic per seed") {
  PhantomSpec spec;
  spec.seed = 42;
  const auto a = generate_phantom(spec);
  const auto b = generate_phantom(spec);
  CHECK((a.image == b.image).all());
  CHECK((a.mask == b.mask).all());
  spec.seed = 43;
  CHECK((generate_phantom(spec).mask != a.mask).any());
}

TEST_CASE("phantom classes are present, in range and geometrically nested") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    PhantomSpec spec;
    spec.seed = seed;
    const PhantomLayout p = generate_phantom_layout(spec);
    const auto& m = p.sample.mask;
    CAPTURE(seed);
    REQUIRE(m.rows() == 64);
    REQUIRE(p.sample.image.rows() == 64);
    CHECK(m.minCoeff() >= 0);
    CHECK(m.maxCoeff() <= 3);
    const auto counts = class_counts(m);
    for (int c = 0; c < 4; ++c) CHECK(counts.count(c));
    CHECK(p.sample.image.minCoeff() >= 0.0f);
    CHECK(p.sample.image.maxCoeff() <= 1.0f);
    bool nested = true;
    for (Index i = 0; i < m.size(); ++i) {
      const int label = m.data()[i];
      // Every labelled pixel lies in the body; fat ring exactly fills the band;
      // visceral fat and organ sit inside the cavity, never in the band.
      if (label != 0 && !p.body.data()[i]) nested = false;
      if ((label == 2) != (p.sat_band.data()[i] == 1)) nested = false;
      if ((label == 1 || label == 3) && (!p.cavity.data()[i] || p.sat_band.data()[i])) nested = false;
      if (p.cavity.data()[i] && p.sat_band.data()[i]) nested = false;
    }
    CHECK(nested);
  }
}

TEST_CASE("the ring separates visceral pixels from the outside") {
  // Flood fill from the border through non-ring pixels must never reach visceral fat.
  PhantomSpec spec;
  spec.seed = 5;
  const auto p = generate_phantom(spec);
  const Index n = p.mask.rows();
  std::vector<char> seen(static_cast<std::size_t>(n * n), 0);
  std::vector<std::pair<Index, Index>> stack;
  for (Index k = 0; k < n; ++k) {
    stack.push_back({0, k});
    stack.push_back({n - 1, k});
    stack.push_back({k, 0});
    stack.push_back({k, n - 1});
  }
  bool leaked = false;
  while (!stack.empty()) {
    const auto [y, x] = stack.back();
    stack.pop_back();
    if (y < 0 || x < 0 || y >= n || x >= n || seen[y * n + x] || p.mask(y, x) == 2) continue;
    seen[y * n + x] = 1;
    if (p.mask(y, x) == 1 || p.mask(y, x) == 3) leaked = true;
    stack.push_back({y + 1, x});
    stack.push_back({y - 1, x});
    stack.push_back({y, x + 1});
    stack.push_back({y, x - 1});
  }
  CHECK_FALSE(leaked);
}

TEST_CASE("phantom without the organ uses three classes") {
  PhantomSpec spec;
  spec.liver = false;
  spec.size = 48;
  spec.seed = 9;
  const auto s = generate_phantom(spec);
  CHECK(spec.num_classes() == 3);
  CHECK(s.mask.maxCoeff() == 2);
  CHECK(s.mask.rows() == 48);
  PhantomSpec bad;
  bad.size = 8;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
}

TEST_CASE("generate_phantoms names samples and derives seeds") {
  PhantomSpec spec;
  spec.seed = 3;
  const auto set = generate_phantoms(spec, 3);
  REQUIRE(set.size() == 3);
  CHECK(set[1].identifier == "phantom-0001");
  CHECK(set[1].subject_id == "phantom-0001");
  PhantomSpec one = spec;
  one.seed = hash_seed(3, 1);
  CHECK((generate_phantom(one).mask == set[1].mask).all());
}

TEST_CASE("preprocess resizes, normalises and keeps labels") {
  const SegmentationSample raw = random_sample(512, 512, 1);
  const Image scaled = raw.image * 700.0f + 100.0f;
  std::vector<std::string> warnings;
  const auto s = preprocess(scaled, raw.mask, {256, 256, false, 0.75}, &warnings);
  CHECK(s.image.rows() == 256);
  CHECK(s.image.cols() == 256);
  CHECK(s.mask.rows() == 256);
  CHECK(s.image.minCoeff() == 0.0f);
  CHECK(s.image.maxCoeff() == 1.0f);
  CHECK(warnings.empty());
  std::set<int> before, after;
  for (Index i = 0; i < raw.mask.size(); ++i) before.insert(raw.mask.data()[i]);
  for (Index i = 0; i < s.mask.size(); ++i) after.insert(s.mask.data()[i]);
  for (int v : after) CHECK(before.count(v));

  const auto cropped = preprocess(scaled, raw.mask, {0, 0, true, 0.5});
  CHECK(cropped.image.rows() == 256);
  CHECK(cropped.mask(0, 0) == raw.mask(128, 128));
}

TEST_CASE("constant images normalise to zeros with a warning") {
  std::vector<std::string> warnings;
  const auto s = preprocess(Image::Constant(8, 8, 3.5f), LabelMask::Zero(8, 8), {0, 0, false, 0.75}, &warnings);
  CHECK((s.image == 0.0f).all());
  CHECK(warnings.size() == 1);
  CHECK_THROWS_AS(preprocess(Image::Zero(8, 8), LabelMask::Zero(8, 7), {}), UsageError);
}

TEST_CASE("resampling kernels") {
  const Image flat = Image::Constant(7, 9, 0.25f);
  CHECK((resize_bilinear(flat, 20, 3) == 0.25f).all());
  Image ramp(1, 4);
  ramp << 0.0f, 1.0f, 2.0f, 3.0f;
  const Image up = resize_bilinear(ramp, 1, 8);
  CHECK(up(0, 0) == 0.0f);
  CHECK(up(0, 7) == 3.0f);
  CHECK(std::abs(up(0, 2) - 0.75f) < 1e-6f);
  LabelMask m(2, 2);
  m << 1, 2, 3, 0;
  const LabelMask big = resize_nearest(m, 4, 4);
  CHECK(big(0, 1) == 1);
  CHECK(big(0, 2) == 2);
  CHECK(big(3, 0) == 3);
  CHECK(big(3, 3) == 0);
}

TEST_CASE("identity augmentation returns the sample bit for bit") {
  const auto s = random_sample(32, 32, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = augment(s, AugmentPolicy::identity(), seed);
    CHECK((a.image == s.image).all());
    CHECK((a.mask == s.mask).all());
  }
}

TEST_CASE("horizontal flip is an involution") {
  const auto s = random_sample(17, 23, 3);
  AugmentTransform flip;
  flip.flip = true;
  const auto once = apply_transform(s, flip);
  CHECK(once.mask(4, 0) == s.mask(4, 22));
  const auto twice = apply_transform(once, flip);
  CHECK((twice.mask == s.mask).all());
  CHECK((twice.image == s.image).all());
}

TEST_CASE("quarter-turn rotation preserves per-class pixel counts") {
  for (Index size : {16, 17, 32}) {
    const auto s = random_sample(size, size, 4 + size);
    for (double degrees : {90.0, -90.0, 180.0, 270.0}) {
      AugmentTransform t;
      t.rotation_degrees = degrees;
      const auto r = apply_transform(s, t);
      CAPTURE(size);
      CAPTURE(degrees);
      CHECK(class_counts(r.mask) == class_counts(s.mask));
    }
    AugmentTransform quarter;
    quarter.rotation_degrees = 90.0;
    auto r = s;
    for (int k = 0; k < 4; ++k) r = apply_transform(r, quarter);
    CHECK((r.mask == s.mask).all());
  }
}

TEST_CASE("random augmentation is deterministic and keeps labels and shapes") {
  const auto s = generate_phantom(PhantomSpec{});
  const AugmentPolicy policy;
  const auto a = augment(s, policy, 77);
  const auto b = augment(s, policy, 77);
  CHECK((a.image == b.image).all());
  CHECK((a.mask == b.mask).all());
  CHECK(a.image.rows() == s.image.rows());
  CHECK(a.mask.cols() == s.mask.cols());
  CHECK(a.image.minCoeff() >= 0.0f);
  CHECK(a.image.maxCoeff() <= 1.0f);
  CHECK(a.mask.maxCoeff() <= 3);
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 5; ++seed) differs = differs || (augment(s, policy, seed).mask != s.mask).any();
  CHECK(differs);

  AugmentTransform jitter;
  jitter.intensity = 0.5;
  const auto j = apply_transform(s, jitter);
  CHECK((j.mask == s.mask).all());
  CHECK((j.image - s.image * 0.5f).abs().maxCoeff() < 1e-7f);
  AugmentPolicy bad;
  bad.min_scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigurationError);
}

TEST_CASE("split sizes follow floor allocation with remainder to train") {
  const auto a = split(subjects(100), {0.7, 0.2, 0.1}, 1);
  CHECK(a.train.size() == 70);
  CHECK(a.val.size() == 20);
  CHECK(a.test.size() == 10);
  const auto b = split(subjects(10), {0.7, 0.2, 0.1}, 1);
  CHECK(b.train.size() == 7);
  CHECK(b.val.size() == 2);
  CHECK(b.test.size() == 1);
  for (std::size_t n = 3; n <= 60; ++n) {
    // Enumerate the rule: val and test get the largest counts not exceeding their share.
    std::size_t val = 0, test = 0;
    while (static_cast<double>(val + 1) <= 0.2 * static_cast<double>(n) + 1e-9) ++val;
    while (static_cast<double>(test + 1) <= 0.1 * static_cast<double>(n) + 1e-9) ++test;
    const auto r = split(subjects(n), {0.7, 0.2, 0.1}, n);
    CAPTURE(n);
    CHECK(r.val.size() == val);
    CHECK(r.test.size() == test);
    CHECK(r.train.size() == n - val - test);
  }
}

TEST_CASE("split is a deterministic, subject-respecting partition") {
  std::vector<SegmentationSample> samples;
  for (int subject = 0; subject < 12; ++subject) {
    for (int slice = 0; slice <= subject % 3; ++slice) {
      SegmentationSample s;
      s.subject_id = "p" + std::to_string(subject);
      s.identifier = s.subject_id + "_" + std::to_string(slice);
      samples.push_back(s);
    }
  }
  const auto a = split(samples, {0.5, 0.25, 0.25}, 7);
  const auto b = split(samples, {0.5, 0.25, 0.25}, 7);
  std::map<std::string, int> part_of_subject;
  std::set<std::string> seen;
  bool consistent = true;
  int part = 0;
  for (const auto* p : {&a.train, &a.val, &a.test}) {
    for (const auto& s : *p) {
      consistent = consistent && seen.insert(s.identifier).second;
      const auto [it, fresh] = part_of_subject.emplace(s.subject_id, part);
      consistent = consistent && (fresh || it->second == part);
    }
    ++part;
  }
  CHECK(consistent);
  CHECK(seen.size() == samples.size());
  CHECK(a.val.size() == b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) CHECK(a.val[i].identifier == b.val[i].identifier);
  bool any_change = false;
  for (std::uint64_t seed = 8; seed < 14; ++seed) {
    const auto c = split(samples, {0.5, 0.25, 0.25}, seed);
    any_change = any_change || c.val.size() != a.val.size() || c.val.front().identifier != a.val.front().identifier;
  }
  CHECK(any_change);
  CHECK(subject_from_stem("case12_slice034") == "case12");
  CHECK(subject_from_stem("plain") == "plain");
}

TEST_CASE("split preconditions") {
  CHECK_THROWS_AS(split(subjects(2), {0.7, 0.2, 0.1}, 1), UsageError);
  CHECK_THROWS_AS(split(subjects(10), {0.7, 0.2, 0.2}, 1), UsageError);
}

TEST_CASE("PNG round trips at 8 and 16 bits") {
  agunet::testing::TempDir dir("png");
  Gray16 g(5, 7);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = static_cast<std::uint16_t>(i * 1723 % 65536);
  write_png_gray(dir.path / "g16.png", g, 16);
  const GrayImage r16 = read_png_gray(dir.path / "g16.png");
  CHECK(r16.bit_depth == 16);
  CHECK((r16.pixels == g).all());
  const Gray16 g8 = g.unaryExpr([](std::uint16_t v) { return static_cast<std::uint16_t>(v % 256); });
  write_png_gray(dir.path / "g8.png", g8, 8);
  const GrayImage r8 = read_png_gray(dir.path / "g8.png");
  CHECK(r8.bit_depth == 8);
  CHECK((r8.pixels == g8).all());
  CHECK_THROWS_AS(write_png_gray(dir.path / "bad.png", g, 8), UsageError);

  RgbImage rgb(3, 4);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<std::uint8_t>(i * 7);
  write_png_rgb(dir.path / "c.png", rgb);
  CHECK(read_png_rgb(dir.path / "c.png").data == rgb.data);
  const GrayImage mean = read_png_gray(dir.path / "c.png");
  CHECK(mean.pixels(0, 1) == (3 * 7 + 4 * 7 + 5 * 7) / 3);

  std::ofstream(dir.path / "junk.png") << "not a png";
  CHECK_THROWS_AS(read_png_gray(dir.path / "junk.png"), DataError);
  CHECK_THROWS_AS(read_png_gray(dir.path / "missing.png"), DataError);
}

TEST_CASE("load_dataset on an empty directory returns nothing") {
  agunet::testing::TempDir dir("empty");
  const LoadResult r = load_dataset(dir.path);
  CHECK(r.samples.empty());
  CHECK(r.errors.empty());
  CHECK_THROWS_AS(load_dataset(dir.path / "absent"), DataError);
}

TEST_CASE("load_dataset pairs files and itemises problems") {
  agunet::testing::TempDir dir("pairs");
  PhantomSpec spec;
  spec.size = 32;
  auto samples = generate_phantoms(spec, 4);
  samples[0].identifier = "caseA_001";
  samples[1].identifier = "caseA_002";
  samples[2].identifier = "caseB_001";
  samples[3].identifier = "orphan";
  write_dataset(samples, dir.path);
  fs::remove(dir.path / "masks" / "orphan.png");

  const LoadResult r = load_dataset(dir.path);
  REQUIRE(r.samples.size() == 3);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors.front().find("orphan.png") != std::string::npos);
  CHECK(r.samples[0].subject_id == "caseA");
  CHECK(r.samples[2].subject_id == "caseB");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((r.samples[i].mask == samples[i].mask).all());
    CHECK((r.samples[i].image - samples[i].image).abs().maxCoeff() < 1e-4f);
  }

  DatasetLayout three;
  three.num_classes = 3;
  const LoadResult strict = load_dataset(dir.path, three);
  CHECK(strict.samples.empty());
  CHECK(strict.errors.size() == 4);
  CHECK(strict.errors.front().find("caseA_001.png") != std::string::npos);
  CHECK(strict.errors.front().find("class id 3") != std::string::npos);

  std::ofstream(dir.path / "images" / "broken.png") << "garbage";
  std::ofstream(dir.path / "masks" / "broken.png") << "garbage";
  const LoadResult with_broken = load_dataset(dir.path);
  CHECK(with_broken.unreadable == 1);
  CHECK(with_broken.samples.size() == 3);
  CHECK(with_broken.warnings.size() == 1);
}

TEST_CASE("missing masks directory names the path") {
  agunet::testing::TempDir dir("nomasks");
  write_dataset(generate_phantoms(PhantomSpec{}, 1), dir.path);
  fs::remove_all(dir.path / "masks");
  try {
    load_dataset(dir.path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find((dir.path / "masks").string()) != std::string::npos);
  }
}

TEST_CASE("load_dataset resizes to a common resolution") {
  agunet::testing::TempDir dir("resize");
  PhantomSpec spec;
  spec.size = 48;
  write_dataset(generate_phantoms(spec, 2), dir.path);
  DatasetLayout layout;
  layout.preprocess = {32, 32, false, 0.75};
  const LoadResult r = load_dataset(dir.path, layout);
  REQUIRE(r.samples.size() == 2);
  CHECK(r.samples[0].image.rows() == 32);
  CHECK(r.samples[0].mask.cols() == 32);
}
