#include "agunet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace agunet {

namespace {

using json = nlohmann::ordered_json;

/// Reads the keys of one JSON object section, rejecting any it does not consume.
class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    obj_ = &root.at(name);
    if (!obj_->is_object()) throw ConfigurationError("config section '" + name + "' must be an object");
  }
  explicit Section(const json& obj) : obj_(&obj) {
    if (!obj.is_object()) throw ConfigurationError("config must be a JSON object");
  }

  template <typename T>
  void read(const std::string& key, T& value) {
    seen_.push_back(key);
    if (!obj_ || !obj_->contains(key)) return;
    const json& v = obj_->at(key);
    const std::string full = qualified(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigurationError(full + ": expected true or false");
      value = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigurationError(full + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned()) {
          value = v.get<T>();
        } else {
          if (v.get<long long>() < 0) throw ConfigurationError(full + ": must be non-negative");
          value = static_cast<T>(v.get<long long>());
        }
      } else {
        value = v.get<T>();
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigurationError(full + ": expected a number");
      value = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigurationError(full + ": expected a string");
      value = v.get<std::string>();
    }
  }

  void finish(const std::vector<std::string>& subsections = {}) const {
    if (!obj_) return;
    for (auto it = obj_->begin(); it != obj_->end(); ++it) {
      const bool known = std::find(seen_.begin(), seen_.end(), it.key()) != seen_.end() ||
                         std::find(subsections.begin(), subsections.end(), it.key()) != subsections.end();
      if (!known) throw ConfigurationError("unknown config key '" + qualified(it.key()) + "'");
    }
  }

 private:
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  std::string name_;
  const json* obj_ = nullptr;
  std::vector<std::string> seen_;
};

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigurationError(source + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigurationError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void read_phantom(Section& s, PhantomSpec& p) {
  s.read("size", p.size);
  s.read("liver", p.liver);
  s.read("noise", p.noise);
  s.read("deformation", p.deformation);
  s.read("seed", p.seed);
}

json phantom_json(const PhantomSpec& p) {
  return json{{"size", p.size}, {"liver", p.liver}, {"noise", p.noise}, {"deformation", p.deformation},
              {"seed", p.seed}};
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  train.validate();
  phantom.validate();
  if (network.in_channels != 1) throw ConfigurationError("network.in_channels must be 1 for grayscale slices");
  if (data.source != "phantom" && data.source != "directory") {
    throw ConfigurationError("data.source must be \"phantom\" or \"directory\", got \"" + data.source + "\"");
  }
  if (data.source == "directory" && data.root.empty()) throw ConfigurationError("data.root is required for directory data");
  if (data.source == "phantom") {
    if (data.phantom_count < 3) throw ConfigurationError("data.phantom_count must be at least 3");
    if (phantom.num_classes() != network.num_classes) {
      throw ConfigurationError("phantom.liver gives " + std::to_string(phantom.num_classes()) +
                               " classes but network.num_classes is " + std::to_string(network.num_classes));
    }
  }
  const Index m = network.input_multiple();
  const Index h = data.source == "phantom" ? phantom.size : data.height;
  const Index w = data.source == "phantom" ? phantom.size : data.width;
  if (h < 1 || w < 1 || h % m != 0 || w % m != 0) {
    throw ConfigurationError("input size " + std::to_string(h) + "x" + std::to_string(w) +
                             " must be a positive multiple of " + std::to_string(m) + " for depth " +
                             std::to_string(network.depth));
  }
  if (split.train < 0 || split.val <= 0 || split.test < 0 ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-6) {
    throw ConfigurationError("split ratios must be non-negative, val > 0, and sum to 1");
  }
}

RunConfig parse_run_config(const std::string& text, const std::string& source) {
  const json root = parse_json(text, source);
  Section top(root);
  RunConfig c;

  Section net(root, "network");
  std::string merge = to_string(c.network.merge_mode);
  net.read("depth", c.network.depth);
  net.read("base_channels", c.network.base_channels);
  net.read("in_channels", c.network.in_channels);
  net.read("num_classes", c.network.num_classes);
  net.read("ghost_ratio", c.network.ghost_ratio);
  net.read("expansion", c.network.expansion);
  net.read("channel_reduction", c.network.channel_reduction);
  net.read("spatial_kernel", c.network.spatial_kernel);
  net.read("channel_attention", c.network.channel_attention);
  net.read("spatial_attention", c.network.spatial_attention);
  net.read("depth_attention", c.network.depth_attention);
  net.read("deep_supervision", c.network.deep_supervision);
  net.read("merge_mode", merge);
  c.network.merge_mode = merge_mode_from_string(merge);
  net.finish();

  Section tr(root, "train");
  tr.read("learning_rate", c.train.learning_rate);
  tr.read("batch_size", c.train.batch_size);
  tr.read("max_epochs", c.train.max_epochs);
  tr.read("patience", c.train.patience);
  tr.read("seed", c.train.seed);
  tr.read("dice_weight", c.train.loss.dice);
  tr.read("ce_weight", c.train.loss.cross_entropy);
  tr.read("dice_smooth", c.train.loss.smooth);
  tr.read("augment", c.train.augment);
  tr.read("min_improvement", c.train.min_improvement);
  tr.finish();

  Section aug(root, "augment");
  aug.read("max_rotation_degrees", c.train.augment_policy.max_rotation_degrees);
  aug.read("min_scale", c.train.augment_policy.min_scale);
  aug.read("max_scale", c.train.augment_policy.max_scale);
  aug.read("flip_probability", c.train.augment_policy.flip_probability);
  aug.read("intensity_jitter", c.train.augment_policy.intensity_jitter);
  aug.finish();

  Section data(root, "data");
  data.read("source", c.data.source);
  data.read("root", c.data.root);
  data.read("height", c.data.height);
  data.read("width", c.data.width);
  data.read("center_crop", c.data.center_crop);
  data.read("crop_fraction", c.data.crop_fraction);
  data.read("phantom_count", c.data.phantom_count);
  data.finish();

  Section ph(root, "phantom");
  read_phantom(ph, c.phantom);
  ph.finish();

  Section sp(root, "split");
  sp.read("train", c.split.train);
  sp.read("val", c.split.val);
  sp.read("test", c.split.test);
  sp.read("seed", c.split_seed);
  sp.finish();

  top.finish({"network", "train", "augment", "data", "phantom", "split"});
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return parse_run_config(read_text(path), path.string());
}

std::string resolved_config_text(const RunConfig& c) {
  json root;
  root["network"] = {{"depth", c.network.depth},
                     {"base_channels", c.network.base_channels},
                     {"in_channels", c.network.in_channels},
                     {"num_classes", c.network.num_classes},
                     {"ghost_ratio", c.network.ghost_ratio},
                     {"expansion", c.network.expansion},
                     {"channel_reduction", c.network.channel_reduction},
                     {"spatial_kernel", c.network.spatial_kernel},
                     {"channel_attention", c.network.channel_attention},
                     {"spatial_attention", c.network.spatial_attention},
                     {"depth_attention", c.network.depth_attention},
                     {"deep_supervision", c.network.deep_supervision},
                     {"merge_mode", to_string(c.network.merge_mode)}};
  root["train"] = {{"learning_rate", c.train.learning_rate},
                   {"batch_size", c.train.batch_size},
                   {"max_epochs", c.train.max_epochs},
                   {"patience", c.train.patience},
                   {"seed", c.train.seed},
                   {"dice_weight", c.train.loss.dice},
                   {"ce_weight", c.train.loss.cross_entropy},
                   {"dice_smooth", c.train.loss.smooth},
                   {"augment", c.train.augment},
                   {"min_improvement", c.train.min_improvement}};
  const auto& a = c.train.augment_policy;
  root["augment"] = {{"max_rotation_degrees", a.max_rotation_degrees},
                     {"min_scale", a.min_scale},
                     {"max_scale", a.max_scale},
                     {"flip_probability", a.flip_probability},
                     {"intensity_jitter", a.intensity_jitter}};
  root["data"] = {{"source", c.data.source},
                  {"root", c.data.root},
                  {"height", c.data.height},
                  {"width", c.data.width},
                  {"center_crop", c.data.center_crop},
                  {"crop_fraction", c.data.crop_fraction},
                  {"phantom_count", c.data.phantom_count}};
  root["phantom"] = phantom_json(c.phantom);
  root["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.split_seed}};
  return root.dump(2) + "\n";
}

void write_resolved_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << resolved_config_text(config);
}

PhantomSpec parse_phantom_spec(const std::string& text, const std::string& source) {
  const json root = parse_json(text, source);
  Section s(root);
  PhantomSpec p;
  read_phantom(s, p);
  s.finish();
  p.validate();
  return p;
}

std::string phantom_spec_text(const PhantomSpec& spec) { return phantom_json(spec).dump(2) + "\n"; }

std::vector<SegmentationSample> load_run_samples(const RunConfig& config, std::vector<std::string>* warnings) {
  if (config.data.source == "phantom") return generate_phantoms(config.phantom, config.data.phantom_count);
  DatasetLayout layout;
  layout.num_classes = static_cast<int>(config.network.num_classes);
  layout.preprocess = {config.data.height, config.data.width, config.data.center_crop, config.data.crop_fraction};
  LoadResult loaded = load_dataset(config.data.root, layout);
  if (!loaded.errors.empty()) {
    std::string msg = std::to_string(loaded.errors.size()) + " dataset error(s) under " + config.data.root + ":";
    for (const auto& e : loaded.errors) msg += "\n  " + e;
    throw DataError(msg);
  }
  if (warnings) warnings->insert(warnings->end(), loaded.warnings.begin(), loaded.warnings.end());
  if (loaded.samples.empty()) throw DataError("no image/mask pairs found under " + config.data.root);
  return std::move(loaded.samples);
}

}  // namespace agunet
