#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "agunet/data.hpp"
#include "agunet/network.hpp"
#include "agunet/training.hpp"

namespace agunet {

/// Where training samples come from.
struct DataConfig {
  std::string source = "phantom";  // "phantom" or "directory"
  std::string root;                // dataset root for "directory"
  Index height = 256;              // resize target for directory data
  Index width = 256;
  bool center_crop = false;
  double crop_fraction = 0.75;
  std::size_t phantom_count = 200;
};

/// Fully resolved run configuration. Sections: network, train, augment,
/// data, phantom, split. The training seed also seeds weight initialisation.
struct RunConfig {
  NetworkSpec network;
  TrainConfig train;
  DataConfig data;
  PhantomSpec phantom;
  SplitRatios split;
  std::uint64_t split_seed = 0;

  void validate() const;
};

/// Parses JSON text; unknown keys and wrong value types raise
/// ConfigurationError naming the key ("train.lerning_rate").
RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Pretty-printed JSON with every key, defaults filled in.
std::string resolved_config_text(const RunConfig& config);
void write_resolved_config(const RunConfig& config, const std::filesystem::path& path);

/// Phantom keys only (size, liver, noise, deformation, seed).
PhantomSpec parse_phantom_spec(const std::string& text, const std::string& source = "<spec>");
std::string phantom_spec_text(const PhantomSpec& spec);

/// Samples described by the data section, preprocessed to a common size.
/// Directory data with pairing or validation errors raises DataError listing them.
std::vector<SegmentationSample> load_run_samples(const RunConfig& config, std::vector<std::string>* warnings = nullptr);

}  // namespace agunet
