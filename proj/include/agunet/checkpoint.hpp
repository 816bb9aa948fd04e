#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "agunet/network.hpp"

namespace agunet {

/// On-disk layout of a checkpoint directory:
///   manifest.txt  header, network spec, seed, meta lines, then one line per
///                 array: <path> dtype=float32 shape=NxCxHxW offset=<i> length=<n> trainable=<0|1>
///   weights.bin   the arrays back to back as little-endian float32
struct CheckpointEntry {
  std::string path;
  Shape shape;
  bool trainable = true;
  std::vector<float> values;
};

struct Checkpoint {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> entries;
};

std::string format_network_spec(const NetworkSpec& spec);
NetworkSpec parse_network_spec(const std::string& text);

Checkpoint make_checkpoint(const Network<float>& net, const std::map<std::string, std::string>& meta = {});
void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
void save_checkpoint(const std::filesystem::path& dir, const Network<float>& net,
                     const std::map<std::string, std::string>& meta = {});

Checkpoint read_checkpoint(const std::filesystem::path& dir);

/// Copies values into a network built from the same spec; paths and shapes must match.
void apply_checkpoint(const Checkpoint& checkpoint, Network<float>& net);
Network<float> load_network(const std::filesystem::path& dir);

}  // namespace agunet
