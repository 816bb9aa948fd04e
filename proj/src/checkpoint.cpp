#include "agunet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace agunet {

namespace {

constexpr const char* kHeader = "agunet-checkpoint 1";

std::string bool_text(bool b) { return b ? "1" : "0"; }

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw DataError("checkpoint: " + key + " expects 0 or 1, got '" + v + "'");
}

Index parse_index(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<Index>(x);
  } catch (const std::exception&) {
    throw DataError("checkpoint: " + key + " expects an integer, got '" + v + "'");
  }
}

std::pair<std::string, std::string> split_key_value(const std::string& token) {
  const auto eq = token.find('=');
  if (eq == std::string::npos) throw DataError("checkpoint: expected key=value, got '" + token + "'");
  return {token.substr(0, eq), token.substr(eq + 1)};
}

Shape parse_shape(const std::string& text) {
  Index dims[4] = {0, 0, 0, 0};
  std::istringstream is(text);
  std::string part;
  int k = 0;
  while (std::getline(is, part, 'x')) {
    if (k == 4) throw DataError("checkpoint: shape '" + text + "' has more than 4 extents");
    dims[k++] = parse_index("shape", part);
  }
  if (k != 4) throw DataError("checkpoint: shape '" + text + "' needs 4 extents");
  return {dims[0], dims[1], dims[2], dims[3]};
}

}  // namespace

std::string format_network_spec(const NetworkSpec& s) {
  std::ostringstream os;
  os << "depth=" << s.depth << " base_channels=" << s.base_channels << " in_channels=" << s.in_channels
     << " num_classes=" << s.num_classes << " ghost_ratio=" << s.ghost_ratio << " expansion=" << s.expansion
     << " channel_reduction=" << s.channel_reduction << " spatial_kernel=" << s.spatial_kernel
     << " channel_attention=" << bool_text(s.channel_attention) << " spatial_attention=" << bool_text(s.spatial_attention)
     << " depth_attention=" << bool_text(s.depth_attention) << " deep_supervision=" << bool_text(s.deep_supervision)
     << " merge_mode=" << to_string(s.merge_mode);
  return os.str();
}

NetworkSpec parse_network_spec(const std::string& text) {
  NetworkSpec s;
  std::istringstream is(text);
  std::string token;
  while (is >> token) {
    const auto [key, value] = split_key_value(token);
    if (key == "depth") s.depth = parse_index(key, value);
    else if (key == "base_channels") s.base_channels = parse_index(key, value);
    else if (key == "in_channels") s.in_channels = parse_index(key, value);
    else if (key == "num_classes") s.num_classes = parse_index(key, value);
    else if (key == "ghost_ratio") s.ghost_ratio = parse_index(key, value);
    else if (key == "expansion") s.expansion = parse_index(key, value);
    else if (key == "channel_reduction") s.channel_reduction = parse_index(key, value);
    else if (key == "spatial_kernel") s.spatial_kernel = parse_index(key, value);
    else if (key == "channel_attention") s.channel_attention = parse_bool(key, value);
    else if (key == "spatial_attention") s.spatial_attention = parse_bool(key, value);
    else if (key == "depth_attention") s.depth_attention = parse_bool(key, value);
    else if (key == "deep_supervision") s.deep_supervision = parse_bool(key, value);
    else if (key == "merge_mode") s.merge_mode = merge_mode_from_string(value);
    else throw DataError("checkpoint: unknown spec key '" + key + "'");
  }
  s.validate();
  return s;
}

Checkpoint make_checkpoint(const Network<float>& net, const std::map<std::string, std::string>& meta) {
  Checkpoint c;
  c.spec = net.spec();
  c.seed = net.seed();
  c.meta = meta;
  for (const auto& e : net.parameters().entries()) {
    const auto& v = e.var.value();
    c.entries.push_back({e.path, v.shape(), e.trainable, std::vector<float>(v.data(), v.data() + v.size())});
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  std::ofstream weights(dir / "weights.bin", std::ios::binary);
  if (!manifest || !weights) throw DataError("cannot write checkpoint to " + dir.string());
  manifest << kHeader << "\n";
  manifest << "spec " << format_network_spec(checkpoint.spec) << "\n";
  manifest << "seed " << checkpoint.seed << "\n";
  for (const auto& [key, value] : checkpoint.meta) {
    if (key.find_first_of(" =\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw UsageError("checkpoint meta '" + key + "' must be a single-line key without spaces or '='");
    }
    manifest << "meta " << key << "=" << value << "\n";
  }
  manifest << "entries " << checkpoint.entries.size() << "\n";
  std::size_t offset = 0;
  std::vector<unsigned char> bytes;
  for (const auto& e : checkpoint.entries) {
    if (static_cast<Index>(e.values.size()) != e.shape.size()) {
      throw UsageError("checkpoint entry " + e.path + " holds " + std::to_string(e.values.size()) +
                       " values for shape " + e.shape.str());
    }
    manifest << e.path << " dtype=float32 shape=" << e.shape.str() << " offset=" << offset
             << " length=" << e.values.size() << " trainable=" << bool_text(e.trainable) << "\n";
    bytes.resize(e.values.size() * 4);
    for (std::size_t i = 0; i < e.values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(e.values[i]);
      for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    weights.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    offset += e.values.size();
  }
  if (!manifest || !weights) throw DataError("failed writing checkpoint to " + dir.string());
}

void save_checkpoint(const std::filesystem::path& dir, const Network<float>& net,
                     const std::map<std::string, std::string>& meta) {
  write_checkpoint(dir, make_checkpoint(net, meta));
}

Checkpoint read_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw DataError("checkpoint manifest not found: " + (dir / "manifest.txt").string());
  std::ifstream weights(dir / "weights.bin", std::ios::binary);
  if (!weights) throw DataError("checkpoint weights not found: " + (dir / "weights.bin").string());
  const std::vector<unsigned char> blob((std::istreambuf_iterator<char>(weights)), std::istreambuf_iterator<char>());

  Checkpoint c;
  std::string line;
  if (!std::getline(manifest, line) || line != kHeader) {
    throw DataError("not a checkpoint manifest: " + (dir / "manifest.txt").string());
  }
  std::size_t expected_entries = 0;
  bool have_spec = false;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string head;
    is >> head;
    std::string rest;
    std::getline(is, rest);
    if (!rest.empty() && rest.front() == ' ') rest.erase(0, 1);
    if (head == "spec") {
      try {
        c.spec = parse_network_spec(rest);
      } catch (const ConfigurationError& e) {
        throw DataError(std::string("checkpoint spec invalid: ") + e.what());
      }
      have_spec = true;
    } else if (head == "seed") {
      c.seed = static_cast<std::uint64_t>(std::stoull(rest));
    } else if (head == "meta") {
      const auto [key, value] = split_key_value(rest);
      c.meta[key] = value;
    } else if (head == "entries") {
      expected_entries = static_cast<std::size_t>(parse_index("entries", rest));
    } else {
      CheckpointEntry e;
      e.path = head;
      std::size_t offset = 0, length = 0;
      std::istringstream fields(rest);
      std::string token;
      while (fields >> token) {
        const auto [key, value] = split_key_value(token);
        if (key == "dtype" && value != "float32") throw DataError("checkpoint: unsupported dtype " + value);
        if (key == "shape") e.shape = parse_shape(value);
        if (key == "offset") offset = static_cast<std::size_t>(parse_index(key, value));
        if (key == "length") length = static_cast<std::size_t>(parse_index(key, value));
        if (key == "trainable") e.trainable = parse_bool(key, value);
      }
      if (static_cast<Index>(length) != e.shape.size()) {
        throw DataError("checkpoint: entry " + e.path + " length does not match shape " + e.shape.str());
      }
      if ((offset + length) * 4 > blob.size()) throw DataError("checkpoint: weights.bin is truncated at " + e.path);
      e.values.resize(length);
      for (std::size_t i = 0; i < length; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[4 * (offset + i) + b]) << (8 * b);
        e.values[i] = std::bit_cast<float>(bits);
      }
      c.entries.push_back(std::move(e));
    }
  }
  if (!have_spec) throw DataError("checkpoint manifest lacks a spec line");
  if (c.entries.size() != expected_entries) {
    throw DataError("checkpoint lists " + std::to_string(c.entries.size()) + " entries, header says " +
                    std::to_string(expected_entries));
  }
  return c;
}

void apply_checkpoint(const Checkpoint& checkpoint, Network<float>& net) {
  const auto& entries = net.parameters().entries();
  if (entries.size() != checkpoint.entries.size()) {
    throw DataError("checkpoint holds " + std::to_string(checkpoint.entries.size()) + " arrays, network expects " +
                    std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& src = checkpoint.entries[i];
    if (src.path != entries[i].path || !(src.shape == entries[i].var.shape())) {
      throw DataError("checkpoint entry " + src.path + " " + src.shape.str() + " does not match " + entries[i].path +
                      " " + entries[i].var.shape().str());
    }
    Tensor<float>::Vector v = Eigen::Map<const Tensor<float>::Vector>(src.values.data(), static_cast<Index>(src.values.size()));
    entries[i].var.mutable_value() = Tensor<float>(src.shape, std::move(v));
  }
}

Network<float> load_network(const std::filesystem::path& dir) {
  const Checkpoint c = read_checkpoint(dir);
  Network<float> net(c.spec, c.seed);
  apply_checkpoint(c, net);
  return net;
}

}  // namespace agunet
