#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "agunet/checkpoint.hpp"
#include "gradcheck.hpp"
#include "temp_dir.hpp"

using namespace agunet;
namespace fs = std::filesystem;

namespace {

NetworkSpec spec_under_test() {
  NetworkSpec s;
  s.depth = 3;
  s.base_channels = 4;
  s.num_classes = 3;
  s.merge_mode = MergeMode::Sum;
  s.spatial_attention = false;
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("spec text round trip") {
  const NetworkSpec s = spec_under_test();
  const NetworkSpec r = parse_network_spec(format_network_spec(s));
  CHECK(format_network_spec(r) == format_network_spec(s));
  CHECK(r.merge_mode == MergeMode::Sum);
  CHECK_FALSE(r.spatial_attention);
  CHECK_THROWS_AS(parse_network_spec("depth=3 colour=red"), DataError);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  agunet::testing::TempDir dir("ckpt");
  Network<float> net(spec_under_test(), 17);
  Rng rng(1);
  agunet::testing::randomize(net.parameters(), rng, 0.3);
  for (const auto& e : net.parameters().entries()) {
    if (!e.trainable) e.var.mutable_value().flat().array() = e.var.value().flat().array().abs() * 0.5f + 0.75f;
  }
  save_checkpoint(dir.path / "a", net, {{"best_epoch", "7"}, {"note", "value with spaces"}});
  const Network<float> loaded = load_network(dir.path / "a");
  CHECK(loaded.seed() == 17);
  CHECK(format_network_spec(loaded.spec()) == format_network_spec(net.spec()));
  const auto& a = net.parameters().entries();
  const auto& b = loaded.parameters().entries();
  REQUIRE(a.size() == b.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    identical = identical && a[i].path == b[i].path && a[i].trainable == b[i].trainable &&
                std::memcmp(a[i].var.value().data(), b[i].var.value().data(), sizeof(float) * a[i].var.value().size()) == 0;
  }
  CHECK(identical);

  save_checkpoint(dir.path / "b", loaded, read_checkpoint(dir.path / "a").meta);
  CHECK(read_file(dir.path / "a" / "weights.bin") == read_file(dir.path / "b" / "weights.bin"));
  CHECK(read_file(dir.path / "a" / "manifest.txt") == read_file(dir.path / "b" / "manifest.txt"));
  CHECK(read_checkpoint(dir.path / "b").meta.at("note") == "value with spaces");

  const Tensor<float> x = agunet::testing::random_tensor<float>(Shape{2, 1, 8, 8}, rng);
  const auto ya = net.forward(Var<float>(x), false).fused.value().flat();
  const auto yb = loaded.forward(Var<float>(x), false).fused.value().flat();
  CHECK((ya.array() == yb.array()).all());
}

TEST_CASE("manifest layout") {
  agunet::testing::TempDir dir("manifest");
  Network<float> net(spec_under_test(), 3);
  save_checkpoint(dir.path, net);
  std::istringstream manifest(read_file(dir.path / "manifest.txt"));
  std::string line;
  std::getline(manifest, line);
  CHECK(line == "agunet-checkpoint 1");
  std::getline(manifest, line);
  CHECK(line.rfind("spec depth=3 base_channels=4", 0) == 0);
  std::getline(manifest, line);
  CHECK(line == "seed 3");
  std::getline(manifest, line);
  CHECK(line == "entries " + std::to_string(net.parameters().entries().size()));
  std::getline(manifest, line);
  const auto& first = net.parameters().entries().front();
  CHECK(line == first.path + " dtype=float32 shape=" + first.var.shape().str() + " offset=0 length=" +
                    std::to_string(first.var.value().size()) + " trainable=1");
  Index total = 0;
  for (const auto& e : net.parameters().entries()) total += e.var.value().size();
  CHECK(static_cast<Index>(fs::file_size(dir.path / "weights.bin")) == 4 * total);

  // Little-endian float32 payload.
  const std::string bytes = read_file(dir.path / "weights.bin");
  const float v = first.var.value().flat()[0];
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  for (int b = 0; b < 4; ++b) CHECK(static_cast<unsigned char>(bytes[b]) == ((bits >> (8 * b)) & 0xffu));
}

TEST_CASE("corrupt or mismatched checkpoints are data errors") {
  agunet::testing::TempDir dir("corrupt");
  Network<float> net(spec_under_test(), 3);
  save_checkpoint(dir.path, net);
  NetworkSpec other = spec_under_test();
  other.spatial_attention = true;
  Network<float> different(other, 3);
  CHECK_THROWS_AS(apply_checkpoint(read_checkpoint(dir.path), different), DataError);

  fs::resize_file(dir.path / "weights.bin", 16);
  CHECK_THROWS_AS(read_checkpoint(dir.path), DataError);
  CHECK_THROWS_AS(read_checkpoint(dir.path / "nowhere"), DataError);
  std::ofstream(dir.path / "manifest.txt") << "something else\n";
  CHECK_THROWS_AS(read_checkpoint(dir.path), DataError);
}
