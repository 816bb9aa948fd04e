#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "agunet/config.hpp"

using namespace agunet;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_run_config(text);
  } catch (const ConfigurationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config resolves to documented defaults") {
  const RunConfig c = parse_run_config("{\"network\": {\"num_classes\": 4}, \"phantom\": {\"size\": 64}}");
  CHECK(c.network.depth == 5);
  CHECK(c.network.base_channels == 32);
  CHECK(c.network.ghost_ratio == 2);
  CHECK(c.train.learning_rate == 1e-4);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.max_epochs == 300);
  CHECK(c.train.patience == 100);
  CHECK(c.train.augment_policy.max_rotation_degrees == 15.0);
  CHECK(c.split.train == 0.7);
  CHECK(c.data.source == "phantom");
}

TEST_CASE("unknown keys are rejected by name") {
  CHECK(error_of(R"({"network": {"num_classes": 4}, "train": {"lerning_rate": 0.1}})").find("'train.lerning_rate'") !=
        std::string::npos);
  CHECK(error_of(R"({"network": {"num_classes": 4}, "extras": {}})").find("'extras'") != std::string::npos);
  CHECK(error_of(R"({"network": {"num_classes": 4, "depht": 3}})").find("'network.depht'") != std::string::npos);
}

TEST_CASE("wrong types and invalid values are configuration errors") {
  CHECK(error_of(R"({"network": {"num_classes": 4}, "train": {"batch_size": "8"}})").find("train.batch_size") !=
        std::string::npos);
  CHECK(error_of(R"({"network": {"num_classes": 4}, "train": {"batch_size": 1.5}})").find("train.batch_size") !=
        std::string::npos);
  CHECK(error_of(R"({"network": {"num_classes": 4}, "train": {"seed": -1}})").find("train.seed") != std::string::npos);
  CHECK(!error_of(R"({"network": {"num_classes": 4}, "train": {"patience": 400}})").empty());
  CHECK(!error_of(R"({"network": {"num_classes": 3}})").empty());  // phantom has 4 classes
  CHECK(!error_of(R"({"network": {"num_classes": 4, "depth": 6}, "phantom": {"size": 48}})").empty());
  CHECK(!error_of(R"({"network": {"num_classes": 4}, "split": {"train": 0.9}})").empty());
  CHECK(!error_of(R"({"network": {"num_classes": 4}, "data": {"source": "directory"}})").empty());
  CHECK(!error_of(R"({"network": {"num_classes": 4, "merge_mode": "max"}})").empty());
  CHECK(!error_of("{not json").empty());
}

TEST_CASE("resolved config is a fixed point") {
  const RunConfig c = parse_run_config(R"({
    "network": {"depth": 3, "base_channels": 8, "num_classes": 4, "merge_mode": "sum"},
    "train": {"learning_rate": 0.01, "batch_size": 8, "max_epochs": 30, "patience": 30, "seed": 12345678901234},
    "augment": {"flip_probability": 0.25},
    "phantom": {"size": 64, "noise": 0.05},
    "split": {"seed": 4}
  })");
  const std::string text = resolved_config_text(c);
  CHECK(resolved_config_text(parse_run_config(text)) == text);
  const RunConfig r = parse_run_config(text);
  CHECK(r.network.merge_mode == MergeMode::Sum);
  CHECK(r.train.seed == 12345678901234ULL);
  CHECK(r.train.augment_policy.flip_probability == 0.25);
  CHECK(r.split_seed == 4);
}

TEST_CASE("phantom spec parsing") {
  const PhantomSpec p = parse_phantom_spec(R"({"size": 32, "liver": false, "seed": 9})");
  CHECK(p.size == 32);
  CHECK_FALSE(p.liver);
  CHECK(p.seed == 9);
  CHECK(parse_phantom_spec(phantom_spec_text(p)).size == 32);
  CHECK_THROWS_AS(parse_phantom_spec(R"({"sizes": 32})"), ConfigurationError);
}
