#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "agunet/data.hpp"
#include "agunet/image_io.hpp"
#include "agunet/training.hpp"
#include "temp_dir.hpp"

using namespace agunet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr combined
};

Run run(const std::string& args) {
  const std::string command = std::string(AGUNET_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buffer;
  std::size_t n;
  while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0) r.output.append(buffer.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    n += name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  }
  return n;
}

const char* kTinyConfig = R"({
  "network": {"depth": 2, "base_channels": 4, "num_classes": 4, "channel_reduction": 2, "spatial_kernel": 3},
  "train": {"learning_rate": 0.01, "batch_size": 4, "max_epochs": 3, "patience": 3, "seed": 1},
  "data": {"source": "phantom", "phantom_count": 20},
  "phantom": {"size": 16, "seed": 2},
  "split": {"seed": 3}
})";

}  // namespace

TEST_CASE("phantom command writes a loadable, reproducible dataset") {
  agunet::testing::TempDir dir("cli_phantom");
  write_file(dir.path / "spec.json", R"({"size": 32})");
  const std::string spec = (dir.path / "spec.json").string();
  const Run a = run("phantom --spec " + spec + " --n 5 --seed 4 --out " + (dir.path / "a").string());
  REQUIRE(a.code == 0);
  REQUIRE(run("phantom --spec " + spec + " --n 5 --seed 4 --out " + (dir.path / "b").string()).code == 0);
  REQUIRE(run("phantom --spec " + spec + " --n 5 --seed 5 --out " + (dir.path / "c").string()).code == 0);
  CHECK(count_files(dir.path / "a" / "images", ".png") == 5);
  CHECK(count_files(dir.path / "a" / "masks", ".png") == 5);
  const std::string first = "images/phantom-0000.png";
  CHECK(read_file(dir.path / "a" / first) == read_file(dir.path / "b" / first));
  CHECK(read_file(dir.path / "a" / first) != read_file(dir.path / "c" / first));
  CHECK(read_file(dir.path / "a" / "phantom.resolved.json").find("\"seed\": 4") != std::string::npos);

  const LoadResult loaded = load_dataset(dir.path / "a", DatasetLayout{});
  CHECK(loaded.errors.empty());
  CHECK(loaded.samples.size() == 5);
  CHECK(run("phantom --n 0 --out " + (dir.path / "d").string()).code == 2);
}

TEST_CASE("oracle evaluation scores 1 everywhere and class mismatches are rejected") {
  agunet::testing::TempDir dir("cli_eval");
  const std::string data = (dir.path / "data").string();
  REQUIRE(run("phantom --n 3 --out " + data).code == 0);
  const Run oracle = run("eval --oracle --data " + data + " --out " + (dir.path / "table.csv").string());
  REQUIRE(oracle.code == 0);
  CHECK(oracle.output ==
        "Method,Metric,VAT,SAT,liver\noracle,Dice coefficient,1.0000,1.0000,1.0000\n"
        "oracle,Jaccard index,1.0000,1.0000,1.0000\n");
  CHECK(read_file(dir.path / "table.csv") == oracle.output);

  write_file(dir.path / "tiny.json", kTinyConfig);
  REQUIRE(run("train --config " + (dir.path / "tiny.json").string() + " --out " + (dir.path / "run").string()).code == 0);
  const std::string ckpt = (dir.path / "run" / "checkpoint").string();
  const Run mismatch = run("eval --checkpoint " + ckpt + " --classes 3 --data " + data);
  CHECK(mismatch.code == 2);
  CHECK(mismatch.output.find("--classes 3") != std::string::npos);
  // The tiny network was trained on 16x16 phantoms; 64x64 inputs are accepted at depth 2.
  CHECK(run("eval --checkpoint " + ckpt + " --data " + data).code == 0);
}

TEST_CASE("train writes artefacts and is reproducible per seed") {
  agunet::testing::TempDir dir("cli_train");
  write_file(dir.path / "tiny.json", kTinyConfig);
  const std::string config = (dir.path / "tiny.json").string();
  const Run a = run("train --config " + config + " --seed 9 --out " + (dir.path / "a").string());
  REQUIRE(a.code == 0);
  CHECK(a.output.find("Method,Metric,VAT,SAT,liver") != std::string::npos);
  for (const char* name : {"config.resolved.json", "parameters.csv", "history.jsonl", "test_metrics.csv",
                           "checkpoint/manifest.txt", "checkpoint/weights.bin"}) {
    CHECK_MESSAGE(fs::exists(dir.path / "a" / name), name);
  }
  const TrainHistory h = read_history(dir.path / "a" / "history.jsonl");
  CHECK(!h.epochs.empty());
  CHECK(h.epochs.size() <= 3);
  CHECK(read_file(dir.path / "a" / "config.resolved.json").find("\"seed\": 9") != std::string::npos);
  REQUIRE(run("train --config " + config + " --seed 9 --out " + (dir.path / "b").string()).code == 0);
  CHECK(read_file(dir.path / "a" / "history.jsonl") == read_file(dir.path / "b" / "history.jsonl"));
  REQUIRE(run("train --config " + config + " --seed 10 --out " + (dir.path / "c").string()).code == 0);
  CHECK(read_file(dir.path / "a" / "history.jsonl") != read_file(dir.path / "c" / "history.jsonl"));
}

TEST_CASE("predict and report cover every input") {
  agunet::testing::TempDir dir("cli_report");
  write_file(dir.path / "tiny.json", kTinyConfig);
  REQUIRE(run("train --config " + (dir.path / "tiny.json").string() + " --out " + (dir.path / "run").string()).code == 0);
  const std::string ckpt = (dir.path / "run" / "checkpoint").string();
  const fs::path data = dir.path / "data";
  REQUIRE(run("phantom --n 4 --out " + data.string()).code == 0);

  REQUIRE(run("predict --checkpoint " + ckpt + " --input " + data.string() + " --out " + (dir.path / "pred").string())
              .code == 0);
  CHECK(count_files(dir.path / "pred", ".png") == 4);
  const GrayImage mask = read_png_gray(dir.path / "pred" / "phantom-0002.png");
  CHECK(mask.bit_depth == 8);
  CHECK(mask.pixels.rows() == 64);
  CHECK(mask.pixels.maxCoeff() <= 3);

  const fs::path out = dir.path / "panels";
  REQUIRE(run("report --checkpoint " + ckpt + " --input " + data.string() + " --gt " + (data / "masks").string() +
              " --outdir " + out.string())
              .code == 0);
  CHECK(count_files(out, "_panels.png") == 4);
  CHECK(fs::exists(out / "legend.txt"));
  const RgbImage panels = read_png_rgb(out / "phantom-0000_panels.png");
  CHECK(panels.height == 64);
  CHECK(panels.width == 5 * 64);

  fs::remove(data / "masks" / "phantom-0003.png");
  const Run partial = run("report --checkpoint " + ckpt + " --input " + data.string() + " --gt " +
                          (data / "masks").string() + " --outdir " + (dir.path / "partial").string());
  CHECK(partial.code == 3);
  CHECK(partial.output.find("phantom-0003.png") != std::string::npos);
  CHECK(count_files(dir.path / "partial", "_panels.png") == 3);
}

TEST_CASE("error exit codes") {
  agunet::testing::TempDir dir("cli_errors");
  fs::create_directories(dir.path / "broken" / "images");
  REQUIRE(run("phantom --n 1 --out " + (dir.path / "src").string()).code == 0);
  fs::copy_file(dir.path / "src" / "images" / "phantom-0000.png", dir.path / "broken" / "images" / "a.png");
  const Run missing = run("eval --oracle --data " + (dir.path / "broken").string());
  CHECK(missing.code == 3);
  CHECK(missing.output.find((dir.path / "broken" / "masks").string()) != std::string::npos);

  write_file(dir.path / "bad.json", R"({"network": {"num_classes": 4}, "train": {"lerning_rate": 0.1}})");
  const Run bad = run("train --config " + (dir.path / "bad.json").string() + " --out " + (dir.path / "x").string());
  CHECK(bad.code == 2);
  CHECK(bad.output.find("train.lerning_rate") != std::string::npos);

  CHECK(run("").code == 2);
  CHECK(run("train --out x").code == 2);
  CHECK(run("eval --data " + (dir.path / "src").string()).code == 2);  // no checkpoint
  CHECK(run("predict --checkpoint " + (dir.path / "none").string() + " --input x --out y").code == 3);
}
