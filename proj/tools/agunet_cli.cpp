// agunet: train, evaluate and inspect nested ghost/attention segmentation networks.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data error,
// 4 numerical failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "agunet/checkpoint.hpp"
#include "agunet/config.hpp"
#include "agunet/image_io.hpp"
#include "agunet/report.hpp"
#include "agunet/training.hpp"

namespace fs = std::filesystem;
using namespace agunet;

namespace {

constexpr int kConfigError = 2;
constexpr int kDataError = 3;
constexpr int kNumericalError = 4;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigurationError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string format_report(const ParameterReport& r) {
  std::ostringstream os;
  os << "module,parameters\n";
  for (const auto& [name, count] : r.per_module) os << name << "," << count << "\n";
  os << "total," << r.total << "\n";
  os << "dense_twin_total," << r.dense_twin_total << "\n";
  os << "dense_to_ghost_ratio," << r.ratio << "\n";
  return os.str();
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int cmd_train(const TrainArgs& args) {
  RunConfig config = load_run_config(args.config);
  if (args.seed) config.train.seed = *args.seed;
  const fs::path out = args.out;
  fs::create_directories(out);
  write_resolved_config(config, out / "config.resolved.json");

  std::vector<std::string> warnings;
  const auto samples = load_run_samples(config, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  const DatasetSplit parts = split(samples, config.split, config.split_seed);
  std::cerr << "samples: train " << parts.train.size() << ", val " << parts.val.size() << ", test "
            << parts.test.size() << "\n";

  Network<float> net(config.network, config.train.seed);
  const ParameterReport report = parameter_report(net);
  write_text(out / "parameters.csv", format_report(report));
  std::cerr << "parameters: " << report.total << " (dense twin " << report.dense_twin_total << ")\n";

  TrainOptions options;
  options.output_dir = out;
  const auto start = std::chrono::steady_clock::now();
  options.on_epoch = [&](const EpochRecord& r) {
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "epoch %3ld  lr %.3e  train_loss %.5f  val_loss %.5f  val_dice %.4f  [%.1fs]\n",
                 static_cast<long>(r.epoch), r.learning_rate, r.train_loss, r.val_loss, r.val_dice, seconds);
  };
  const TrainHistory history = train(net, parts.train, parts.val, config.train, options);
  std::cerr << history.stop_reason << "; best epoch " << history.best_epoch << ", val dice "
            << history.best_val_dice << "\n";

  if (!parts.test.empty()) {
    const auto result = evaluate_network(net, parts.test, config.train.loss, config.train.batch_size);
    const std::string table = format_metrics_table(result.metrics, "AttentionGhostUNet++",
                                                   default_class_names(static_cast<int>(config.network.num_classes)));
    write_text(out / "test_metrics.csv", table);
    std::cout << table;
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  int classes = 0;
  bool oracle = false;
  std::string out;
  std::string method = "AttentionGhostUNet++";
  long height = 0;
  long width = 0;
};

int cmd_eval(const EvalArgs& args) {
  std::optional<Network<float>> net;
  int classes = args.classes;
  if (!args.oracle) {
    if (args.checkpoint.empty()) throw UsageError("eval needs --checkpoint unless --oracle is given");
    net.emplace(load_network(args.checkpoint));
    const int spec_classes = static_cast<int>(net->spec().num_classes);
    if (classes != 0 && classes != spec_classes) {
      throw ConfigurationError("--classes " + std::to_string(classes) + " does not match the checkpoint's " +
                               std::to_string(spec_classes) + " classes");
    }
    classes = spec_classes;
  }
  if (classes == 0) classes = 4;
  DatasetLayout layout;
  layout.num_classes = classes;
  layout.preprocess = {args.height, args.width, false, 0.75};
  const LoadResult loaded = load_dataset(args.data, layout);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  if (!loaded.errors.empty()) {
    for (const auto& e : loaded.errors) std::cerr << "error: " << e << "\n";
    throw DataError(std::to_string(loaded.errors.size()) + " dataset error(s) under " + args.data);
  }
  if (loaded.samples.empty()) throw DataError("no image/mask pairs found under " + args.data);

  std::vector<LabelMask> truth, predictions;
  for (const auto& s : loaded.samples) truth.push_back(s.mask);
  if (args.oracle) {
    predictions = truth;
  } else {
    std::vector<Image> images;
    for (const auto& s : loaded.samples) images.push_back(s.image);
    predictions = predict(*net, images);
  }
  const MetricsRecord record = evaluate(predictions, truth, classes);
  const std::string table = format_metrics_table(record, args.oracle ? "oracle" : args.method,
                                                 default_class_names(classes));
  std::cout << table;
  if (!args.out.empty()) write_text(args.out, table);
  return 0;
}

/// Images under `input`: a single PNG, a dataset root with images/, or a directory of PNGs.
std::vector<std::pair<std::string, fs::path>> list_images(const fs::path& input) {
  std::vector<std::pair<std::string, fs::path>> out;
  if (fs::is_regular_file(input)) {
    out.emplace_back(input.stem().string(), input);
    return out;
  }
  fs::path dir = input;
  if (fs::is_directory(input / "images")) dir = input / "images";
  if (!fs::is_directory(dir)) throw DataError("input not found: " + input.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.emplace_back(e.path().stem().string(), e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Image load_image(const fs::path& path) {
  Image img = read_png_gray(path).pixels.cast<float>();
  normalize_minmax(img);
  return img;
}

int cmd_predict(const std::string& checkpoint, const std::string& input, const std::string& out) {
  const Network<float> net = load_network(checkpoint);
  const auto files = list_images(input);
  if (files.empty()) throw DataError("no PNG images under " + input);
  std::vector<Image> images;
  for (const auto& [stem, path] : files) images.push_back(load_image(path));
  const auto masks = predict(net, images);
  fs::create_directories(out);
  for (std::size_t i = 0; i < files.size(); ++i) {
    write_png_gray(fs::path(out) / (files[i].first + ".png"), masks[i].cast<std::uint16_t>(), 8);
  }
  std::cerr << "wrote " << files.size() << " mask(s) to " << out << "\n";
  return 0;
}

int cmd_report(const std::string& checkpoint, const std::string& input, const std::string& gt,
               const std::string& outdir) {
  const Network<float> net = load_network(checkpoint);
  const auto images = list_images(input);
  std::map<std::string, fs::path> masks;
  for (const auto& [stem, path] : list_images(gt)) masks.emplace(stem, path);

  std::vector<std::string> errors;
  std::vector<std::pair<std::string, fs::path>> paired;
  for (const auto& [stem, path] : images) {
    if (masks.count(stem)) {
      paired.emplace_back(stem, path);
    } else {
      errors.push_back("no ground truth for " + path.string());
    }
  }
  for (const auto& [stem, path] : masks) {
    if (std::none_of(images.begin(), images.end(), [&](const auto& p) { return p.first == stem; })) {
      errors.push_back("no image for ground truth " + path.string());
    }
  }

  fs::create_directories(outdir);
  std::vector<Image> batch;
  for (const auto& [stem, path] : paired) batch.push_back(load_image(path));
  const auto predictions = predict(net, batch);
  for (std::size_t i = 0; i < paired.size(); ++i) {
    const LabelMask truth = read_png_gray(masks.at(paired[i].first)).pixels.cast<std::int32_t>();
    write_png_rgb(fs::path(outdir) / (paired[i].first + "_panels.png"),
                  render_panels(batch[i], truth, predictions[i]));
  }
  write_text(fs::path(outdir) / "legend.txt",
             panel_legend(default_class_names(static_cast<int>(net.spec().num_classes))));
  std::cerr << "wrote " << paired.size() << " panel image(s) to " << outdir << "\n";
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "error: " << e << "\n";
    throw DataError(std::to_string(errors.size()) + " unmatched file(s)");
  }
  return 0;
}

int cmd_phantom(const std::string& spec_path, std::size_t n, std::optional<std::uint64_t> seed,
                const std::string& out) {
  PhantomSpec spec = spec_path.empty() ? PhantomSpec{} : parse_phantom_spec(read_text(spec_path), spec_path);
  if (seed) spec.seed = *seed;
  spec.validate();
  write_dataset(generate_phantoms(spec, n), out);
  write_text(fs::path(out) / "phantom.resolved.json", phantom_spec_text(spec));
  std::cerr << "wrote " << n << " phantom pair(s) to " << out << "\n";
  return 0;
}

int cmd_params(const std::string& config_path) {
  const RunConfig config = load_run_config(config_path);
  const Network<float> net(config.network, config.train.seed);
  std::cout << format_report(parameter_report(net));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention GhostUNet++ segmentation: training, evaluation and reporting"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a network from a JSON run config");
  train_cmd->add_option("--config", train_args.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_args.seed, "Override train.seed");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Per-class Dice/Jaccard table on a dataset");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint directory");
  eval_cmd->add_option("--data", eval_args.data, "Dataset root with images/ and masks/")->required();
  eval_cmd->add_option("--classes", eval_args.classes, "Number of classes including background");
  eval_cmd->add_flag("--oracle", eval_args.oracle, "Score the ground truth against itself");
  eval_cmd->add_option("--out", eval_args.out, "Also write the table to this file");
  eval_cmd->add_option("--method", eval_args.method, "Method name in the table");
  eval_cmd->add_option("--height", eval_args.height, "Resize height (0 keeps the stored size)");
  eval_cmd->add_option("--width", eval_args.width, "Resize width (0 keeps the stored size)");

  std::string predict_checkpoint, predict_input, predict_out;
  auto* predict_cmd = app.add_subcommand("predict", "Write predicted label masks");
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "Checkpoint directory")->required();
  predict_cmd->add_option("--input", predict_input, "PNG file, image directory or dataset root")->required();
  predict_cmd->add_option("--out", predict_out, "Output directory for masks")->required();

  std::string report_checkpoint, report_input, report_gt, report_outdir;
  auto* report_cmd = app.add_subcommand("report", "Render five-panel comparison images");
  report_cmd->add_option("--checkpoint", report_checkpoint, "Checkpoint directory")->required();
  report_cmd->add_option("--input", report_input, "Image directory or dataset root")->required();
  report_cmd->add_option("--gt", report_gt, "Ground-truth mask directory")->required();
  report_cmd->add_option("--outdir", report_outdir, "Output directory")->required();

  std::string phantom_spec, phantom_out;
  std::size_t phantom_n = 200;
  std::optional<std::uint64_t> phantom_seed;
  auto* phantom_cmd = app.add_subcommand("phantom", "Materialise synthetic phantoms as a dataset");
  phantom_cmd->add_option("--spec", phantom_spec, "Phantom spec (JSON)")->check(CLI::ExistingFile);
  phantom_cmd->add_option("--n", phantom_n, "Number of samples")->check(CLI::PositiveNumber);
  phantom_cmd->add_option("--seed", phantom_seed, "Override the spec seed");
  phantom_cmd->add_option("--out", phantom_out, "Output dataset root")->required();

  std::string params_config;
  auto* params_cmd = app.add_subcommand("params", "Parameter counts of the configured network and its dense twin");
  params_cmd->add_option("--config", params_config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*predict_cmd) return cmd_predict(predict_checkpoint, predict_input, predict_out);
    if (*report_cmd) return cmd_report(report_checkpoint, report_input, report_gt, report_outdir);
    if (*phantom_cmd) return cmd_phantom(phantom_spec, phantom_n, phantom_seed, phantom_out);
    if (*params_cmd) return cmd_params(params_config);
  } catch (const ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return 0;
}
