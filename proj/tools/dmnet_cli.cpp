#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmnet/config.hpp"
#include "dmnet/degrade.hpp"
#include "dmnet/image_io.hpp"
#include "dmnet/metrics.hpp"
#include "dmnet/model.hpp"
#include "dmnet/train.hpp"
#include "dmnet/weight_file.hpp"

namespace fs = std::filesystem;
using namespace dmnet;

namespace {

// Failure carrying the machine-parsable kind printed as "error: <kind>: <message>".
struct CliError : std::runtime_error {
  std::string kind;
  CliError(std::string k, const std::string& msg) : std::runtime_error(msg), kind(std::move(k)) {}
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// Recovers the generator layout from the tensors present in a weight file.
ModelSpec spec_from_weights(const ParamStore<float>& weights, Mode mode) {
  ModelSpec spec = mode == Mode::SuperResolution ? ModelSpec::super_resolution()
                                                 : ModelSpec::detail_enhance();
  if (!weights.contains("head.weight")) {
    throw CliError("weights", "missing entry head.weight");
  }
  const Shape& head = weights.get("head.weight").shape();
  spec.channels = head.n();
  spec.kernel = head.h();
  int blocks = 0;
  while (weights.contains("blocks." + std::to_string(blocks) + ".fuse.weight")) ++blocks;
  spec.num_blocks = blocks;
  bool spade = false;
  for (const auto& [name, t] : weights.entries()) {
    if (name.rfind("spade.", 0) == 0) spade = true;
  }
  spec.use_spade = spade;
  return spec;
}

ModelSpec resolve_spec(const ParamStore<float>& weights, Mode mode,
                       const std::optional<fs::path>& config_path) {
  if (config_path) {
    TrainConfig cfg = config_from_text([&] {
      std::ifstream in(*config_path);
      if (!in) throw CliError("io", "cannot read " + config_path->string());
      std::stringstream ss;
      ss << in.rdbuf();
      return ss.str();
    }());
    if (cfg.model.mode != mode) throw CliError("usage", "--mode disagrees with config model.mode");
    return cfg.model;
  }
  return spec_from_weights(weights, mode);
}

int cmd_train(const fs::path& config_path, const std::optional<fs::path>& resume) {
  TrainConfig config = load_config(config_path);
  RunOptions options;
  options.resume_state = resume;
  options.warn = warn;
  run_training(config, options);
  std::cout << "weights: " << (config.out_dir / "weights_final.dmbn").string() << "\n";
  return 0;
}

int cmd_infer(const std::string& mode_text, const fs::path& weights_path, const fs::path& in,
              const fs::path& out, const std::optional<fs::path>& config_path) {
  const Mode mode = parse_mode(mode_text);
  ParamStore<float> raw = load_weights(weights_path);
  const ModelSpec spec = resolve_spec(raw, mode, config_path);
  check_compatible(build_generator(spec), raw);
  const Tensorf img = load_png(in);
  save_png(out, infer(raw, spec, img));
  return 0;
}

int cmd_degrade(const std::string& mode_text, std::uint64_t seed, const fs::path& in,
                const fs::path& out) {
  DegradationSpec spec;
  spec.mode = parse_degrade_mode(mode_text);
  spec.seed = seed;
  spec.validate();
  Rng rng = sample_rng(seed, 0, 0);
  const TrainingPair pair = make_pair(load_png(in), spec, rng);
  save_png(out, pair.input);
  return 0;
}

std::map<std::string, fs::path> png_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CliError("io", "not a directory: " + dir.string());
  std::map<std::string, fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files[e.path().filename().string()] = e.path();
    }
  }
  return files;
}

int cmd_eval(const fs::path& inputs_dir, const fs::path& refs_dir) {
  const auto inputs = png_files(inputs_dir);
  const auto refs = png_files(refs_dir);
  MetricReport report;
  for (const auto& [name, path] : inputs) {
    auto it = refs.find(name);
    if (it == refs.end()) {
      warn("unpaired input skipped: " + name);
      continue;
    }
    const Tensorf a = load_png(path);
    const Tensorf b = load_png(it->second);
    if (a.shape() != b.shape()) {
      warn("size mismatch skipped: " + name + " " + a.shape().str() + " vs " + b.shape().str());
      continue;
    }
    report.add(name, psnr(a, b), ssim(a, b));
  }
  for (const auto& [name, path] : refs) {
    if (!inputs.count(name)) warn("unpaired reference skipped: " + name);
  }
  if (report.per_image.empty()) throw CliError("io", "no paired images");
  std::cout << report.table();
  return 0;
}

int cmd_features(const fs::path& weights_path, const fs::path& in, const fs::path& out_dir) {
  ParamStore<float> raw = load_weights(weights_path);
  const Mode mode = raw.contains("sfe.down.weight") ? Mode::DetailEnhance : Mode::SuperResolution;
  const ModelSpec spec = spec_from_weights(raw, mode);
  check_compatible(build_generator(spec), raw);
  Tape<float> tape(false);
  const Tensorf feat = sfe_forward(tape, raw, spec, load_png(in));
  fs::create_directories(out_dir);
  const Shape& s = feat.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  for (int c = 0; c < s.c(); ++c) {
    const float* p = feat.ptr() + plane * c;
    const auto [lo, hi] = std::minmax_element(p, p + plane);
    const float range = *hi - *lo;
    std::vector<float> norm(plane);
    for (std::size_t i = 0; i < plane; ++i) norm[i] = range > 0 ? (p[i] - *lo) / range : 0.0f;
    char name[32];
    std::snprintf(name, sizeof name, "feature_%02d.png", c);
    save_gray_png(out_dir / name, norm, s.h(), s.w());
  }
  std::cout << s.c() << " feature maps written to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-modulation image enhancement: train, infer, degrade, eval, features"};
  app.require_subcommand(1);

  std::string config, resume, mode, weights, in, out, inputs, refs, out_dir;
  std::uint64_t seed = 0;

  auto* train = app.add_subcommand("train", "Train a generator from a config file");
  train->add_option("--config", config, "key=value config file")->required();
  train->add_option("--resume", resume, "state_<it>.txt checkpoint to resume from");

  auto* inf = app.add_subcommand("infer", "Run a trained generator on one image");
  inf->add_option("--mode", mode)->required()->check(CLI::IsMember({"sr", "enhance"}));
  inf->add_option("--weights", weights)->required();
  inf->add_option("--in", in)->required();
  inf->add_option("--out", out)->required();
  inf->add_option("--config", config, "config describing the model (else inferred from weights)");

  auto* deg = app.add_subcommand("degrade", "Apply the training degradation to one image");
  deg->add_option("--mode", mode)->required()->check(CLI::IsMember({"sr", "enhance", "oldphoto"}));
  deg->add_option("--seed", seed);
  deg->add_option("--in", in)->required();
  deg->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "Mean PSNR/SSIM over filename-paired images");
  ev->add_option("--inputs", inputs)->required();
  ev->add_option("--refs", refs)->required();

  auto* feat = app.add_subcommand("features", "Dump the AI feature channels as grayscale images");
  feat->add_option("--weights", weights)->required();
  feat->add_option("--in", in)->required();
  feat->add_option("--out-dir", out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  auto opt_path = [](const std::string& s) -> std::optional<fs::path> {
    if (s.empty()) return std::nullopt;
    return fs::path(s);
  };

  try {
    if (*train) return cmd_train(config, opt_path(resume));
    if (*inf) return cmd_infer(mode, weights, in, out, opt_path(config));
    if (*deg) return cmd_degrade(mode, seed, in, out);
    if (*ev) return cmd_eval(inputs, refs);
    if (*feat) return cmd_features(weights, in, out_dir);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.kind << ": " << one_line(e.what()) << "\n";
  } catch (const WeightFileError& e) {
    std::cerr << "error: weights: " << one_line(e.what()) << "\n";
  } catch (const ConfigError& e) {
    std::cerr << "error: config: " << one_line(e.what()) << "\n";
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: diverged: " << one_line(e.what()) << "\n";
  } catch (const ShapeError& e) {
    std::cerr << "error: shape: " << one_line(e.what()) << "\n";
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: invalid: " << one_line(e.what()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << one_line(e.what()) << "\n";
  }
  return 1;
}
