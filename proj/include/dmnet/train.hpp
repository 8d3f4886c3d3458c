#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmnet/degrade.hpp"
#include "dmnet/losses.hpp"
#include "dmnet/model.hpp"
#include "dmnet/optim.hpp"
#include "dmnet/param_store.hpp"

namespace dmnet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  ModelSpec model;
  DegradationSpec degradation;
  LossWeights losses;
  FidelityKind fidelity_kind = FidelityKind::Absolute;
  AdamHyper adam;
  Schedule schedule;
  int batch_size = 8;
  int patch_size = 96;  // HR crop side
  std::int64_t iterations = 2000;
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;
  std::filesystem::path out_dir = "run";
  std::int64_t checkpoint_every = 500;
  std::int64_t log_every = 10;
  ConvAlgo conv_algo = ConvAlgo::Im2col;
  std::uint64_t feature_seed = 1234;  // random perceptual extractor

  /// Desk-scale defaults for the mode (schedule rescaled to `iterations`).
  static TrainConfig defaults(Mode mode);
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
  bool adversarial() const { return losses.adversarial > 0; }
};

struct StepStats {
  std::int64_t iteration = 0;  // 1-based index of the completed step
  double lr = 0;
  double fidelity = 0;
  double ssim = 0;
  double perceptual = 0;
  double adversarial = 0;
  double critic = 0;
  double total = 0;  // weighted generator objective
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-sample RNG stream keyed on (seed, iteration, sample index).
Rng sample_rng(std::uint64_t seed, std::int64_t iteration, int sample);

/// Reads every decodable PNG in `dir` (sorted by file name); unreadable files
/// are reported through `warn` and skipped.
std::vector<Tensorf> load_image_folder(const std::filesystem::path& dir,
                                       const std::function<void(const std::string&)>& warn);

/// Generator (and, in adversarial mode, critic) optimisation loop.
class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<Tensorf> images);

  /// Runs one iteration and returns its losses. Throws TrainingDiverged on a
  /// non-finite loss (parameters are left untouched in that case).
  StepStats step();

  std::int64_t iteration() const { return iteration_; }
  const TrainConfig& config() const { return config_; }
  const ParamStore<float>& generator() const { return generator_; }
  const ParamStore<float>& critic() const { return critic_; }

  /// The batch used at `iteration` (0-based), as (input, target).
  TrainingPair batch(std::int64_t iteration) const;

  /// Writes weights_<it>.dmbn plus state_<it>.dmbn / state_<it>.txt.
  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Restores from a state_<it>.txt written by save_checkpoint.
  void load_checkpoint(const std::filesystem::path& state_txt);

 private:
  double critic_step(const TrainingPair& pair);

  TrainConfig config_;
  std::vector<Tensorf> images_;
  ParamStore<float> generator_;
  ParamStore<float> critic_;
  AdamState gen_adam_;
  AdamState critic_adam_;
  std::optional<FeatureExtractor<float>> extractor_;
  std::int64_t iteration_ = 0;
};

/// One metrics-log line: iteration, each loss term, lr.
std::string format_log_line(const StepStats& s);
std::string log_header();

struct RunOptions {
  std::optional<std::filesystem::path> resume_state;
  std::function<void(const std::string&)> warn;
  std::function<void(const StepStats&)> on_step;
};

/// cmd_train body: loads images, trains, writes metrics.log, timing.log,
/// checkpoints and weights_final.dmbn into config.out_dir.
/// Returns the final generator.
ParamStore<float> run_training(const TrainConfig& config, const RunOptions& options);

}  // namespace dmnet
