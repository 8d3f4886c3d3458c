#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "dmnet/synthetic.hpp"
#include "dmnet/train.hpp"
#include "dmnet/weight_file.hpp"
#include "test_support.hpp"

using namespace dmnet;
namespace fs = std::filesystem;

namespace {

TrainConfig small_config(Mode mode, const fs::path& data, const fs::path& out) {
  TrainConfig c = TrainConfig::defaults(mode);
  c.model.num_blocks = 2;
  c.data_dir = data;
  c.out_dir = out;
  c.iterations = 6;
  c.batch_size = 2;
  c.patch_size = 32;
  c.checkpoint_every = 3;
  c.log_every = 1;
  c.seed = 5;
  c.schedule = scaled_schedule(1e-3, c.iterations);
  return c;
}

bool same_values(const ParamStore<float>& a, const ParamStore<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entries()[i].tensor;
    const auto& y = b.entries()[i].tensor;
    if (x.shape() != y.shape() || !std::equal(x.data().begin(), x.data().end(), y.data().begin())) {
      return false;
    }
  }
  return true;
}

std::vector<Tensorf> toy_images(int n, int size) {
  std::vector<Tensorf> out;
  for (int i = 0; i < n; ++i) out.push_back(synthetic_image(size, size, 40 + i));
  return out;
}

}  // namespace

TEST(SampleRng, StreamsDependOnAllKeys) {
  auto draw = [](std::uint64_t s, std::int64_t it, int k) { return sample_rng(s, it, k)(); };
  EXPECT_EQ(draw(1, 2, 3), draw(1, 2, 3));
  EXPECT_NE(draw(1, 2, 3), draw(1, 2, 4));
  EXPECT_NE(draw(1, 2, 3), draw(1, 3, 3));
  EXPECT_NE(draw(1, 2, 3), draw(2, 2, 3));
}

TEST(Trainer, BatchShapes) {
  const auto data = fixtures::scratch_dir("batch_unused");
  for (Mode mode : {Mode::SuperResolution, Mode::DetailEnhance}) {
    Trainer t(small_config(mode, data, data / "out"), toy_images(2, 48));
    const auto pair = t.batch(0);
    EXPECT_EQ(pair.target.shape(), Shape(2, 3, 32, 32));
    EXPECT_EQ(pair.input.shape(), mode == Mode::SuperResolution ? Shape(2, 3, 8, 8) : Shape(2, 3, 32, 32));
  }
}

TEST(Trainer, EnhanceStepUpdatesBothNetworks) {
  const auto data = fixtures::scratch_dir("enh_step");
  Trainer t(small_config(Mode::DetailEnhance, data, data / "out"), toy_images(2, 48));
  const auto g0 = t.generator().clone();
  const auto c0 = t.critic().clone();
  const StepStats s = t.step();
  EXPECT_EQ(s.iteration, 1);
  EXPECT_GT(s.perceptual, 0.0);
  EXPECT_GT(s.adversarial, 0.0);
  EXPECT_GT(s.critic, 0.0);
  EXPECT_NEAR(s.total, s.fidelity + 0.2 * s.ssim + s.perceptual + 0.005 * s.adversarial, 1e-5);
  EXPECT_FALSE(same_values(g0, t.generator()));
  EXPECT_FALSE(same_values(c0, t.critic()));
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto dir = fixtures::scratch_dir("resume");
  for (Mode mode : {Mode::SuperResolution, Mode::DetailEnhance}) {
    const auto cfg = small_config(mode, dir, dir / "out");
    Trainer full(cfg, toy_images(2, 48));
    for (int i = 0; i < 6; ++i) full.step();

    Trainer first(cfg, toy_images(2, 48));
    for (int i = 0; i < 3; ++i) first.step();
    first.save_checkpoint(dir / "ckpt");

    Trainer resumed(cfg, toy_images(2, 48));
    resumed.load_checkpoint(dir / "ckpt" / "state_3.txt");
    EXPECT_EQ(resumed.iteration(), 3);
    for (int i = 0; i < 3; ++i) resumed.step();
    EXPECT_TRUE(same_values(full.generator(), resumed.generator()));
    EXPECT_TRUE(same_values(full.critic(), resumed.critic()));
  }
}

TEST(Trainer, NonFiniteLossAbortsWithoutUpdating) {
  auto img = synthetic_image(48, 48, 1);
  std::fill(img.data().begin(), img.data().end(), std::numeric_limits<float>::quiet_NaN());
  const auto dir = fixtures::scratch_dir("nan");
  Trainer t(small_config(Mode::SuperResolution, dir, dir / "out"), {img});
  const auto before = t.generator().clone();
  EXPECT_THROW(t.step(), TrainingDiverged);
  EXPECT_TRUE(same_values(before, t.generator()));
  EXPECT_EQ(t.iteration(), 0);
}

TEST(Trainer, RejectsTooSmallImages) {
  const auto dir = fixtures::scratch_dir("small");
  EXPECT_THROW(Trainer(small_config(Mode::SuperResolution, dir, dir), toy_images(1, 16)),
               std::invalid_argument);
  EXPECT_THROW(Trainer(small_config(Mode::SuperResolution, dir, dir), {}), std::invalid_argument);
}

TEST(ImageFolder, UnreadableFilesAreSkippedWithWarning) {
  const auto dir = fixtures::synthetic_folder("folder", 2, 16);
  std::ofstream(dir / "broken.png") << "garbage";
  std::vector<std::string> warnings;
  const auto images = load_image_folder(dir, [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(images.size(), 2u);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("broken.png"), std::string::npos);
}

TEST(RunTraining, DeterministicLogsAndWeights) {
  const auto data = fixtures::synthetic_folder("run_data", 3, 48);
  std::vector<std::string> logs;
  std::vector<std::vector<char>> weights;
  for (int run = 0; run < 2; ++run) {
    const auto out = fixtures::scratch_dir("run_det" + std::to_string(run));
    run_training(small_config(Mode::DetailEnhance, data, out), {});
    logs.push_back(fixtures::read_text(out / "metrics.log"));
    weights.push_back(fixtures::read_bytes(out / "weights_final.dmbn"));
    for (const char* f : {"config.txt", "timing.log", "weights_3.dmbn", "state_3.txt", "state_6.dmbn"}) {
      EXPECT_TRUE(fs::exists(out / f)) << f;
    }
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(weights[0], weights[1]);
  // header + one line per iteration
  EXPECT_EQ(std::count(logs[0].begin(), logs[0].end(), '\n'), 7);
}

TEST(RunTraining, ResumeAppendsAndMatches) {
  const auto data = fixtures::synthetic_folder("resume_data", 2, 48);
  const auto full_dir = fixtures::scratch_dir("resume_full");
  run_training(small_config(Mode::SuperResolution, data, full_dir), {});

  const auto part_dir = fixtures::scratch_dir("resume_part");
  auto part = small_config(Mode::SuperResolution, data, part_dir);
  run_training(part, {});
  fs::remove(part_dir / "weights_final.dmbn");
  // rewind the log to the checkpoint and continue from there
  RunOptions opts;
  opts.resume_state = part_dir / "state_3.txt";
  std::string log = fixtures::read_text(part_dir / "metrics.log");
  std::size_t cut = 0;
  for (int lines = 0; lines < 4; ++lines) cut = log.find('\n', cut) + 1;
  std::ofstream(part_dir / "metrics.log", std::ios::trunc) << log.substr(0, cut);
  run_training(part, opts);
  EXPECT_EQ(fixtures::read_bytes(part_dir / "weights_final.dmbn"),
            fixtures::read_bytes(full_dir / "weights_final.dmbn"));
  EXPECT_EQ(fixtures::read_text(part_dir / "metrics.log"), fixtures::read_text(full_dir / "metrics.log"));
}

TEST(RunTraining, MissingDataFails) {
  const auto empty = fixtures::scratch_dir("empty_data");
  EXPECT_THROW(run_training(small_config(Mode::SuperResolution, empty, empty / "out"), {}),
               std::runtime_error);
}

TEST(LogLine, Format) {
  StepStats s;
  s.iteration = 12;
  s.fidelity = 0.5;
  s.total = 0.75;
  s.lr = 1e-4;
  EXPECT_EQ(format_log_line(s), "12 0.5 0 0 0 0 0.75 0.0001");
  EXPECT_EQ(log_header().rfind("# iteration", 0), 0u);
}

// Single 48x48 patch, 2000 steps: the SR network must memorise it.
TEST(Overfit, SinglePatchSuperResolution) {
  TrainConfig c = TrainConfig::defaults(Mode::SuperResolution);
  c.patch_size = 48;
  c.batch_size = 1;
  c.iterations = 2000;
  c.schedule = Schedule{1e-3, c.iterations, 0};
  Trainer t(c, {synthetic_image(48, 48, 77)});
  double last = 0;
  for (int i = 0; i < 2000; ++i) last = t.step().fidelity;
  EXPECT_LT(last, 0.02);
}
