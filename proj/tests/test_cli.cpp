#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

#include "dmnet/config.hpp"
#include "dmnet/degrade.hpp"
#include "dmnet/image_io.hpp"
#include "dmnet/metrics.hpp"
#include "dmnet/model.hpp"
#include "dmnet/synthetic.hpp"
#include "dmnet/weight_file.hpp"
#include "test_support.hpp"

using namespace dmnet;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string(DMNET_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, fixtures::read_text(out), fixtures::read_text(err)};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, DegradeShapes) {
  const auto dir = fixtures::scratch_dir("cli_degrade");
  save_png(dir / "hr.png", synthetic_image(128, 128, 1));
  auto r = cli("degrade --mode sr --seed 3 --in " + q(dir / "hr.png") + " --out " + q(dir / "lr.png"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_png(dir / "lr.png").shape(), Shape(1, 3, 32, 32));
  for (const char* mode : {"enhance", "oldphoto"}) {
    r = cli(std::string("degrade --mode ") + mode + " --seed 3 --in " + q(dir / "hr.png") + " --out " +
                q(dir / "x.png"),
            dir);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(load_png(dir / "x.png").shape(), Shape(1, 3, 128, 128));
  }
}

TEST(Cli, InferShapesDeterminismAndQuantisation) {
  const auto dir = fixtures::scratch_dir("cli_infer");
  const auto spec = ModelSpec::super_resolution();
  const auto params = build_generator(spec);
  save_weights(dir / "sr.dmbn", params);
  const auto img = synthetic_image(32, 32, 2);
  save_png(dir / "in.png", img);
  for (const char* name : {"a.png", "b.png"}) {
    auto r = cli("infer --mode sr --weights " + q(dir / "sr.dmbn") + " --in " + q(dir / "in.png") +
                     " --out " + q(dir / name),
                 dir);
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto out = load_png(dir / "a.png");
  EXPECT_EQ(out.shape(), Shape(1, 3, 128, 128));
  EXPECT_EQ(fixtures::read_bytes(dir / "a.png"), fixtures::read_bytes(dir / "b.png"));
  const auto direct = infer(params, spec, load_png(dir / "in.png"));
  for (std::size_t i = 0; i < out.numel(); ++i) {
    EXPECT_LE(std::abs(out.data()[i] - direct.data()[i]), 0.5f / 255.0f + 1e-6f);
  }

  const auto enh = build_generator(ModelSpec::detail_enhance());
  save_weights(dir / "enh.dmbn", enh);
  auto r = cli("infer --mode enhance --weights " + q(dir / "enh.dmbn") + " --in " + q(dir / "in.png") +
                   " --out " + q(dir / "e.png"),
               dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_png(dir / "e.png").shape(), Shape(1, 3, 32, 32));
}

TEST(Cli, InferRejectsMismatchedWeights) {
  const auto dir = fixtures::scratch_dir("cli_mismatch");
  save_weights(dir / "sr.dmbn", build_generator(ModelSpec::super_resolution()));
  save_png(dir / "in.png", synthetic_image(32, 32, 2));
  auto r = cli("infer --mode enhance --weights " + q(dir / "sr.dmbn") + " --in " + q(dir / "in.png") +
                   " --out " + q(dir / "o.png"),
               dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: weights: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
  EXPECT_FALSE(fs::exists(dir / "o.png"));
}

TEST(Cli, EvalIdenticalPairsAndUnpaired) {
  const auto dir = fixtures::scratch_dir("cli_eval");
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "ref");
  for (int i = 0; i < 2; ++i) {
    const auto img = synthetic_image(24, 24, 10 + i);
    save_png(dir / "in" / ("p" + std::to_string(i) + ".png"), img);
    save_png(dir / "ref" / ("p" + std::to_string(i) + ".png"), img);
  }
  save_png(dir / "in" / "lonely.png", synthetic_image(24, 24, 9));
  auto r = cli("eval --inputs " + q(dir / "in") + " --refs " + q(dir / "ref"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("MEAN"), std::string::npos);
  EXPECT_NE(r.out.find("inf"), std::string::npos);
  EXPECT_NE(r.out.find("1.000000"), std::string::npos);
  EXPECT_EQ(r.out.find("lonely"), std::string::npos);
  EXPECT_NE(r.err.find("lonely.png"), std::string::npos);
}

TEST(Cli, EvalMatchesInProcessMetrics) {
  const auto dir = fixtures::scratch_dir("cli_eval_values");
  fs::create_directories(dir / "in");
  fs::create_directories(dir / "ref");
  const auto ref = quantize_8bit(synthetic_image(32, 32, 3));
  const auto out = quantize_8bit(jpeg_degrade(ref, 30));
  save_png(dir / "ref" / "x.png", ref);
  save_png(dir / "in" / "x.png", out);
  auto r = cli("eval --inputs " + q(dir / "in") + " --refs " + q(dir / "ref"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  MetricReport want;
  want.add("x.png", psnr(out, ref), ssim(out, ref));
  EXPECT_EQ(r.out, want.table());
}

TEST(Cli, FeaturesWritesSixteenMaps) {
  const auto dir = fixtures::scratch_dir("cli_features");
  save_weights(dir / "w.dmbn", build_generator(ModelSpec::super_resolution()));
  save_png(dir / "in.png", synthetic_image(20, 28, 4));
  auto r = cli("features --weights " + q(dir / "w.dmbn") + " --in " + q(dir / "in.png") + " --out-dir " +
                   q(dir / "maps"),
               dir);
  ASSERT_EQ(r.code, 0) << r.err;
  int count = 0;
  for (const auto& e : fs::directory_iterator(dir / "maps")) {
    ++count;
    EXPECT_EQ(load_png(e.path()).shape(), Shape(1, 3, 20, 28));
  }
  EXPECT_EQ(count, 16);
}

TEST(Cli, TrainWritesWeights) {
  const auto data = fixtures::synthetic_folder("cli_train_data", 2, 40);
  const auto dir = fixtures::scratch_dir("cli_train");
  TrainConfig c = TrainConfig::defaults(Mode::SuperResolution);
  c.model.num_blocks = 1;
  c.data_dir = data;
  c.out_dir = dir / "run";
  c.iterations = 2;
  c.batch_size = 1;
  c.patch_size = 32;
  std::ofstream(dir / "c.txt") << to_text(c);
  auto r = cli("train --config " + q(dir / "c.txt"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "weights_final.dmbn"));
  EXPECT_TRUE(fs::exists(dir / "run" / "metrics.log"));

  r = cli("infer --mode sr --config " + q(dir / "c.txt") + " --weights " +
              q(dir / "run" / "weights_final.dmbn") + " --in " + q(data / "img_0.png") + " --out " +
              q(dir / "sr.png"),
          dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(load_png(dir / "sr.png").shape(), Shape(1, 3, 160, 160));
}

TEST(Cli, ErrorsAreOneMachineParsableLine) {
  const auto dir = fixtures::scratch_dir("cli_errors");
  auto r = cli("infer --mode sr", dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: usage: ", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);

  r = cli("degrade --mode sr --in " + q(dir / "missing.png") + " --out " + q(dir / "o.png"), dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: ", 0), 0u) << r.err;

  std::ofstream(dir / "bad.txt") << "model.colour = 1\n";
  r = cli("train --config " + q(dir / "bad.txt"), dir);
  EXPECT_NE(r.code, 0);
  EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;

  r = cli("", dir);
  EXPECT_NE(r.code, 0);
}
