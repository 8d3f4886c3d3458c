#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dmnet/degrade.hpp"
#include "dmnet/metrics.hpp"
#include "dmnet/ops.hpp"
#include "dmnet/optim.hpp"
#include "dmnet/synthetic.hpp"
#include "test_support.hpp"

using namespace dmnet;
using dmnet::fixtures::uniform;

namespace {

bool in_unit(const Tensorf& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return v >= 0.0f && v <= 1.0f; });
}

}  // namespace

TEST(HeInit, StatisticsAndDeterminism) {
  Rng rng(1);
  const int fan_in = 16 * 9;
  auto w = he_init({128, 16, 3, 3}, fan_in, rng);
  const double n = static_cast<double>(w.numel());
  ASSERT_GE(n, 10000);
  const double mean = std::accumulate(w.data().begin(), w.data().end(), 0.0) / n;
  double var = 0;
  for (float v : w.data()) var += (v - mean) * (v - mean);
  var /= n - 1;
  const double want = 2.0 / fan_in;
  EXPECT_NEAR(var, want, 0.1 * want);
  EXPECT_LT(std::abs(mean), 3 * std::sqrt(want / n));
  EXPECT_TRUE(w.requires_grad());
  Rng again(1);
  auto w2 = he_init({128, 16, 3, 3}, fan_in, again);
  EXPECT_TRUE(std::equal(w.data().begin(), w.data().end(), w2.data().begin()));
}

TEST(Adam, FirstStepHandValue) {
  ParamStore<float> p;
  p.add("w", Tensorf::zeros({1, 1, 1, 1}, true));
  p.get("w").grad_buffer()[0] = 1.0f;
  AdamState s;
  adam_step(p, s, 1e-4);
  EXPECT_NEAR(p.get("w").data()[0], -9.999999e-5, 1e-11);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParamStore<float> p;
  p.add("w", uniform<float>({1, 2, 3, 3}, 1, -1, 1, true));
  const auto before = p.get("w").clone();
  p.get("w").grad_buffer();  // allocated, all zero
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_step(p, s, 1e-2);
  EXPECT_TRUE(std::equal(before.data().begin(), before.data().end(), p.get("w").data().begin()));
}

TEST(Adam, MissingGradientIsNamed) {
  ParamStore<float> p;
  p.add("layer.weight", Tensorf::zeros({1, 1, 1, 1}, true));
  AdamState s;
  try {
    adam_step(p, s, 1e-3);
    FAIL() << "expected throw";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
  }
}

TEST(Adam, MinimisesQuadraticDeterministically) {
  auto run = [] {
    ParamStore<float> p;
    p.add("x", Tensorf::zeros({1, 1, 1, 1}, true));
    AdamState s;
    for (int i = 0; i < 3000; ++i) {
      Tape<float> tape;
      auto d = ops::scalar_affine(tape, p.get("x"), 1.0f, -3.0f);
      auto loss = ops::mean_all(tape, ops::mul(tape, d, d));
      p.zero_grad();
      tape.backward(loss);
      adam_step(p, s, 1e-2);
    }
    return p.get("x").data()[0];
  };
  const float a = run();
  EXPECT_NEAR(a, 3.0f, 1e-3);
  EXPECT_EQ(a, run());
}

TEST(Schedule, Breakpoints) {
  const Schedule s;
  EXPECT_EQ(lr_at(s, 0), 1e-4);
  EXPECT_EQ(lr_at(s, 99999), 1e-4);
  EXPECT_EQ(lr_at(s, 100000), 5e-5);
  EXPECT_EQ(lr_at(s, 400000), 6.25e-6);
  EXPECT_EQ(lr_at(s, 1000000), 6.25e-6);
  const Schedule short_run = scaled_schedule(1e-3, 2000);
  EXPECT_EQ(short_run.halve_every, 200);
  EXPECT_EQ(lr_at(short_run, 199), 1e-3);
  EXPECT_EQ(lr_at(short_run, 200), 5e-4);
  EXPECT_EQ(lr_at(short_run, 1999), 6.25e-5);
}

TEST(Bicubic, IdentityConstantAndBounds) {
  const auto img = synthetic_image(20, 24, 1);
  const auto same = bicubic_resize(img, 20, 24);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(same.data()[i], img.data()[i], 1e-6);
  const auto flat = Tensorf::full({1, 3, 16, 16}, 0.37f);
  for (auto [h, w] : {std::pair{4, 4}, std::pair{64, 64}, std::pair{10, 23}}) {
    const auto resized = bicubic_resize(flat, h, w);
    for (float v : resized.data()) EXPECT_NEAR(v, 0.37f, 1e-6);
  }
  EXPECT_TRUE(in_unit(bicubic_resize(img, 80, 96)));
  EXPECT_EQ(cubic_kernel(0.0), 1.0);
  EXPECT_EQ(cubic_kernel(1.0), 0.0);
  EXPECT_EQ(cubic_kernel(2.0), 0.0);
}

TEST(Bicubic, RampSurvivesDownUp) {
  auto ramp = Tensorf::zeros({1, 1, 32, 64});
  for (int h = 0; h < 32; ++h) {
    for (int w = 0; w < 64; ++w) ramp.at(0, 0, h, w) = 0.1f + 0.8f * w / 63.0f;
  }
  const auto back = bicubic_resize(bicubic_resize(ramp, 8, 16), 32, 64);
  for (int h = 8; h < 24; ++h) {
    for (int w = 8; w < 56; ++w) EXPECT_NEAR(back.at(0, 0, h, w), ramp.at(0, 0, h, w), 1e-3);
  }
}

TEST(Bicubic, CommutesWithFlip) {
  const auto img = synthetic_image(24, 24, 2);
  auto flipped = img.clone();
  for (int c = 0; c < 3; ++c)
    for (int h = 0; h < 24; ++h)
      for (int w = 0; w < 24; ++w) flipped.at(0, c, h, w) = img.at(0, c, h, 23 - w);
  const auto a = bicubic_resize(img, 6, 6);
  const auto b = bicubic_resize(flipped, 6, 6);
  for (int c = 0; c < 3; ++c)
    for (int h = 0; h < 6; ++h)
      for (int w = 0; w < 6; ++w) EXPECT_NEAR(a.at(0, c, h, w), b.at(0, c, h, 5 - w), 1e-6);
}

TEST(Jpeg, QualityOrderingAndNearLossless) {
  auto smooth = Tensorf::zeros({1, 3, 32, 48});
  for (int c = 0; c < 3; ++c)
    for (int h = 0; h < 32; ++h)
      for (int w = 0; w < 48; ++w) smooth.at(0, c, h, w) = 0.2f + 0.5f * (h + w) / 78.0f + 0.05f * c;
  EXPECT_GE(psnr(jpeg_degrade(smooth, 100), smooth), 45.0);

  const auto img = synthetic_image(48, 48, 3);
  const double q20 = psnr(jpeg_degrade(img, 20), img);
  const double q50 = psnr(jpeg_degrade(img, 50), img);
  EXPECT_LT(q20, q50);
  EXPECT_THROW(jpeg_degrade(img, 0), std::invalid_argument);
  EXPECT_THROW(jpeg_degrade(img, 101), std::invalid_argument);
}

TEST(Jpeg, ConstantImageStaysConstant) {
  for (int q : {10, 50}) {
    const auto gray = Tensorf::full({1, 3, 16, 24}, 0.5f);
    const auto out = jpeg_degrade(gray, q);
    const int dc_step = jpeg_quant_table(false, q)[0];
    for (float v : out.data()) EXPECT_NEAR(v, 0.5f, dc_step / 8.0 / 255.0 + 1.0 / 255.0);
    const float first = out.data()[0];
    for (float v : out.data()) EXPECT_EQ(v, first);
  }
}

TEST(Jpeg, QualityScaledTables) {
  EXPECT_EQ(jpeg_quant_table(false, 50)[0], 16);
  EXPECT_EQ(jpeg_quant_table(true, 50)[0], 17);
  EXPECT_EQ(jpeg_quant_table(false, 100)[0], 1);
  EXPECT_EQ(jpeg_quant_table(false, 20)[0], 40);
}

TEST(OldPhoto, NullFadeAndNoise) {
  const auto img = synthetic_image(32, 32, 4);
  Rng rng(5);
  const auto same = oldphoto_apply(img, {0.0, 0.5, 1.0, 0.0}, rng);
  for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(same.data()[i], img.data()[i], 1e-6);

  const auto faded = oldphoto_apply(img, {1.0, 0.6, 1.0, 0.0}, rng);
  for (float v : faded.data()) EXPECT_NEAR(v, 0.6f, 1e-6);

  const auto mid = Tensorf::full({1, 3, 96, 96}, 0.5f);
  const double sigma = 0.05;
  const auto noisy = oldphoto_apply(mid, {0.0, 0.5, 1.0, sigma}, rng);
  double m = 0, v = 0;
  for (float x : noisy.data()) m += x - 0.5;
  m /= noisy.numel();
  for (float x : noisy.data()) v += (x - 0.5 - m) * (x - 0.5 - m);
  const double std_dev = std::sqrt(v / noisy.numel());
  EXPECT_NEAR(std_dev, sigma / 3.0, 0.15 * sigma / 3.0);
  // Monochrome: every channel carries the same noise.
  for (int h = 0; h < 96; ++h) EXPECT_EQ(noisy.at(0, 0, h, 7), noisy.at(0, 2, h, 7));
}

TEST(MakePair, ShapesRangesAndDeterminism) {
  const auto hr = synthetic_image(64, 64, 6);
  for (DegradeMode mode : {DegradeMode::SuperResolution, DegradeMode::Enhance, DegradeMode::OldPhoto}) {
    DegradationSpec spec;
    spec.mode = mode;
    Rng a(7), b(7);
    const auto p = make_pair(hr, spec, a);
    const auto q = make_pair(hr, spec, b);
    EXPECT_TRUE(std::equal(p.input.data().begin(), p.input.data().end(), q.input.data().begin()));
    EXPECT_TRUE(in_unit(p.input));
    EXPECT_TRUE(std::equal(p.target.data().begin(), p.target.data().end(), hr.data().begin()));
    if (mode == DegradeMode::SuperResolution) {
      EXPECT_EQ(p.input.shape(), Shape(1, 3, 16, 16));
    } else {
      EXPECT_EQ(p.input.shape(), hr.shape());
    }
  }
  EXPECT_EQ(parse_degrade_mode("oldphoto"), DegradeMode::OldPhoto);
  EXPECT_THROW(parse_degrade_mode("blur"), std::invalid_argument);
  DegradationSpec bad;
  bad.fade = {0.6, 0.2};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
