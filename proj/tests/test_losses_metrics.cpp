#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dmnet/losses.hpp"
#include "dmnet/metrics.hpp"
#include "dmnet/ops.hpp"
#include "dmnet/synthetic.hpp"
#include "test_support.hpp"

using namespace dmnet;
using dmnet::fixtures::uniform;

TEST(Fidelity, HandCases) {
  Tape<double> tape(false);
  auto x = uniform<double>({1, 3, 5, 5}, 1, 0, 1);
  EXPECT_EQ(fidelity_loss(tape, x, x).item(), 0.0);
  auto shifted = ops::scalar_affine(tape, x, 1.0, 0.5);
  EXPECT_NEAR(fidelity_loss(tape, shifted, x).item(), 0.5, 1e-12);
  auto pred = Tensord::from_vector({1, 1, 1, 2}, {1, 2});
  auto target = Tensord::from_vector({1, 1, 1, 2}, {0, 4});
  EXPECT_EQ(fidelity_loss(tape, pred, target).item(), 1.5);
  EXPECT_EQ(fidelity_loss(tape, pred, target, FidelityKind::Squared).item(), 2.5);
  EXPECT_THROW(fidelity_loss(tape, pred, Tensord::zeros({1, 1, 2, 1})), ShapeError);
}

TEST(SsimLoss, IdentityAndConstantImages) {
  Tape<double> tape(false);
  auto x = uniform<double>({1, 3, 16, 16}, 2, 0, 1);
  EXPECT_NEAR(ssim_loss(tape, x, x).item(), 0.0, 1e-6);
  auto zeros = Tensord::zeros({1, 3, 16, 16});
  auto ones = Tensord::full({1, 3, 16, 16}, 1.0);
  const double c1 = SsimConstants::kC1;
  const double expected = 1.0 - c1 / (1.0 + c1);
  EXPECT_NEAR(ssim_loss(tape, zeros, ones).item(), expected, 1e-9);
  EXPECT_NEAR(expected, 0.9999, 1e-6);
  EXPECT_THROW(ssim_loss(tape, Tensord::zeros({1, 3, 10, 16}), Tensord::zeros({1, 3, 10, 16})),
               ShapeError);
}

TEST(SsimLoss, MatchesMetricOracle) {
  Tape<double> tape(false);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = uniform<double>({2, 3, 19, 23}, seed, 0, 1);
    auto b = uniform<double>({2, 3, 19, 23}, seed + 50, 0, 1);
    EXPECT_NEAR(ssim(a, b), 1.0 - ssim_loss(tape, a, b).item(), 1e-6);
  }
  const auto img = synthetic_image(40, 40, 1);
  const auto noisy = cast<double>(uniform<float>({1, 3, 40, 40}, 9, -0.05, 0.05));
  auto pert = cast<double>(img);
  for (std::size_t i = 0; i < pert.numel(); ++i) pert.data()[i] += noisy.data()[i];
  EXPECT_NEAR(ssim(cast<double>(img), pert), 1.0 - ssim_loss(tape, cast<double>(img), pert).item(), 1e-6);
}

TEST(SsimLoss, GaussianWindowIsNormalised) {
  const auto w = gaussian_window();
  ASSERT_EQ(w.size(), 121u);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
  EXPECT_GT(w[60], w[59]);
  EXPECT_DOUBLE_EQ(w[0], w[120]);
}

TEST(Perceptual, ZeroOnIdenticalAndFrozenExtractor) {
  auto fx = FeatureExtractor<float>::random(11);
  Tape<float> tape(true);
  auto pred = uniform<float>({1, 3, 12, 12}, 3, 0, 1, true);
  auto target = uniform<float>({1, 3, 12, 12}, 4, 0, 1);
  EXPECT_EQ(perceptual_loss(tape, target, target, fx).item(), 0.0f);
  auto loss = perceptual_loss(tape, pred, target, fx);
  tape.backward(loss);
  EXPECT_TRUE(pred.has_grad());
  for (const auto& e : fx.params().entries()) {
    EXPECT_FALSE(e.tensor.has_grad()) << e.name;
    EXPECT_FALSE(e.tensor.requires_grad()) << e.name;
  }
  EXPECT_THROW(fx.features(tape, pred, {fx.depth() + 1}), std::out_of_range);
}

TEST(Perceptual, IdentityExtractorReducesToFidelity) {
  Tape<double> tape(false);
  auto fx = FeatureExtractor<double>::random(1);
  auto a = uniform<double>({1, 3, 8, 8}, 5, 0, 1);
  auto b = uniform<double>({1, 3, 8, 8}, 6, 0, 1);
  EXPECT_DOUBLE_EQ(perceptual_loss(tape, a, b, fx, {0}).item(), fidelity_loss(tape, a, b).item());
}

TEST(Rgan, EqualCriticOutputs) {
  Tape<double> tape(false);
  auto c = Tensord::full({1, 1, 4, 4}, 0.3);
  auto l = rgan_losses(tape, c, c.clone());
  EXPECT_NEAR(l.generator.item(), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(l.discriminator.item(), 1.3863, 1e-4);
}

TEST(Rgan, SaturationAndSwapSymmetry) {
  Tape<double> tape(false);
  auto real = Tensord::full({1, 1, 4, 4}, 20.0);
  auto fake = Tensord::zeros({1, 1, 4, 4});
  auto l = rgan_losses(tape, real, fake);
  EXPECT_LT(l.discriminator.item(), 1e-8);
  EXPECT_GT(l.generator.item(), 39.0);

  auto a = uniform<double>({2, 1, 3, 3}, 7, -2, 2);
  auto b = uniform<double>({2, 1, 3, 3}, 8, -2, 2);
  auto ab = rgan_losses(tape, a, b);
  auto ba = rgan_losses(tape, b, a);
  EXPECT_NEAR(ab.generator.item(), ba.discriminator.item(), 1e-12);
  EXPECT_NEAR(ab.discriminator.item(), ba.generator.item(), 1e-12);
}

TEST(Rgan, DiscriminatorLossFallsAsGapGrows) {
  Tape<double> tape(false);
  double prev = std::numeric_limits<double>::infinity();
  for (double gap : {-2.0, -0.5, 0.0, 0.5, 2.0, 6.0}) {
    auto l = rgan_losses(tape, Tensord::full({1, 1, 2, 2}, gap), Tensord::zeros({1, 1, 2, 2}));
    EXPECT_LT(l.discriminator.item(), prev);
    prev = l.discriminator.item();
  }
}

TEST(LossWeights, Defaults) {
  const auto sr = LossWeights::super_resolution();
  EXPECT_EQ(sr.perceptual, 0.0);
  EXPECT_EQ(sr.adversarial, 0.0);
  const auto en = LossWeights::detail_enhance();
  EXPECT_EQ(en.fidelity, 1.0);
  EXPECT_EQ(en.perceptual, 1.0);
  EXPECT_EQ(en.adversarial, 0.005);
  LossWeights bad{-1, 0, 0, 0};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Psnr, ClosedFormSentinelAndPermutation) {
  auto a = uniform<float>({1, 3, 8, 8}, 1, 0.2, 0.8);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  auto b = a.clone();
  for (auto& v : b.data()) v += 0.1f;
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-4);

  std::vector<std::size_t> perm(a.numel());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(3));
  auto c = uniform<float>({1, 3, 8, 8}, 2, 0, 1);
  auto pa = a.clone(), pc = c.clone();
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pa.data()[i] = a.data()[perm[i]];
    pc.data()[i] = c.data()[perm[i]];
  }
  EXPECT_NEAR(psnr(a, c), psnr(pa, pc), 1e-9);
  EXPECT_THROW(psnr(a, Tensorf::zeros({1, 3, 8, 9})), ShapeError);
}

TEST(Psnr, FallsAsNoiseGrows) {
  const auto img = synthetic_image(32, 32, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (double sigma : {0.01, 0.05, 0.1}) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, sigma);
    auto noisy = img.clone();
    for (auto& v : noisy.data()) v += static_cast<float>(n(rng));
    const double p = psnr(img, noisy);
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Ssim, IdentitySymmetryAndBounds) {
  auto a = uniform<float>({1, 3, 20, 20}, 6, 0, 1);
  auto b = uniform<float>({1, 3, 20, 20}, 7, 0, 1);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
  for (std::uint64_t s = 0; s < 10; ++s) {
    const double v = ssim(uniform<float>({1, 3, 16, 16}, s, 0, 1), uniform<float>({1, 3, 16, 16}, s + 99, 0, 1));
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
    EXPECT_LT(std::abs(v), 0.2);  // independent noise is nearly uncorrelated
  }
  auto near_a = a.clone();
  for (float& v : near_a.data()) v = 0.9f * v + 0.05f;
  EXPECT_GT(ssim(a, near_a), 0.9);
  EXPECT_THROW(ssim(Tensorf::zeros({1, 3, 8, 8}), Tensorf::zeros({1, 3, 8, 8})), ShapeError);
}

TEST(MetricReport, MeanOfRows) {
  MetricReport r;
  r.add("a.png", 30.0, 0.9);
  r.add("b.png", 20.0, 0.5);
  EXPECT_DOUBLE_EQ(r.mean_psnr_db, 25.0);
  EXPECT_DOUBLE_EQ(r.mean_ssim, 0.7);
  const std::string t = r.table();
  EXPECT_NE(t.find("a.png"), std::string::npos);
  EXPECT_NE(t.find("MEAN"), std::string::npos);
  MetricReport inf;
  inf.add("same.png", kPsnrIdentical, 1.0);
  EXPECT_NE(inf.table().find("inf"), std::string::npos);
}
