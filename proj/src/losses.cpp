#include "dmnet/losses.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dmnet/ops.hpp"
#include "dmnet/optim.hpp"

namespace dmnet {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g1(size);
  const double center = (size - 1) / 2.0;
  double total = 0;
  for (int i = 0; i < size; ++i) {
    g1[i] = std::exp(-((i - center) * (i - center)) / (2 * sigma * sigma));
    total += g1[i];
  }
  for (double& v : g1) v /= total;
  std::vector<double> g2(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) g2[static_cast<std::size_t>(y) * size + x] = g1[y] * g1[x];
  return g2;
}

void LossWeights::validate() const {
  if (fidelity < 0 || ssim < 0 || perceptual < 0 || adversarial < 0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

namespace {

template <typename T>
void require_equal(const char* what, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace

template <typename T>
Tensor<T> fidelity_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                        FidelityKind kind) {
  require_equal("fidelity_loss", pred, target);
  auto diff = ops::sub(tape, target, pred);
  auto per_pixel = kind == FidelityKind::Absolute ? ops::abs(tape, diff) : ops::mul(tape, diff, diff);
  return ops::mean_all(tape, per_pixel);
}

template <typename T>
Tensor<T> ssim_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target) {
  require_equal("ssim_loss", pred, target);
  const Shape& s = pred.shape();
  constexpr int win = SsimConstants::kWindow;
  if (s.h() < win || s.w() < win) {
    throw ShapeError("ssim_loss: image " + s.str() + " smaller than the " + std::to_string(win) +
                     "x" + std::to_string(win) + " window");
  }
  const Shape planes(s.n() * s.c(), 1, s.h(), s.w());
  auto x = ops::reshape(tape, pred, planes);
  auto y = ops::reshape(tape, target, planes);

  const auto g = gaussian_window();
  auto window = Tensor<T>::from_vector(Shape(1, 1, win, win), std::vector<T>(g.begin(), g.end()));
  const Tensor<T> no_bias;
  auto blur = [&](const Tensor<T>& t) { return ops::conv2d(tape, t, window, no_bias, 1, 0); };

  auto mu_x = blur(x);
  auto mu_y = blur(y);
  auto mu_xx = ops::mul(tape, mu_x, mu_x);
  auto mu_yy = ops::mul(tape, mu_y, mu_y);
  auto mu_xy = ops::mul(tape, mu_x, mu_y);
  auto var_x = ops::sub(tape, blur(ops::mul(tape, x, x)), mu_xx);
  auto var_y = ops::sub(tape, blur(ops::mul(tape, y, y)), mu_yy);
  auto cov = ops::sub(tape, blur(ops::mul(tape, x, y)), mu_xy);

  const T c1 = static_cast<T>(SsimConstants::kC1);
  const T c2 = static_cast<T>(SsimConstants::kC2);
  auto num = ops::mul(tape, ops::scalar_affine(tape, mu_xy, T(2), c1),
                      ops::scalar_affine(tape, cov, T(2), c2));
  auto den = ops::mul(tape, ops::scalar_affine(tape, ops::add(tape, mu_xx, mu_yy), T(1), c1),
                      ops::scalar_affine(tape, ops::add(tape, var_x, var_y), T(1), c2));
  auto mean_ssim = ops::mean_all(tape, ops::div(tape, num, den));
  return ops::scalar_affine(tape, mean_ssim, T(-1), T(1));
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::random(std::uint64_t seed) {
  static constexpr std::array<int, 6> kWidths{3, 16, 16, 32, 32, 32};
  Rng rng(seed);
  ParamStore<T> params;
  for (int k = 1; k < static_cast<int>(kWidths.size()); ++k) {
    const int cin = kWidths[k - 1], cout = kWidths[k];
    auto w = cast<T>(he_init(Shape(cout, cin, 3, 3), cin * 9, rng));
    params.add("fx." + std::to_string(k) + ".weight", w);
    params.add("fx." + std::to_string(k) + ".bias", Tensor<T>::zeros(Shape(1, cout, 1, 1)));
  }
  return from_params(std::move(params));
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_params(ParamStore<T> params) {
  FeatureExtractor fx;
  int depth = 0;
  while (params.contains("fx." + std::to_string(depth + 1) + ".weight")) ++depth;
  if (depth == 0) throw std::invalid_argument("FeatureExtractor: no fx.1.weight entry");
  params.set_requires_grad(false);
  fx.params_ = std::move(params);
  fx.depth_ = depth;
  return fx;
}

template <typename T>
std::vector<Tensor<T>> FeatureExtractor<T>::features(Tape<T>& tape, const Tensor<T>& x,
                                                     const std::vector<int>& layers) const {
  int deepest = 0;
  for (int j : layers) {
    if (j < 0 || j > depth_) {
      throw std::out_of_range("FeatureExtractor: layer " + std::to_string(j) +
                              " outside [0, " + std::to_string(depth_) + "]");
    }
    deepest = std::max(deepest, j);
  }
  std::vector<Tensor<T>> activations{x};
  for (int k = 1; k <= deepest; ++k) {
    const std::string p = "fx." + std::to_string(k);
    auto h = ops::conv2d(tape, activations.back(), params_.get(p + ".weight"),
                         params_.get(p + ".bias"), 1, 1);
    activations.push_back(ops::leaky_relu(tape, h, T(0.1)));
  }
  std::vector<Tensor<T>> out;
  out.reserve(layers.size());
  for (int j : layers) out.push_back(activations[j]);
  return out;
}

template <typename T>
Tensor<T> perceptual_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                          const FeatureExtractor<T>& fx, const std::vector<int>& layers) {
  require_equal("perceptual_loss", pred, target);
  if (layers.empty()) throw std::invalid_argument("perceptual_loss: no layers requested");
  auto fp = fx.features(tape, pred, layers);
  auto ft = fx.features(tape, target, layers);
  Tensor<T> total;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto term = ops::mean_all(tape, ops::abs(tape, ops::sub(tape, ft[i], fp[i])));
    total = total.defined() ? ops::add(tape, total, term) : term;
  }
  return total;
}

template <typename T>
RganLosses<T> rgan_losses(Tape<T>& tape, const Tensor<T>& c_real, const Tensor<T>& c_fake) {
  require_equal("rgan_losses", c_real, c_fake);
  auto d_real_fake = ops::sub_scalar(tape, c_real, ops::mean_all(tape, c_fake));
  auto d_fake_real = ops::sub_scalar(tape, c_fake, ops::mean_all(tape, c_real));
  auto neg = [&](const Tensor<T>& t) { return ops::scalar_affine(tape, t, T(-1), T(0)); };
  auto mean_softplus = [&](const Tensor<T>& t) { return ops::mean_all(tape, ops::softplus(tape, t)); };
  // -log(1 - s(z)) = softplus(z), -log s(z) = softplus(-z)
  RganLosses<T> out;
  out.generator = ops::add(tape, mean_softplus(d_real_fake), mean_softplus(neg(d_fake_real)));
  out.discriminator = ops::add(tape, mean_softplus(neg(d_real_fake)), mean_softplus(d_fake_real));
  return out;
}

#define DMNET_INSTANTIATE_LOSSES(T)                                                             \
  template Tensor<T> fidelity_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, FidelityKind); \
  template Tensor<T> ssim_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                   \
  template class FeatureExtractor<T>;                                                           \
  template Tensor<T> perceptual_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                     const FeatureExtractor<T>&, const std::vector<int>&);      \
  template RganLosses<T> rgan_losses(Tape<T>&, const Tensor<T>&, const Tensor<T>&);

DMNET_INSTANTIATE_LOSSES(float)
DMNET_INSTANTIATE_LOSSES(double)

}  // namespace dmnet
