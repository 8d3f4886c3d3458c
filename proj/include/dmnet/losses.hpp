#pragma once

#include <cstdint>
#include <vector>

#include "dmnet/param_store.hpp"
#include "dmnet/tensor.hpp"

namespace dmnet {

/// Windowed SSIM settings shared by the loss and the metric.
struct SsimConstants {
  static constexpr int kWindow = 11;
  static constexpr double kSigma = 1.5;
  static constexpr double kDynamicRange = 1.0;
  static constexpr double kC1 = (0.01 * kDynamicRange) * (0.01 * kDynamicRange);
  static constexpr double kC2 = (0.03 * kDynamicRange) * (0.03 * kDynamicRange);
};

/// Normalised 2-D Gaussian window, row-major kWindow x kWindow.
std::vector<double> gaussian_window(int size = SsimConstants::kWindow,
                                    double sigma = SsimConstants::kSigma);

struct LossWeights {
  double fidelity = 1.0;
  double ssim = 0.2;
  double perceptual = 0.0;
  double adversarial = 0.0;

  static LossWeights super_resolution() { return {1.0, 0.2, 0.0, 0.0}; }
  static LossWeights detail_enhance() { return {1.0, 0.2, 1.0, 0.005}; }
  void validate() const;
};

enum class FidelityKind {
  Absolute,  // mean |y - f(x)|
  Squared,   // mean (y - f(x))^2, ablation only
};

template <typename T>
Tensor<T> fidelity_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                        FidelityKind kind = FidelityKind::Absolute);

/// 1 - mean windowed SSIM over every channel ("valid" windows only).
template <typename T>
Tensor<T> ssim_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target);

/// Frozen conv stack phi. Layer 0 is the input itself; layers 1..depth are
/// the activations after each 3x3 conv + leaky ReLU.
template <typename T>
class FeatureExtractor {
 public:
  /// Fixed He-initialised weights, widths 3->16->16->32->32->32.
  static FeatureExtractor random(std::uint64_t seed);
  /// Externally supplied weights named "fx.<k>.weight" / "fx.<k>.bias", k = 1..depth.
  static FeatureExtractor from_params(ParamStore<T> params);

  int depth() const { return depth_; }
  const ParamStore<T>& params() const { return params_; }

  /// Features for the requested layers, in request order.
  std::vector<Tensor<T>> features(Tape<T>& tape, const Tensor<T>& x,
                                  const std::vector<int>& layers) const;

 private:
  ParamStore<T> params_;
  int depth_ = 0;
};

inline const std::vector<int> kDefaultPerceptualLayers{2, 4};

/// Sum over requested layers of mean |phi_j(target) - phi_j(pred)|.
template <typename T>
Tensor<T> perceptual_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target,
                          const FeatureExtractor<T>& fx,
                          const std::vector<int>& layers = kDefaultPerceptualLayers);

template <typename T>
struct RganLosses {
  Tensor<T> generator;
  Tensor<T> discriminator;
};

/// Relativistic-average losses on critic maps, with the logistic applied to
/// D(a, b) = C(a) - mean C(b):
///   g = -E[log(1 - s(D(real, fake)))] - E[log s(D(fake, real))]
///   d = -E[log s(D(real, fake))] - E[log(1 - s(D(fake, real)))]
template <typename T>
RganLosses<T> rgan_losses(Tape<T>& tape, const Tensor<T>& c_real, const Tensor<T>& c_fake);

}  // namespace dmnet
