#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "dmnet/param_store.hpp"
#include "dmnet/tensor.hpp"

namespace dmnet {

enum class Mode { SuperResolution, DetailEnhance };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view text);  // "sr" | "enhance"

/// Declarative generator description. Parameters are built from it by
/// build_generator and looked up by name during the forward pass.
struct ModelSpec {
  Mode mode = Mode::SuperResolution;
  int num_blocks = 6;
  int channels = 16;
  int scale = 4;  // power of two; x4 upsampling (SR) or 4x4 space-to-depth (enhance)
  int kernel = 3;
  double leaky_slope = 0.1;
  bool use_spade = false;
  bool global_skip = false;
  std::uint64_t seed = 0;

  static ModelSpec super_resolution();
  static ModelSpec detail_enhance();

  /// Throws std::invalid_argument on an inconsistent spec.
  void validate() const;
  int upsample_stages() const;
};

template <typename T>
struct ModulationParams {
  Tensor<T> alpha;
  Tensor<T> beta;
};

ParamStore<float> build_generator(const ModelSpec& spec);

/// Patch critic: four stride-2 3x3 convs (3->32->64->64->64, leaky 0.2) and a
/// 1x1 scoring conv. Needs at least 16x16 input.
ParamStore<float> build_critic(std::uint64_t seed);

// Forward passes. All take a tape; pass a disabled tape for inference.

/// y = alpha * x + beta, elementwise.
template <typename T>
Tensor<T> modulate(Tape<T>& tape, const Tensor<T>& x, const ModulationParams<T>& m);

/// Maps the AI feature map to (alpha, beta): shared 1x1 conv + leaky ReLU,
/// then one 1x1 conv per parameter. alpha/beta never see `feat` itself; it is
/// only used to check the spatial contract.
template <typename T>
ModulationParams<T> modulation_layer(Tape<T>& tape, const ParamStore<T>& params,
                                     std::string_view prefix, const ModelSpec& spec,
                                     const Tensor<T>& feat, const Tensor<T>& ai_feat);

/// Self-feature extraction: head conv, two residual blocks, two convs, an
/// output conv, and (enhance mode) a space-to-depth + 1x1 reduction.
template <typename T>
Tensor<T> sfe_forward(Tape<T>& tape, const ParamStore<T>& params, const ModelSpec& spec,
                      const Tensor<T>& img);

/// Four densely connected 3x3 convs, 1x1 fusion, modulation by the AI
/// feature map, local residual.
template <typename T>
Tensor<T> dense_modulation_block(Tape<T>& tape, const ParamStore<T>& params,
                                 std::string_view prefix, const ModelSpec& spec,
                                 const Tensor<T>& x, const Tensor<T>& ai_feat);

/// Instance-normalises x and re-modulates it with alpha/beta generated from guide.
template <typename T>
Tensor<T> spade_layer(Tape<T>& tape, const ParamStore<T>& params, std::string_view prefix,
                      const ModelSpec& spec, const Tensor<T>& x, const Tensor<T>& guide);

template <typename T>
Tensor<T> sr_generator_forward(Tape<T>& tape, const ParamStore<T>& params,
                               const ModelSpec& spec, const Tensor<T>& img);

template <typename T>
Tensor<T> enh_generator_forward(Tape<T>& tape, const ParamStore<T>& params,
                                const ModelSpec& spec, const Tensor<T>& img);

/// Dispatches on spec.mode. Output is unclamped.
template <typename T>
Tensor<T> generator_forward(Tape<T>& tape, const ParamStore<T>& params, const ModelSpec& spec,
                            const Tensor<T>& img);

template <typename T>
Tensor<T> critic_forward(Tape<T>& tape, const ParamStore<T>& params, const Tensor<T>& img);

/// Inference path: no tape, output clamped to [0,1].
Tensorf infer(const ParamStore<float>& params, const ModelSpec& spec, const Tensorf& img,
              ConvAlgo algo = ConvAlgo::Direct);

Tensorf clamp_unit(const Tensorf& x);

inline constexpr float kSpadeEps = 1e-5f;
inline constexpr double kCriticSlope = 0.2;

}  // namespace dmnet
