#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>

#include "dmnet/optim.hpp"
#include "dmnet/tensor.hpp"

namespace dmnet {

enum class DegradeMode { SuperResolution, Enhance, OldPhoto };

std::string_view to_string(DegradeMode mode);
DegradeMode parse_degrade_mode(std::string_view text);  // "sr" | "enhance" | "oldphoto"

/// Closed interval sampled uniformly.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const;
};

struct DegradationSpec {
  DegradeMode mode = DegradeMode::SuperResolution;
  int scale = 4;
  int jpeg_quality = 20;
  // old-photo model
  Range fade{0.1, 0.5};
  Range gray_level{0.4, 0.7};
  Range saturation{0.4, 0.9};
  Range noise_sigma{0.01, 0.06};
  std::uint64_t seed = 0;

  void validate() const;
};

/// Separable bicubic (a = -0.5) resampling with edge clamping. When shrinking,
/// the kernel is widened by the scale factor (antialiased, as in MATLAB
/// imresize). Output clamped to [0,1].
Tensorf bicubic_resize(const Tensorf& img, int out_h, int out_w);

/// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);

/// Baseline-JPEG quantisation round trip: YCbCr, 4:2:0, 8x8 DCT with the
/// Annex K tables scaled by the libjpeg quality rule, 8-bit output.
Tensorf jpeg_degrade(const Tensorf& img, int quality);

/// Annex K table scaled for `quality`, row-major 8x8 (libjpeg rule).
std::array<int, 64> jpeg_quant_table(bool chroma, int quality);

struct OldPhotoParams {
  double fade = 0.0;        // 0 keeps contrast, 1 collapses to gray_level
  double gray_level = 0.5;
  double saturation = 1.0;  // 1 keeps colour, 0 is grayscale
  double noise_sigma = 0.0; // std of the pre-blur noise field
};

OldPhotoParams sample_oldphoto(const DegradationSpec& spec, Rng& rng);

/// fade -> saturation -> 3x3 box-blurred monochrome Gaussian noise -> clamp.
Tensorf oldphoto_apply(const Tensorf& img, const OldPhotoParams& params, Rng& rng);
Tensorf oldphoto_degrade(const Tensorf& img, const DegradationSpec& spec, Rng& rng);

struct TrainingPair {
  Tensorf input;
  Tensorf target;
};

/// sr:       (jpeg(bicubic down), hr)
/// enhance:  (bicubic up(bicubic down), hr)
/// oldphoto: (oldphoto_degrade(hr), hr)
TrainingPair make_pair(const Tensorf& hr, const DegradationSpec& spec, Rng& rng);

}  // namespace dmnet
