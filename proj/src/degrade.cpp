#include "dmnet/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmnet {

std::string_view to_string(DegradeMode mode) {
  switch (mode) {
    case DegradeMode::SuperResolution: return "sr";
    case DegradeMode::Enhance: return "enhance";
    case DegradeMode::OldPhoto: return "oldphoto";
  }
  return "?";
}

DegradeMode parse_degrade_mode(std::string_view text) {
  if (text == "sr") return DegradeMode::SuperResolution;
  if (text == "enhance") return DegradeMode::Enhance;
  if (text == "oldphoto") return DegradeMode::OldPhoto;
  throw std::invalid_argument("unknown degradation mode '" + std::string(text) +
                              "' (expected sr|enhance|oldphoto)");
}

double Range::sample(Rng& rng) const {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void DegradationSpec::validate() const {
  if (scale < 1) throw std::invalid_argument("degradation.scale must be >= 1");
  if (jpeg_quality < 1 || jpeg_quality > 100) {
    throw std::invalid_argument("degradation.jpeg_quality must be in [1,100]");
  }
  for (const Range* r : {&fade, &gray_level, &saturation, &noise_sigma}) {
    if (r->hi < r->lo) throw std::invalid_argument("degradation range has hi < lo");
  }
  if (noise_sigma.lo < 0) throw std::invalid_argument("degradation.noise_sigma must be >= 0");
}

// ---------------------------------------------------------------------------
// bicubic

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x < 1.0) return ((a + 2) * x - (a + 3)) * x * x + 1;
  if (x < 2.0) return ((a * x - 5 * a) * x + 8 * a) * x - 4 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<int> index;
  std::vector<double> weight;
  int per_output = 0;
};

Taps resample_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double stretch = std::max(1.0, scale);
  const double support = 2.0 * stretch;
  Taps taps;
  taps.per_output = static_cast<int>(std::ceil(2 * support)) + 1;
  taps.index.resize(static_cast<std::size_t>(out_size) * taps.per_output);
  taps.weight.resize(taps.index.size());
  for (int o = 0; o < out_size; ++o) {
    const double center = (o + 0.5) * scale - 0.5;
    const int first = static_cast<int>(std::floor(center - support)) + 1;
    double total = 0;
    for (int k = 0; k < taps.per_output; ++k) {
      const int i = first + k;
      const double w = cubic_kernel((i - center) / stretch);
      const std::size_t slot = static_cast<std::size_t>(o) * taps.per_output + k;
      taps.index[slot] = std::clamp(i, 0, in_size - 1);
      taps.weight[slot] = w;
      total += w;
    }
    for (int k = 0; k < taps.per_output; ++k) {
      taps.weight[static_cast<std::size_t>(o) * taps.per_output + k] /= total;
    }
  }
  return taps;
}

}  // namespace

Tensorf bicubic_resize(const Tensorf& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("bicubic_resize: target size must be positive, got " +
                                std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const Shape& s = img.shape();
  const Taps th = resample_taps(s.h(), out_h);
  const Taps tw = resample_taps(s.w(), out_w);
  auto out = Tensorf::zeros(Shape(s.n(), s.c(), out_h, out_w));
  std::vector<double> rows(static_cast<std::size_t>(s.h()) * out_w);
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      // horizontal pass
      for (int y = 0; y < s.h(); ++y) {
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (int k = 0; k < tw.per_output; ++k) {
            const std::size_t slot = static_cast<std::size_t>(x) * tw.per_output + k;
            acc += tw.weight[slot] * img.at(n, c, y, tw.index[slot]);
          }
          rows[static_cast<std::size_t>(y) * out_w + x] = acc;
        }
      }
      // vertical pass
      for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (int k = 0; k < th.per_output; ++k) {
            const std::size_t slot = static_cast<std::size_t>(y) * th.per_output + k;
            acc += th.weight[slot] * rows[static_cast<std::size_t>(th.index[slot]) * out_w + x];
          }
          out.at(n, c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// JPEG

namespace {

constexpr std::array<int, 64> kLumaTable{
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChromaTable{
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct Plane {
  int h = 0, w = 0;
  std::vector<double> v;
  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// cos((2x + 1) u pi / 16) * C(u) / 2
std::array<double, 64> dct_basis() {
  std::array<double, 64> b{};
  for (int u = 0; u < 8; ++u) {
    const double cu = u == 0 ? std::sqrt(0.5) : 1.0;
    for (int x = 0; x < 8; ++x) {
      b[u * 8 + x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
  }
  return b;
}

void quantize_plane(Plane& p, const std::array<int, 64>& table) {
  static const std::array<double, 64> basis = dct_basis();
  double block[64], tmp[64], coef[64];
  for (int by = 0; by < p.h; by += 8) {
    for (int bx = 0; bx < p.w; bx += 8) {
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) block[y * 8 + x] = p.at(by + y, bx + x) - 128.0;
      // forward: rows then columns
      for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
          double s = 0;
          for (int x = 0; x < 8; ++x) s += basis[u * 8 + x] * block[y * 8 + x];
          tmp[y * 8 + u] = s;
        }
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          double s = 0;
          for (int y = 0; y < 8; ++y) s += basis[v * 8 + y] * tmp[y * 8 + u];
          const int q = table[v * 8 + u];
          coef[v * 8 + u] = std::round(s / q) * q;
        }
      // inverse
      for (int v = 0; v < 8; ++v)
        for (int x = 0; x < 8; ++x) {
          double s = 0;
          for (int u = 0; u < 8; ++u) s += basis[u * 8 + x] * coef[v * 8 + u];
          tmp[v * 8 + x] = s;
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          double s = 0;
          for (int v = 0; v < 8; ++v) s += basis[v * 8 + y] * tmp[v * 8 + x];
          p.at(by + y, bx + x) = s + 128.0;
        }
    }
  }
}

Plane subsample(const Plane& p) {
  Plane out{p.h / 2, p.w / 2, {}};
  out.v.resize(static_cast<std::size_t>(out.h) * out.w);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) +
                             p.at(2 * y + 1, 2 * x) + p.at(2 * y + 1, 2 * x + 1));
    }
  return out;
}

// Chroma sample j sits at full-resolution coordinate 2j + 0.5.
double upsampled(const Plane& p, int y, int x) {
  const double sy = std::clamp((y - 0.5) / 2.0, 0.0, p.h - 1.0);
  const double sx = std::clamp((x - 0.5) / 2.0, 0.0, p.w - 1.0);
  const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
  const int y1 = std::min(y0 + 1, p.h - 1), x1 = std::min(x0 + 1, p.w - 1);
  const double fy = sy - y0, fx = sx - x0;
  return (1 - fy) * ((1 - fx) * p.at(y0, x0) + fx * p.at(y0, x1)) +
         fy * ((1 - fx) * p.at(y1, x0) + fx * p.at(y1, x1));
}

}  // namespace

std::array<int, 64> jpeg_quant_table(bool chroma, int quality) {
  if (quality < 1 || quality > 100) {
    throw std::invalid_argument("jpeg quality must be in [1,100], got " + std::to_string(quality));
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChromaTable : kLumaTable;
  std::array<int, 64> out{};
  for (int i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return out;
}

Tensorf jpeg_degrade(const Tensorf& img, int quality) {
  const auto luma_q = jpeg_quant_table(false, quality);
  const auto chroma_q = jpeg_quant_table(true, quality);
  const Shape& s = img.shape();
  if (s.c() != 3) throw ShapeError("jpeg_degrade: expected 3 channels, got " + std::to_string(s.c()));
  const int ph = (s.h() + 15) / 16 * 16;
  const int pw = (s.w() + 15) / 16 * 16;
  auto out = Tensorf::zeros(s);
  for (int n = 0; n < s.n(); ++n) {
    Plane yp{ph, pw, std::vector<double>(static_cast<std::size_t>(ph) * pw)};
    Plane cb = yp, cr = yp;
    for (int y = 0; y < ph; ++y) {
      for (int x = 0; x < pw; ++x) {
        const int sy = std::min(y, s.h() - 1), sx = std::min(x, s.w() - 1);
        const double r = 255.0 * img.at(n, 0, sy, sx);
        const double g = 255.0 * img.at(n, 1, sy, sx);
        const double b = 255.0 * img.at(n, 2, sy, sx);
        yp.at(y, x) = 0.299 * r + 0.587 * g + 0.114 * b;
        cb.at(y, x) = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        cr.at(y, x) = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
      }
    }
    Plane cb_small = subsample(cb), cr_small = subsample(cr);
    quantize_plane(yp, luma_q);
    quantize_plane(cb_small, chroma_q);
    quantize_plane(cr_small, chroma_q);
    for (int y = 0; y < s.h(); ++y) {
      for (int x = 0; x < s.w(); ++x) {
        const double yy = yp.at(y, x);
        const double u = upsampled(cb_small, y, x) - 128.0;
        const double v = upsampled(cr_small, y, x) - 128.0;
        const double rgb[3] = {yy + 1.402 * v, yy - 0.344136 * u - 0.714136 * v, yy + 1.772 * u};
        for (int c = 0; c < 3; ++c) {
          out.at(n, c, y, x) = static_cast<float>(std::clamp(std::round(rgb[c]), 0.0, 255.0) / 255.0);
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// old photo

OldPhotoParams sample_oldphoto(const DegradationSpec& spec, Rng& rng) {
  OldPhotoParams p;
  p.fade = spec.fade.sample(rng);
  p.gray_level = spec.gray_level.sample(rng);
  p.saturation = spec.saturation.sample(rng);
  p.noise_sigma = spec.noise_sigma.sample(rng);
  return p;
}

Tensorf oldphoto_apply(const Tensorf& img, const OldPhotoParams& params, Rng& rng) {
  const Shape& s = img.shape();
  if (s.c() != 3) throw ShapeError("oldphoto: expected 3 channels, got " + std::to_string(s.c()));
  auto out = img.clone();
  out.set_requires_grad(false);
  const double f = params.fade, g = params.gray_level, sat = params.saturation;
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  std::vector<double> noise(plane), blurred(plane);
  for (int n = 0; n < s.n(); ++n) {
    for (int y = 0; y < s.h(); ++y) {
      for (int x = 0; x < s.w(); ++x) {
        double px[3];
        for (int c = 0; c < 3; ++c) px[c] = (1.0 - f) * img.at(n, c, y, x) + f * g;
        const double luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        for (int c = 0; c < 3; ++c) {
          out.at(n, c, y, x) = static_cast<float>(sat * px[c] + (1.0 - sat) * luma);
        }
      }
    }
    if (params.noise_sigma > 0) {
      std::normal_distribution<double> dist(0.0, params.noise_sigma);
      for (double& v : noise) v = dist(rng);
      for (int y = 0; y < s.h(); ++y) {
        for (int x = 0; x < s.w(); ++x) {
          double acc = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = std::clamp(y + dy, 0, s.h() - 1);
              const int xx = std::clamp(x + dx, 0, s.w() - 1);
              acc += noise[static_cast<std::size_t>(yy) * s.w() + xx];
            }
          blurred[static_cast<std::size_t>(y) * s.w() + x] = acc / 9.0;
        }
      }
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < s.h(); ++y)
          for (int x = 0; x < s.w(); ++x) {
            out.at(n, c, y, x) += static_cast<float>(blurred[static_cast<std::size_t>(y) * s.w() + x]);
          }
    }
  }
  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

Tensorf oldphoto_degrade(const Tensorf& img, const DegradationSpec& spec, Rng& rng) {
  const OldPhotoParams p = sample_oldphoto(spec, rng);
  return oldphoto_apply(img, p, rng);
}

TrainingPair make_pair(const Tensorf& hr, const DegradationSpec& spec, Rng& rng) {
  spec.validate();
  const Shape& s = hr.shape();
  if (s.h() % spec.scale != 0 || s.w() % spec.scale != 0) {
    throw ShapeError("make_pair: HR size " + std::to_string(s.h()) + "x" + std::to_string(s.w()) +
                     " not divisible by " + std::to_string(spec.scale));
  }
  const int lh = s.h() / spec.scale, lw = s.w() / spec.scale;
  switch (spec.mode) {
    case DegradeMode::SuperResolution:
      return {jpeg_degrade(bicubic_resize(hr, lh, lw), spec.jpeg_quality), hr};
    case DegradeMode::Enhance:
      return {bicubic_resize(bicubic_resize(hr, lh, lw), s.h(), s.w()), hr};
    case DegradeMode::OldPhoto:
      return {oldphoto_degrade(hr, spec, rng), hr};
  }
  throw std::logic_error("make_pair: unhandled mode");
}

}  // namespace dmnet
