#include "dmnet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace dmnet {

Tensorf synthetic_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto img = Tensorf::zeros(Shape(1, 3, h, w));

  double base[3][3];  // per channel: offset, x slope, y slope
  for (auto& b : base) b[0] = 0.2 + 0.4 * u(rng), b[1] = 0.4 * (u(rng) - 0.5), b[2] = 0.4 * (u(rng) - 0.5);

  struct Disc { double cy, cx, r, col[3]; };
  std::vector<Disc> discs(6);
  for (auto& d : discs) {
    d.cy = u(rng) * h, d.cx = u(rng) * w, d.r = (0.08 + 0.2 * u(rng)) * std::min(h, w);
    for (double& c : d.col) c = u(rng);
  }
  const double freq = 2 * std::numbers::pi / (3.0 + 6.0 * u(rng));
  const double angle = u(rng) * std::numbers::pi;
  const double tex_amp = 0.12;
  const double bar_period = 5.0 + 4.0 * u(rng);
  std::normal_distribution<double> grain(0.0, 0.02);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / h, fx = static_cast<double>(x) / w;
      double px[3];
      for (int c = 0; c < 3; ++c) px[c] = base[c][0] + base[c][1] * fx + base[c][2] * fy;
      for (const auto& d : discs) {
        if ((y - d.cy) * (y - d.cy) + (x - d.cx) * (x - d.cx) < d.r * d.r) {
          for (int c = 0; c < 3; ++c) px[c] = 0.35 * px[c] + 0.65 * d.col[c];
        }
      }
      const double t = std::sin(freq * (x * std::cos(angle) + y * std::sin(angle)));
      const bool stripe = fx > 0.6 && std::fmod(y, bar_period) < bar_period / 2;
      const double g = grain(rng);
      for (int c = 0; c < 3; ++c) {
        double v = px[c] + tex_amp * t * (c == 1 ? 1.0 : 0.6) + g;
        if (stripe) v = 1.0 - 0.7 * v;
        img.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace dmnet
