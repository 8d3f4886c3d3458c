#include "dmnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "dmnet/losses.hpp"

namespace dmnet {
namespace {

template <typename T>
void require_equal(const char* what, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

template <typename T>
double windowed_ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require_equal("ssim", a, b);
  const Shape& s = a.shape();
  const int win = SsimConstants::kWindow;
  if (s.h() < win || s.w() < win) {
    throw ShapeError("ssim: image " + s.str() + " smaller than the window");
  }
  const auto g = gaussian_window();
  const double c1 = SsimConstants::kC1, c2 = SsimConstants::kC2;
  const int oh = s.h() - win + 1, ow = s.w() - win + 1;
  double total = 0;
  std::size_t count = 0;
  for (int n = 0; n < s.n(); ++n) {
    for (int c = 0; c < s.c(); ++c) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
          for (int dy = 0; dy < win; ++dy) {
            for (int dx = 0; dx < win; ++dx) {
              const double w = g[static_cast<std::size_t>(dy) * win + dx];
              const double va = a.at(n, c, y + dy, x + dx);
              const double vb = b.at(n, c, y + dy, x + dx);
              ma += w * va;
              mb += w * vb;
              saa += w * va * va;
              sbb += w * vb * vb;
              sab += w * va * vb;
            }
          }
          const double var_a = saa - ma * ma;
          const double var_b = sbb - mb * mb;
          const double cov = sab - ma * mb;
          total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
          ++count;
        }
      }
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace

double psnr(const Tensorf& a, const Tensorf& b, double peak) {
  require_equal("psnr", a, b);
  if (peak <= 0) throw std::invalid_argument("psnr: peak must be positive");
  double mse = 0;
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(av.size());
  if (mse == 0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensorf& a, const Tensorf& b) { return windowed_ssim(a, b); }
double ssim(const Tensord& a, const Tensord& b) { return windowed_ssim(a, b); }

double ssim_global(const Tensord& a, const Tensord& b) {
  require_equal("ssim_global", a, b);
  const Shape& s = a.shape();
  const std::size_t plane = static_cast<std::size_t>(s.h()) * s.w();
  const double c1 = SsimConstants::kC1, c2 = SsimConstants::kC2;
  double total = 0;
  for (std::size_t p = 0; p < static_cast<std::size_t>(s.n()) * s.c(); ++p) {
    const double* pa = a.ptr() + p * plane;
    const double* pb = b.ptr() + p * plane;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      ma += pa[i];
      mb += pb[i];
    }
    ma /= plane;
    mb /= plane;
    double va = 0, vb = 0, cov = 0;
    for (std::size_t i = 0; i < plane; ++i) {
      va += (pa[i] - ma) * (pa[i] - ma);
      vb += (pb[i] - mb) * (pb[i] - mb);
      cov += (pa[i] - ma) * (pb[i] - mb);
    }
    va /= plane;
    vb /= plane;
    cov /= plane;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(static_cast<std::size_t>(s.n()) * s.c());
}

void MetricReport::add(std::string name, double psnr_db, double ssim_value) {
  per_image.push_back({std::move(name), psnr_db, ssim_value});
  double ps = 0, ss = 0;
  for (const auto& r : per_image) {
    ps += r.psnr_db;
    ss += r.ssim;
  }
  mean_psnr_db = ps / static_cast<double>(per_image.size());
  mean_ssim = ss / static_cast<double>(per_image.size());
}

std::string MetricReport::table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-32s %12s %10s\n", "image", "PSNR(dB)", "SSIM");
  os << line;
  for (const auto& r : per_image) {
    std::snprintf(line, sizeof line, "%-32s %12.4f %10.6f\n", r.name.c_str(), r.psnr_db, r.ssim);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-32s %12.4f %10.6f\n", "MEAN", mean_psnr_db, mean_ssim);
  os << line;
  return os.str();
}

}  // namespace dmnet
