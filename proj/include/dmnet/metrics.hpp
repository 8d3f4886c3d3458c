#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dmnet/tensor.hpp"

namespace dmnet {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(peak^2 / mse), mse accumulated in double. RGB, no border crop.
double psnr(const Tensorf& a, const Tensorf& b, double peak = 1.0);

/// Mean windowed SSIM (11x11 Gaussian, sigma 1.5, valid windows), evaluated
/// with plain double-precision loops independent of the autograd path.
double ssim(const Tensorf& a, const Tensorf& b);
double ssim(const Tensord& a, const Tensord& b);

/// Single-window SSIM over each whole channel plane, averaged over planes.
double ssim_global(const Tensord& a, const Tensord& b);

struct MetricReport {
  struct Row {
    std::string name;
    double psnr_db;
    double ssim;
  };
  std::vector<Row> per_image;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;

  void add(std::string name, double psnr_db, double ssim_value);
  /// Aligned text table ending with a MEAN row.
  std::string table() const;
};

}  // namespace dmnet
