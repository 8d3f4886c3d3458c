#pragma once

#include <filesystem>
#include <span>

#include "dmnet/tensor.hpp"

namespace dmnet {

/// Reads any PNG as 8-bit RGB, mapped to [0,1] by /255. Returns [1,3,H,W].
Tensorf load_png(const std::filesystem::path& path);

/// Writes sample `index` of a [N,3,H,W] tensor as 8-bit RGB, rounding
/// round(255 * clamp(v, 0, 1)).
void save_png(const std::filesystem::path& path, const Tensorf& img, int index = 0);

/// Writes an 8-bit grayscale PNG from h*w values already in [0,1].
void save_gray_png(const std::filesystem::path& path, std::span<const float> values, int h, int w);

/// The 8-bit round trip applied by save_png followed by load_png.
Tensorf quantize_8bit(const Tensorf& img);

}  // namespace dmnet
