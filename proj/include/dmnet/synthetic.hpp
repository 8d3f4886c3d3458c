#pragma once

#include <cstdint>

#include "dmnet/tensor.hpp"

namespace dmnet {

/// Deterministic [1,3,h,w] test picture in [0,1]: smooth colour gradients,
/// hard-edged discs and bars, oriented sinusoidal texture and a fine grain.
/// Stands in for natural photographs in tests and demos.
Tensorf synthetic_image(int h, int w, std::uint64_t seed);

}  // namespace dmnet
