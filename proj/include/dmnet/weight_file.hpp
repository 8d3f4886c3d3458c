#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmnet/param_store.hpp"

namespace dmnet {

// Binary layout, little-endian:
//   "DMBN" | u32 version | u32 entry count
//   per entry: u32 name length | name bytes | 4 x u32 dims | f32 payload
//   u32 CRC-32 over every payload, in entry order

inline constexpr std::uint32_t kWeightFormatVersion = 1;

class WeightFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_weights(const ParamStore<float>& params);
/// Loaded tensors have requires_grad set.
ParamStore<float> decode_weights(std::span<const std::uint8_t> bytes);

void save_weights(const std::filesystem::path& path, const ParamStore<float>& params);
ParamStore<float> load_weights(const std::filesystem::path& path);

/// Throws WeightFileError naming the first entry of `expected` that is
/// missing from or shaped differently in `loaded`, or the first extra entry.
void check_compatible(const ParamStore<float>& expected, const ParamStore<float>& loaded);

}  // namespace dmnet
