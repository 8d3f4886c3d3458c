#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dmnet/tensor.hpp"

namespace dmnet {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst;  // "input[i] entry j: analytic a vs numeric b"
};

/// Builds a scalar loss from `inputs` on the supplied tape.
using LossFn = std::function<Tensord(Tape<double>&, const std::vector<Tensord>&)>;

/// Compares reverse-mode gradients with central differences in double precision.
///
/// Relative error per entry is |a - n| / max(|a|, |n|, 1e-8). Only inputs with
/// requires_grad are probed. When max_entries_per_input is nonzero a seeded
/// random subset of that many entries is probed per input.
GradCheckReport check_gradients(const LossFn& loss, std::vector<Tensord> inputs,
                                double step = 1e-4, std::size_t max_entries_per_input = 0,
                                std::uint64_t seed = 0);

}  // namespace dmnet
