#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dmnet/param_store.hpp"
#include "dmnet/tensor.hpp"

namespace dmnet {

using Rng = std::mt19937_64;

/// Zero-mean Gaussian with variance 2 / fan_in.
Tensorf he_init(const Shape& shape, int fan_in, Rng& rng);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  // Moment buffers aligned with the ParamStore's entry order.
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// One bias-corrected Adam update using each parameter's accumulated gradient.
/// Throws std::runtime_error naming the first trainable parameter without one.
void adam_step(ParamStore<float>& params, AdamState& state, double lr);

/// lr(t) = initial_lr * 0.5^min(floor(t / halve_every), num_halvings)
struct Schedule {
  double initial_lr = 1e-4;
  std::int64_t halve_every = 100000;
  int num_halvings = 4;
};

double lr_at(const Schedule& sched, std::int64_t t);

/// Shortened run with the same shape: halve every total_iterations / 10
/// steps (10^5 of 10^6 at full scale), still capped at num_halvings.
Schedule scaled_schedule(double initial_lr, std::int64_t total_iterations, int num_halvings = 4);

}  // namespace dmnet
