#include "dmnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmnet {

Tensorf he_init(const Shape& shape, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw std::invalid_argument("he_init: fan_in must be positive");
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  std::vector<float> values(shape.numel());
  for (auto& v : values) v = static_cast<float>(dist(rng));
  return Tensorf::from_vector(shape, std::move(values), true);
}

void adam_step(ParamStore<float>& params, AdamState& state, double lr) {
  auto& entries = params.entries();
  for (const auto& e : entries) {
    if (e.tensor.requires_grad() && !e.tensor.has_grad()) {
      throw std::runtime_error("adam_step: missing gradient for parameter " + e.name);
    }
  }
  if (state.m.size() != entries.size()) {
    state.m.assign(entries.size(), {});
    state.v.assign(entries.size(), {});
    for (std::size_t i = 0; i < entries.size(); ++i) {
      state.m[i].assign(entries[i].tensor.numel(), 0.0f);
      state.v[i].assign(entries[i].tensor.numel(), 0.0f);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensorf& p = entries[i].tensor;
    if (!p.requires_grad()) continue;
    auto w = p.data();
    auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) {
      throw std::runtime_error("adam_step: moment buffer shape mismatch for " + entries[i].name);
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      m[k] = static_cast<float>(state.beta1 * m[k] + (1.0 - state.beta1) * gk);
      v[k] = static_cast<float>(state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk);
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      w[k] = static_cast<float>(w[k] - lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

double lr_at(const Schedule& sched, std::int64_t t) {
  if (t < 0) throw std::invalid_argument("lr_at: t must be >= 0");
  const std::int64_t halvings =
      std::min<std::int64_t>(t / std::max<std::int64_t>(sched.halve_every, 1), sched.num_halvings);
  return sched.initial_lr * std::ldexp(1.0, -static_cast<int>(halvings));
}

Schedule scaled_schedule(double initial_lr, std::int64_t total_iterations, int num_halvings) {
  return Schedule{initial_lr, std::max<std::int64_t>(total_iterations / 10, 1), num_halvings};
}

}  // namespace dmnet
