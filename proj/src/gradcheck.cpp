#include "dmnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace dmnet {

GradCheckReport check_gradients(const LossFn& loss, std::vector<Tensord> inputs, double step,
                                std::size_t max_entries_per_input, std::uint64_t seed) {
  for (auto& t : inputs) {
    if (t.requires_grad()) t.drop_grad();
  }
  {
    Tape<double> tape;
    Tensord value = loss(tape, inputs);
    tape.backward(value);
  }

  std::mt19937_64 rng(seed);
  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensord& t = inputs[ti];
    if (!t.requires_grad()) continue;
    std::vector<double> analytic = t.has_grad()
                                       ? std::vector<double>(t.grad().begin(), t.grad().end())
                                       : std::vector<double>(t.numel(), 0.0);
    std::vector<std::size_t> order(t.numel());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (max_entries_per_input != 0 && order.size() > max_entries_per_input) {
      std::shuffle(order.begin(), order.end(), rng);
      order.resize(max_entries_per_input);
    }
    auto values = t.data();
    for (std::size_t idx : order) {
      const double saved = values[idx];
      Tape<double> off(false);
      values[idx] = saved + step;
      const double up = loss(off, inputs).item();
      values[idx] = saved - step;
      const double down = loss(off, inputs).item();
      values[idx] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(rel, report.max_rel_error);
        if (rel >= report.max_rel_error) {
          std::ostringstream os;
          os << "input[" << ti << "] entry " << idx << ": analytic " << a << " vs numeric "
             << numeric;
          report.worst = os.str();
        }
      }
    }
  }
  return report;
}

}  // namespace dmnet
