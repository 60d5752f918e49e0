#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "entlm/lm/transformer.hpp"
#include "entlm/util.hpp"

namespace entlm::lm {

struct GradCheckEntry {
  std::string tensor;
  std::size_t index;  // into the flat parameter vector
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  // True when no parameter was checked; the bound then holds trivially.
  bool vacuous = true;
  std::string worst_tensor;
};

// Below the floor the error is measured absolutely, in units of the floor.
// Key biases have an identically zero gradient, so their numeric estimate
// is pure round-off.
inline constexpr double kRelErrorFloor = 1e-6;

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kRelErrorFloor});
}

// Central differences on up to `per_tensor` random coordinates of every
// tensor. The model is evaluated in double precision with dropout off.
inline GradCheckReport grad_check(Transformer<double>& model, const Batch& batch, double epsilon,
                                  std::size_t per_tensor, std::uint64_t seed) {
  model.set_training(false);
  GradCheckReport report;
  if (per_tensor == 0) return report;
  model.forward_backward(batch);
  const AlignedVector<double> analytic = model.grads();
  Rng rng(splitmix64(seed ^ 0x9c4ec4ULL));
  auto& p = model.params();
  for (const auto& t : model.layout().tensors) {
    const std::size_t take = std::min(per_tensor, t.size());
    std::vector<std::size_t> picks(t.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = t.offset + i;
    rng.shuffle(picks);
    picks.resize(take);
    std::sort(picks.begin(), picks.end());
    for (std::size_t idx : picks) {
      const double saved = p[idx];
      p[idx] = saved + epsilon;
      const double up = model.loss(batch);
      p[idx] = saved - epsilon;
      const double down = model.loss(batch);
      p[idx] = saved;
      const double numeric = (up - down) / (2 * epsilon);
      const double rel = relative_error(analytic[idx], numeric);
      report.entries.push_back({t.name, idx, analytic[idx], numeric, rel});
      if (report.vacuous || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = t.name;
      }
      report.vacuous = false;
    }
  }
  return report;
}

}  // namespace entlm::lm
