#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "reina/rng.hpp"
#include "reina/tape.hpp"

namespace reina::ad {

// Builds a scalar loss on `tape` from leaves bound to `params` (same order).
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  // Location of the worst coordinate.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients against central differences with step h on
// `samples` coordinates drawn uniformly over all parameters (every coordinate
// when samples >= total size). Error per coordinate is
// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// coordinates whose gradient is below the finite-difference roundoff level
// (about eps * |loss| / h) from dominating the maximum.
GradCheckResult grad_check(const LossBuilder& fn, std::vector<Tensor>& params,
                           std::size_t samples, Rng& rng, double h = 1e-5, double floor = 1e-4);

}  // namespace reina::ad
