#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reina/tensor.hpp"

namespace reina::ad {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

// Decoupled-weight-decay Adam. Decay is applied as p -= lr*wd*p before the
// bias-corrected moment update, independent of the gradient.
// `lr_override` > 0 replaces cfg.lr for this step (used by schedules).
void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                OptimizerState& state, const AdamWConfig& cfg, double lr_override = 0.0);

// Global L2 norm of a gradient set, summed in order.
double global_norm(std::span<const Tensor> grads);

// Rescale so the global norm is at most max_norm. Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double max_norm);

}  // namespace reina::ad
