#include "reina/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace reina::ad {

void adamw_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
                OptimizerState& state, const AdamWConfig& cfg, double lr_override) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("adamw_step: parameter and gradient counts differ");
  }
  const double lr = lr_override > 0.0 ? lr_override : cfg.lr;
  if (!(lr > 0.0)) throw std::invalid_argument("adamw_step: lr must be positive");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape(), 0.0);
      state.v.emplace_back(p->shape(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i].shape() || state.m[i].shape() != grads[i].shape()) {
      throw std::invalid_argument("adamw_step: shape mismatch for parameter " + std::to_string(i));
    }
  }
  ++state.step;
  const double k = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, k);
  const double bc2 = 1.0 - std::pow(cfg.beta2, k);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= lr * cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double ss = 0.0;
  for (const Tensor& g : grads) {
    for (double x : g.data()) ss += x * x;
  }
  return std::sqrt(ss);
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& x : g.data()) x *= s;
    }
  }
  return norm;
}

}  // namespace reina::ad
