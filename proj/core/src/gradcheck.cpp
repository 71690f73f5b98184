#include "reina/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace reina::ad {
namespace {

double eval_loss(const LossBuilder& fn, const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const Tensor& p : params) leaves.push_back(tape.leaf(p, false));
  return fn(tape, leaves).value().item();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& fn, std::vector<Tensor>& params,
                           std::size_t samples, Rng& rng, double h, double floor) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& p : params) leaves.push_back(tape.leaf(p, true));
    Var loss = fn(tape, leaves);
    Gradients g = tape.backward(loss);
    for (const Var& l : leaves) analytic.push_back(g[l]);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const Tensor& p : params) total += p.size();
  if (samples >= total) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (std::size_t j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
    }
  } else {
    for (std::size_t s = 0; s < samples; ++s) {
      std::size_t flat = rng.below(total);
      std::size_t i = 0;
      while (flat >= params[i].size()) flat -= params[i++].size();
      coords.emplace_back(i, flat);
    }
  }

  GradCheckResult res;
  for (auto [i, j] : coords) {
    const double orig = params[i][j];
    params[i][j] = orig + h;
    const double fp = eval_loss(fn, params);
    params[i][j] = orig - h;
    const double fm = eval_loss(fn, params);
    params[i][j] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i][j];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
    ++res.coordinates;
    if (err > res.max_rel_error || res.coordinates == 1) {
      res.max_rel_error = err;
      res.worst_param = i;
      res.worst_index = j;
      res.worst_analytic = a;
      res.worst_numeric = numeric;
    }
  }
  return res;
}

}  // namespace reina::ad
