#include "reina/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reina {

using ad::Tensor;
using ad::Var;

void LossConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("loss config: lambda must be >= 0");
  if (!(epsilon >= 0.0)) throw std::invalid_argument("loss config: epsilon must be >= 0");
  if (!(bn_eps >= 0.0)) throw std::invalid_argument("loss config: bn_eps must be >= 0");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) {
    throw std::invalid_argument("loss config: label_smoothing must lie in [0, 1)");
  }
}

std::vector<std::size_t> valid_positions(MaskView mask, std::size_t n) {
  if (!mask.empty() && mask.size() != n) throw std::invalid_argument("mask length does not match sequence");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.empty() || mask[i]) idx.push_back(i);
  }
  return idx;
}

InfoGainBatch InfoGainBatch::compute(std::span<const double> logp_partial, std::span<const double> logp_full,
                                     MaskView mask, double bn_eps) {
  if (logp_partial.size() != logp_full.size()) throw std::invalid_argument("InfoGainBatch: length mismatch");
  InfoGainBatch b;
  for (std::size_t i : valid_positions(mask, logp_partial.size())) b.delta.push_back(logp_partial[i] - logp_full[i]);
  if (b.delta.empty()) return b;
  ad::Tape tape;
  b.normalized = ad::batch_norm(tape.constant(Tensor::vector(b.delta)), bn_eps).value().storage();
  return b;
}

namespace {

Var select(Var v, const std::vector<std::size_t>& idx) {
  if (idx.size() == v.size()) return v;
  return ad::gather(v, idx);
}

void require_vector(const Var& v, const char* what) {
  if (v.value().rank() != 1) throw std::invalid_argument(std::string(what) + ": expected a vector");
}

}  // namespace

Var cross_entropy_loss(Var logprob_rows, std::span<const int> labels, MaskView mask, double smoothing) {
  const std::size_t m = logprob_rows.value().rows();
  if (labels.size() != m) throw std::invalid_argument("cross_entropy_loss: rows/labels lengths disagree");
  if (!mask.empty() && mask.size() != m) throw std::invalid_argument("cross_entropy_loss: mask length disagrees");
  std::vector<double> w(m, 1.0);
  for (std::size_t i = 0; i < m && !mask.empty(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  return ad::smoothed_nll(logprob_rows, labels, w, smoothing);
}

Var reina_policy_loss(Var q, Var logp_partial, Var logp_full, MaskView mask, double bn_eps) {
  require_vector(q, "reina_policy_loss");
  if (q.shape() != logp_partial.shape() || q.shape() != logp_full.shape()) {
    throw std::invalid_argument("reina_policy_loss: q and log-prob sequences are not aligned");
  }
  const auto idx = valid_positions(mask, q.size());
  if (idx.size() < 2) throw std::invalid_argument("reina_policy_loss: need at least 2 valid positions");
  Var delta = ad::sub(select(logp_partial, idx), select(logp_full, idx));
  return ad::mean(ad::mul(select(q, idx), ad::batch_norm(delta, bn_eps)));
}

Var monotonicity_loss(Var q, double eps, MaskView mask) {
  require_vector(q, "monotonicity_loss");
  const auto idx = valid_positions(mask, q.size());
  if (idx.empty()) throw std::invalid_argument("monotonicity_loss: no valid positions");
  return ad::mean(ad::monotonicity_hinge(select(q, idx), eps));
}

Var l2_policy_loss(Var q, MaskView mask) {
  require_vector(q, "l2_policy_loss");
  const auto idx = valid_positions(mask, q.size());
  if (idx.empty()) throw std::invalid_argument("l2_policy_loss: no valid positions");
  return ad::mean(ad::square(select(q, idx)));
}

Var reina_total(Var l_p, Var l_m, Var l_r, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("reina_total: lambda must be >= 0");
  return ad::add(ad::add(l_p, l_m), ad::scale(l_r, lambda));
}

double reina_total(double l_p, double l_m, double l_r, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("reina_total: lambda must be >= 0");
  return l_p + l_m + lambda * l_r;
}

std::vector<double> divergence_targets(const Tensor& dist_partial, const Tensor& dist_full, MaskView mask) {
  if (dist_partial.shape() != dist_full.shape() || dist_full.rank() != 2) {
    throw std::invalid_argument("divergence_targets: distribution rows disagree");
  }
  const std::size_t v = dist_full.cols();
  std::vector<double> kl;
  for (std::size_t i : valid_positions(mask, dist_full.rows())) {
    double acc = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      const double p = dist_full.at(i, j);
      if (p > 0.0) acc += p * (std::log(p) - std::log(dist_partial.at(i, j)));
    }
    kl.push_back(acc);
  }
  if (kl.empty()) return kl;
  const auto [lo_it, hi_it] = std::minmax_element(kl.begin(), kl.end());
  const double lo = *lo_it, hi = *hi_it;
  for (double& x : kl) x = hi > lo ? (x - lo) / (hi - lo) : 0.5;
  return kl;
}

Var divergence_baseline_loss(Var q, const Tensor& dist_partial, const Tensor& dist_full, MaskView mask) {
  require_vector(q, "divergence_baseline_loss");
  if (dist_full.rows() != q.size()) throw std::invalid_argument("divergence_baseline_loss: length mismatch");
  const auto idx = valid_positions(mask, q.size());
  if (idx.empty()) throw std::invalid_argument("divergence_baseline_loss: no valid positions");
  const std::vector<double> y = divergence_targets(dist_partial, dist_full, mask);
  Var target = q.tape()->constant(Tensor::vector(y));
  return ad::mean(ad::square(ad::sub(select(q, idx), target)));
}

}  // namespace reina
