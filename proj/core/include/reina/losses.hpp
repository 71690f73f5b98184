#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reina/ops.hpp"
#include "reina/tape.hpp"

namespace reina {

// Position masks: nonzero = valid. An empty mask means every position is valid.
using MaskView = std::span<const std::uint8_t>;

struct LossConfig {
  double lambda = 0.05;      // weight of the L2 score penalty
  double epsilon = 0.5;      // monotonicity slack
  double bn_eps = 1e-5;
  double label_smoothing = 0.1;

  void validate() const;
};

// Per-position log-prob differences and their batch normalization.
struct InfoGainBatch {
  std::vector<double> delta;       // log p_t - log p_T at valid positions
  std::vector<double> normalized;  // BN(delta)

  static InfoGainBatch compute(std::span<const double> logp_partial, std::span<const double> logp_full,
                               MaskView mask, double bn_eps);
};

struct LossReport {
  double l_p = 0.0;
  double l_m = 0.0;
  double l_r = 0.0;
  double total = 0.0;
  std::vector<double> q;
  std::vector<double> delta;
  std::vector<double> bn_delta;
};

// Mean smoothed NLL over unmasked rows. Throws if every row is masked.
ad::Var cross_entropy_loss(ad::Var logprob_rows, std::span<const int> labels, MaskView mask, double smoothing);

// mean_n q_n * BN(logp_partial_n - logp_full_n) over valid positions, with BN
// statistics taken over all valid positions. Needs at least two of them.
ad::Var reina_policy_loss(ad::Var q, ad::Var logp_partial, ad::Var logp_full, MaskView mask, double bn_eps);

// (1/N) sum_n max(max_{m<n} q_m - q_n - eps, 0) over the valid subsequence.
ad::Var monotonicity_loss(ad::Var q, double eps, MaskView mask);

// (1/N) sum_n q_n^2 over valid positions.
ad::Var l2_policy_loss(ad::Var q, MaskView mask);

ad::Var reina_total(ad::Var l_p, ad::Var l_m, ad::Var l_r, double lambda);
double reina_total(double l_p, double l_m, double l_r, double lambda);

// KL(full || partial) per valid row, min-max scaled to [0,1] over the batch;
// all-equal batches map to 0.5.
std::vector<double> divergence_targets(const ad::Tensor& dist_partial, const ad::Tensor& dist_full, MaskView mask);

// Mean squared error between q and divergence_targets at valid positions.
ad::Var divergence_baseline_loss(ad::Var q, const ad::Tensor& dist_partial, const ad::Tensor& dist_full,
                                 MaskView mask);

// Valid indices of a mask of length n.
std::vector<std::size_t> valid_positions(MaskView mask, std::size_t n);

}  // namespace reina
