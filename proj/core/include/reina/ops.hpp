#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reina/rng.hpp"
#include "reina/tape.hpp"

// Differentiable dense ops over Tape variables. Every reduction sums in a
// fixed left-to-right order so results are bit-reproducible. Shape or domain
// violations throw std::invalid_argument; non-finite outputs throw
// std::domain_error.
namespace reina::ad {

enum class AttentionMask { kNone, kCausal };

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// x[m,n] + bias[n] broadcast over rows.
Var add_bias(Var x, Var bias);

Var gelu(Var x);
Var relu(Var x);
Var sigmoid(Var x);
Var square(Var x);

// Row-wise layer normalization with affine gamma/beta of shape [n].
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Multi-head scaled dot-product attention. Heads split the feature columns.
// With kCausal, query i attends to keys j <= i + (keys - queries).
Var attention(Var q, Var k, Var v, std::size_t heads, AttentionMask mask);

// Row lookup: table[V,d], ids in [0,V) -> [len(ids), d].
Var embedding(Var table, std::span<const int> ids);

// Numerically stable log-softmax over a vector, or over each row of a matrix.
Var log_softmax(Var x);

// out[i] = x[i, idx[i]]; x is [m,n], idx has length m.
Var pick(Var x, std::span<const int> idx);
// out[j] = v[idx[j]] for a rank-1 v.
Var gather(Var v, std::span<const std::size_t> idx);
// Rows [begin, end) of a matrix, or elements of a vector.
Var slice_rows(Var x, std::size_t begin, std::size_t end);
// Concatenate along axis 0 (all rank 1, or all rank 2 with equal columns).
Var concat(std::span<const Var> parts);
Var reshape(Var x, Shape shape);

Var sum(Var x);
Var mean(Var x);
Var dot(Var a, Var b);

// (v - mean) / sqrt(population variance + eps), no affine parameters.
Var batch_norm(Var v, double eps);

// term[n] = max(max_{m<n} q[m] - q[n] - eps, 0), term[0] = 0.
Var monotonicity_hinge(Var q, double eps);

// Inverted dropout with keep-probability 1-p; identity when p == 0.
Var dropout(Var x, double p, Rng& rng);

// Mean over rows with weight > 0 of the label-smoothed negative log-likelihood
// (1-s)*(-logp[label]) + s*mean_v(-logp[v]), weighted by `weights`.
Var smoothed_nll(Var logp, std::span<const int> labels, std::span<const double> weights,
                 double smoothing);

}  // namespace reina::ad
