#include "reina/gradcheck_suite.hpp"

#include <cmath>

#include "reina/losses.hpp"
#include "reina/model.hpp"
#include "reina/ops.hpp"
#include "reina/trainer.hpp"

namespace reina {

using ad::LossBuilder;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::size_t kAll = static_cast<std::size_t>(-1);

// Random tensor with entries in [lo, hi], optionally kept away from zero
// so kinked ops are not straddled by the finite-difference step.
Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, double min_abs = 0.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::abs(x) < min_abs);
  }
  return t;
}

// Distinct scores in (0, 1) on a shuffled grid whose pairwise gaps stay at
// least 1e-3 away from 0 and from eps = 0.1, so no hinge or running-max kink
// lies within the finite-difference step.
Tensor hinge_scores(Rng& rng, std::size_t n) {
  Tensor t({n});
  for (std::size_t i = 0; i < n; ++i) t[i] = 0.01 + 0.0197 * static_cast<double>(i);
  for (std::size_t i = n; i > 1; --i) std::swap(t[i - 1], t[rng.below(i)]);
  return t;
}

// Reduces an arbitrary-shaped output to a scalar with fixed random weights so
// every output coordinate carries a distinct gradient.
Var weighted_sum(Var x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(x.shape());
  for (double& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return ad::sum(ad::mul(x, x.tape()->constant(std::move(w))));
}

struct Suite {
  std::uint64_t seed;
  double h;
  std::vector<GradCheckCase> out;

  void check(const std::string& name, const LossBuilder& fn, std::vector<Tensor> params, std::size_t samples = kAll) {
    Rng rng(Rng::derive(seed, out.size() + 1000));
    out.push_back({name, ad::grad_check(fn, params, samples, rng, h)});
  }
};

TaskParams tiny_task() {
  TaskParams t;
  t.kind = TaskKind::kBlockReorder;
  t.source_vocab = 3;
  t.target_vocab = 3;
  t.tokens = 3;
  t.frames_per_token = 2;
  t.noise_symbols = 2;
  t.noise_rate = 0.2;
  return t;
}

ModelParams tiny_model(const TaskParams& task, std::uint64_t seed) {
  ArchConfig a;
  a.d_model = 8;
  a.heads = 2;
  a.policy_heads = 2;
  a.encoder_layers = 1;
  a.decoder_layers = 1;
  a.policy_layers = 1;
  a.ff_mult = 2;
  a.max_frames = task.total_frames();
  a.max_tokens = task.tokens + 2;
  a.bind_task(task);
  ModelParams mp = init_params(a, seed);
  // Random biases and gains so no coordinate sits at an exactly symmetric point.
  Rng rng(Rng::derive(seed, 77));
  for (std::size_t i = 0; i < mp.tensors.size(); ++i) {
    if (mp.tensors[i].rank() == 1) {
      for (double& x : mp.tensors[i].data()) x += rng.uniform(-0.2, 0.2);
    }
  }
  // Larger output scale than the near-uniform training init keeps policy scores off 0.5.
  for (double& x : mp.tensors[mp.layout.out_w].data()) x *= 10.0;
  return mp;
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite(std::uint64_t seed, double h) {
  Suite s{seed, h, {}};
  Rng rng(seed);
  auto R = [&](Shape shape, double lo = -1.0, double hi = 1.0, double min_abs = 0.0) {
    return random_tensor(rng, std::move(shape), lo, hi, min_abs);
  };
  const std::uint64_t ws = Rng::derive(seed, 1);

  s.check("matmul", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::matmul(p[0], p[1]), ws); },
          {R({5, 6}), R({6, 5})});
  s.check("add", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::add(p[0], p[1]), ws); },
          {R({5, 6}), R({5, 6})});
  s.check("sub", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::sub(p[0], p[1]), ws); },
          {R({5, 6}), R({5, 6})});
  s.check("mul", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::mul(p[0], p[1]), ws); },
          {R({5, 6}), R({5, 6})});
  s.check("scale", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::scale(p[0], -1.7), ws); },
          {R({50})});
  s.check("add_bias", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::add_bias(p[0], p[1]), ws); },
          {R({8, 7}), R({7})});
  s.check("gelu", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::gelu(p[0]), ws); },
          {R({10, 6}, -3, 3)});
  s.check("relu", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::relu(p[0]), ws); },
          {R({10, 6}, -1, 1, 0.05)});
  s.check("sigmoid", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::sigmoid(p[0]), ws); },
          {R({50}, -4, 4)});
  s.check("square", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::square(p[0]), ws); }, {R({50})});
  s.check("layer_norm",
          [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::layer_norm(p[0], p[1], p[2]), ws); },
          {R({8, 6}), R({6}, 0.5, 1.5), R({6})});
  s.check("attention",
          [&](Tape&, std::span<const Var> p) {
            return weighted_sum(ad::attention(p[0], p[1], p[2], 2, ad::AttentionMask::kNone), ws);
          },
          {R({3, 4}), R({5, 4}), R({5, 4})});
  s.check("attention_causal",
          [&](Tape&, std::span<const Var> p) {
            return weighted_sum(ad::attention(p[0], p[1], p[2], 2, ad::AttentionMask::kCausal), ws);
          },
          {R({5, 4}), R({5, 4}), R({5, 4})});
  const std::vector<int> ids{2, 0, 9, 3, 2, 7, 5, 5, 1, 8, 4, 6};
  s.check("embedding", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::embedding(p[0], ids), ws); },
          {R({10, 6})});
  s.check("log_softmax_vector", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::log_softmax(p[0]), ws); },
          {R({50}, -2, 2)});
  s.check("log_softmax_rows", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::log_softmax(p[0]), ws); },
          {R({10, 6}, -2, 2)});
  const std::vector<int> labels{1, 4, 0, 5, 2, 2, 3, 0, 1, 5};
  s.check("pick", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::pick(p[0], labels), ws); },
          {R({10, 6})});
  std::vector<std::size_t> gidx;
  for (std::size_t i = 0; i < 60; ++i) gidx.push_back((i * 7) % 50);
  s.check("gather", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::gather(p[0], gidx), ws); },
          {R({50})});
  s.check("slice_rows", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::slice_rows(p[0], 2, 7), ws); },
          {R({10, 6})});
  s.check("concat",
          [&](Tape&, std::span<const Var> p) {
            const std::vector<Var> parts{p[0], p[1]};
            return weighted_sum(ad::concat(parts), ws);
          },
          {R({4, 6}), R({5, 6})});
  s.check("reshape", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::reshape(p[0], {60}), ws); },
          {R({6, 10})});
  s.check("sum", [&](Tape&, std::span<const Var> p) { return ad::sum(ad::square(p[0])); }, {R({6, 10})});
  s.check("mean", [&](Tape&, std::span<const Var> p) { return ad::mean(ad::square(p[0])); }, {R({6, 10})});
  s.check("dot", [&](Tape&, std::span<const Var> p) { return ad::dot(p[0], p[1]); }, {R({50}), R({50})});
  s.check("batch_norm", [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::batch_norm(p[0], 1e-5), ws); },
          {R({50})});
  s.check("monotonicity_hinge",
          [&](Tape&, std::span<const Var> p) { return weighted_sum(ad::monotonicity_hinge(p[0], 0.1), ws); },
          {hinge_scores(rng, 50)});
  s.check("dropout",
          [&](Tape&, std::span<const Var> p) {
            Rng drop(Rng::derive(seed, 5));
            return weighted_sum(ad::dropout(p[0], 0.3, drop), ws);
          },
          {R({10, 6})});
  std::vector<double> weights(labels.size(), 1.0);
  weights[3] = 0.0;
  s.check("smoothed_nll",
          [&](Tape&, std::span<const Var> p) {
            return ad::smoothed_nll(ad::log_softmax(p[0]), labels, weights, 0.1);
          },
          {R({10, 6}, -2, 2)});

  // Losses; the mask excludes a few positions from every statistic.
  auto make_mask = [](std::size_t n) {
    std::vector<std::uint8_t> m(n, 1);
    for (std::size_t i = 3; i < n; i += 7) m[i] = 0;
    return m;
  };
  const std::vector<std::uint8_t> mask10 = make_mask(10), mask20 = make_mask(20), mask50 = make_mask(50);
  s.check("cross_entropy_loss",
          [&](Tape&, std::span<const Var> p) { return cross_entropy_loss(ad::log_softmax(p[0]), labels, mask10, 0.1); },
          {R({10, 6}, -2, 2)});
  s.check("reina_policy_loss",
          [&](Tape&, std::span<const Var> p) {
            return reina_policy_loss(ad::sigmoid(p[0]), p[1], p[2], mask20, 1e-5);
          },
          {R({20}, -2, 2), R({20}, -3, 0), R({20}, -3, 0)});
  s.check("monotonicity_loss",
          [&](Tape&, std::span<const Var> p) { return monotonicity_loss(p[0], 0.1, mask50); },
          {hinge_scores(rng, 50)});
  s.check("l2_policy_loss", [&](Tape&, std::span<const Var> p) { return l2_policy_loss(p[0], mask50); }, {R({50})});
  s.check("reina_total",
          [&](Tape&, std::span<const Var> p) {
            return reina_total(ad::sum(p[0]), ad::sum(ad::square(p[0])), ad::dot(p[0], p[0]), 0.05);
          },
          {R({50})});
  {
    Rng drng(Rng::derive(seed, 9));
    auto dist = [&](std::size_t rows, std::size_t cols) {
      Tensor t({rows, cols});
      for (std::size_t r = 0; r < rows; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += (t.at(r, c) = drng.uniform(0.05, 1.0));
        for (std::size_t c = 0; c < cols; ++c) t.at(r, c) /= z;
      }
      return t;
    };
    const Tensor dp = dist(50, 4), df = dist(50, 4);
    s.check("divergence_baseline_loss",
            [&, dp, df](Tape&, std::span<const Var> p) {
              return divergence_baseline_loss(ad::sigmoid(p[0]), dp, df, mask50);
            },
            {R({50}, -2, 2)});
  }

  // Full objectives on a small model.
  const TaskParams task = tiny_task();
  const Dataset data = gen_task(task, 6, Rng::derive(seed, 3));
  const ModelParams mp = tiny_model(task, Rng::derive(seed, 4));
  std::vector<const Utterance*> utts{&data.utterances[0], &data.utterances[1]};
  std::vector<std::vector<int>> frames{utts[0]->frames,
                                       std::vector<int>(utts[1]->frames.begin(), utts[1]->frames.begin() + 3)};
  std::vector<Tensor> base, policy;
  std::vector<std::size_t> base_idx, policy_idx;
  for (std::size_t i = 0; i < mp.tensors.size(); ++i) {
    if (mp.groups[i] == ParamGroup::kPolicy) {
      policy.push_back(mp.tensors[i]);
      policy_idx.push_back(i);
    } else {
      base.push_back(mp.tensors[i]);
      base_idx.push_back(i);
    }
  }
  s.check("stage1_loss",
          [&](Tape& tape, std::span<const Var> p) {
            std::vector<Var> leaves(mp.tensors.size());
            for (std::size_t k = 0; k < base_idx.size(); ++k) leaves[base_idx[k]] = p[k];
            for (std::size_t k : policy_idx) leaves[k] = tape.leaf(mp.tensors[k], false);
            const ModelGraph g(mp, leaves);
            Rng drop_rng(Rng::derive(seed, 6));
            DropoutCtx drop{0.1, &drop_rng};
            return ce_batch_loss(g, utts, frames, 1.0, 0.1, &drop).total;
          },
          base);
  for (PolicyLossKind kind : {PolicyLossKind::kReina, PolicyLossKind::kDivergence}) {
    const std::vector<PolicySample> batch{{utts[0], 2}, {utts[1], 5}, {&data.utterances[2], 6}};
    s.check("stage3_loss_" + to_string(kind),
            [&, batch, kind](Tape& tape, std::span<const Var> p) {
              std::vector<Var> leaves(mp.tensors.size());
              for (std::size_t k : base_idx) leaves[k] = tape.leaf(mp.tensors[k], false);
              for (std::size_t k = 0; k < policy_idx.size(); ++k) leaves[policy_idx[k]] = p[k];
              const ModelGraph g(mp, leaves);
              LossConfig lc;
              lc.epsilon = 0.01;
              return policy_batch_loss(g, batch, kind, lc).total;
            },
            policy);
  }
  return s.out;
}

}  // namespace reina
