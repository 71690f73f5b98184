// Brute-force reference for the exact posterior and information gain: joint
// enumeration over every source sequence and every block-reversal pattern,
// written independently of the factored implementation in synth.cpp.
#include <cmath>
#include <vector>

#include "reina/rng.hpp"
#include "reina/synth.hpp"
#include "test_util.hpp"

using namespace reina;

namespace {

double frame_likelihood(const TaskParams& p, int frame, int z) {
  if (frame == z) return 1.0 - p.noise_rate;
  if (frame >= p.source_vocab) return p.noise_rate / p.noise_symbols;
  return 0.0;
}

std::vector<int> targets_for(const TaskParams& p, const std::vector<int>& src, unsigned reversal_bits) {
  std::vector<int> tgt(src.size());
  for (int pos = 0; pos < p.tokens; ++pos) {
    int from = pos;
    if (p.reorders() && ((reversal_bits >> (pos / p.block)) & 1U)) {
      const int start = (pos / p.block) * p.block;
      const int end = std::min(start + p.block, p.tokens);
      from = start + end - 1 - pos;
    }
    tgt[pos] = (src[from] + 1) % p.target_vocab;
  }
  return tgt;
}

std::vector<double> brute_posterior(const TaskParams& p, const std::vector<int>& frames, const std::vector<int>& prefix) {
  std::vector<double> probs(p.target_vocab, 0.0);
  const int patterns = p.reorders() ? 1 << p.blocks() : 1;
  std::vector<int> src(p.tokens, 0);
  long combos = 1;
  for (int i = 0; i < p.tokens; ++i) combos *= p.source_vocab;
  for (long c = 0; c < combos; ++c) {
    long rest = c;
    for (int i = 0; i < p.tokens; ++i) {
      src[i] = static_cast<int>(rest % p.source_vocab);
      rest /= p.source_vocab;
    }
    double lik = 1.0;
    for (std::size_t f = 0; f < frames.size(); ++f) lik *= frame_likelihood(p, frames[f], src[f / p.frames_per_token]);
    if (lik == 0.0) continue;
    for (int bits = 0; bits < patterns; ++bits) {
      double prior = 1.0;
      if (p.reorders()) {
        for (int b = 0; b < p.blocks(); ++b) prior *= ((bits >> b) & 1) ? p.swap_prob : 1.0 - p.swap_prob;
      }
      if (prior == 0.0) continue;
      const auto tgt = targets_for(p, src, static_cast<unsigned>(bits));
      bool match = true;
      for (std::size_t i = 0; i < prefix.size(); ++i) match = match && tgt[i] == prefix[i];
      if (match) probs[tgt[prefix.size()]] += lik * prior;
    }
  }
  double z = 0.0;
  for (double x : probs) z += x;
  for (double& x : probs) x /= z;
  return probs;
}

double brute_gain(const TaskParams& p, const Utterance& u, int n, int t) {
  const std::vector<int> prefix(u.tgt_tokens.begin(), u.tgt_tokens.begin() + n);
  const auto full = brute_posterior(p, u.frames, prefix);
  const auto part = brute_posterior(p, std::vector<int>(u.frames.begin(), u.frames.begin() + t), prefix);
  double g = 0.0;
  for (std::size_t s = 0; s < full.size(); ++s) {
    if (full[s] > 0.0) g += full[s] * std::log(full[s] / part[s]);
  }
  return g;
}

std::vector<TaskParams> oracle_tasks() {
  TaskParams copy;
  copy.kind = TaskKind::kCopy;
  copy.source_vocab = copy.target_vocab = 3;
  copy.tokens = 3;
  copy.noise_rate = 0.0;

  TaskParams noisy;
  noisy.kind = TaskKind::kNoisyChannel;
  noisy.source_vocab = noisy.target_vocab = 4;
  noisy.tokens = 3;
  noisy.frames_per_token = 2;
  noisy.noise_rate = 0.2;
  noisy.noise_symbols = 3;

  TaskParams reorder;
  reorder.kind = TaskKind::kBlockReorder;
  reorder.source_vocab = reorder.target_vocab = 3;
  reorder.tokens = 5;
  reorder.block = 2;
  reorder.swap_prob = 0.5;
  reorder.frames_per_token = 2;
  reorder.noise_rate = 0.3;
  reorder.noise_symbols = 2;

  TaskParams det = reorder;
  det.swap_prob = 1.0;
  det.tokens = 4;
  det.noise_rate = 0.0;
  det.frames_per_token = 1;
  return {copy, noisy, reorder, det};
}

}  // namespace

TEST_CASE("exact_posterior matches joint enumeration on every prefix of sampled utterances") {
  for (const TaskParams& p : oracle_tasks()) {
    CAPTURE(to_string(p.kind));
    const Dataset ds = gen_task(p, 12, 5);
    for (const Utterance& u : ds.utterances) {
      for (int n = 0; n < p.tokens; ++n) {
        const std::vector<int> prefix(u.tgt_tokens.begin(), u.tgt_tokens.begin() + n);
        for (int t = 0; t <= p.total_frames(); ++t) {
          const std::vector<int> frames(u.frames.begin(), u.frames.begin() + t);
          const auto got = exact_posterior(p, frames, prefix).probs;
          const auto want = brute_posterior(p, frames, prefix);
          REQUIRE(got.size() == want.size());
          for (std::size_t s = 0; s < got.size(); ++s) CHECK(got[s] == doctest::Approx(want[s]).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("exact_info_gain matches enumeration-based recomputation") {
  for (const TaskParams& p : oracle_tasks()) {
    CAPTURE(to_string(p.kind));
    const Dataset ds = gen_task(p, 6, 9);
    for (const Utterance& u : ds.utterances) {
      for (int n = 0; n < p.tokens; ++n) {
        for (int t = 0; t <= p.total_frames(); ++t) {
          CHECK(exact_info_gain(p, u, n, t) == doctest::Approx(brute_gain(p, u, n, t)).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("two-factor Bayes update when both frames of a token agree") {
  TaskParams p;
  p.kind = TaskKind::kNoisyChannel;
  p.source_vocab = p.target_vocab = 5;
  p.tokens = 2;
  p.frames_per_token = 2;
  p.noise_rate = 0.2;
  p.noise_symbols = 4;
  const std::vector<int> frames{3, 3};
  const auto post = exact_posterior(p, frames, {}).probs;
  // Agreeing clean frames pin the token; the target is g(3) = 4.
  CHECK(post[4] == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<int> one_noisy{3, 6};
  CHECK(exact_posterior(p, one_noisy, {}).probs[4] == doctest::Approx(1.0));
  const std::vector<int> both_noisy{5, 6};
  for (double x : exact_posterior(p, both_noisy, {}).probs) CHECK(x == doctest::Approx(0.2));
  CHECK(brute_posterior(p, both_noisy, {})[0] == doctest::Approx(0.2));
}
