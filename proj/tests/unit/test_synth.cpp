#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "reina/error.hpp"
#include "reina/rng.hpp"
#include "reina/synth.hpp"
#include "test_util.hpp"

using namespace reina;

namespace {

TaskParams noisy_task(int tokens = 4, int vocab = 5) {
  TaskParams p;
  p.kind = TaskKind::kNoisyChannel;
  p.source_vocab = p.target_vocab = vocab;
  p.tokens = tokens;
  p.frames_per_token = 2;
  p.noise_rate = 0.2;
  p.noise_symbols = 4;
  return p;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("noiseless copy: frames equal sources, targets are mapped sources") {
  TaskParams p;
  p.kind = TaskKind::kCopy;
  p.tokens = 3;
  p.noise_rate = 0.0;
  const Dataset ds = gen_task(p, 50, 1);
  for (const auto& u : ds.utterances) {
    CHECK(u.frames == u.src_tokens);
    for (std::size_t i = 0; i < u.src_tokens.size(); ++i) CHECK(u.tgt_tokens[i] == p.map_token(u.src_tokens[i]));
  }
}

TEST_CASE("deterministic block reorder reverses each pair") {
  TaskParams p;
  p.kind = TaskKind::kBlockReorder;
  p.tokens = 4;
  p.block = 2;
  p.swap_prob = 1.0;
  for (const auto& u : gen_task(p, 30, 2).utterances) {
    const auto& z = u.src_tokens;
    CHECK(u.tgt_tokens == std::vector<int>{p.map_token(z[1]), p.map_token(z[0]), p.map_token(z[3]), p.map_token(z[2])});
  }
}

TEST_CASE("noisy channel corrupts frames at the configured rate") {
  const TaskParams p = noisy_task();
  const Dataset ds = gen_task(p, 1250, 3);
  int corrupted = 0, total = 0;
  for (const auto& u : ds.utterances) {
    for (std::size_t f = 0; f < u.frames.size(); ++f) {
      ++total;
      if (u.frames[f] != u.src_tokens[f / 2]) {
        ++corrupted;
        CHECK(u.frames[f] >= p.source_vocab);
      }
    }
  }
  CHECK(total == 10000);
  CHECK(static_cast<double>(corrupted) / total == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("posterior endpoints on the noiseless copy task") {
  TaskParams p;
  p.kind = TaskKind::kCopy;
  p.tokens = 3;
  const std::vector<int> frames{2, 4};
  const std::vector<int> prefix{p.map_token(2)};
  const auto seen = exact_posterior(p, frames, prefix).probs;
  CHECK(seen[p.map_token(4)] == 1.0);
  const auto none = exact_posterior(p, std::vector<int>{}, std::vector<int>{}).probs;
  for (double x : none) CHECK(x == doctest::Approx(1.0 / p.target_vocab).epsilon(1e-15));
}

TEST_CASE("posterior is normalized on every reachable conditioning of a small instance") {
  TaskParams p;
  p.kind = TaskKind::kCopy;
  p.source_vocab = p.target_vocab = 3;
  p.tokens = 3;
  p.noise_rate = 0.0;
  // Exhaustive: all frame prefixes and all consistent target prefixes.
  for (int code = 0; code < 27; ++code) {
    const std::vector<int> src{code % 3, (code / 3) % 3, code / 9};
    std::vector<int> tgt;
    for (int z : src) tgt.push_back(p.map_token(z));
    for (int t = 0; t <= 3; ++t) {
      for (int n = 0; n < 3; ++n) {
        const auto post = exact_posterior(p, std::span<const int>(src.data(), t), std::span<const int>(tgt.data(), n));
        double z = 0.0;
        for (double x : post.probs) z += x;
        CHECK(std::abs(z - 1.0) < 1e-10);
      }
    }
  }
}

TEST_CASE("info gain endpoints") {
  TaskParams p;
  p.kind = TaskKind::kCopy;
  p.tokens = 4;
  const Dataset ds = gen_task(p, 20, 4);
  for (const auto& u : ds.utterances) {
    for (int n = 0; n < p.tokens; ++n) {
      CHECK(exact_info_gain(p, u, n, p.total_frames()) == 0.0);
      for (int t = 0; t <= n; ++t) CHECK(exact_info_gain(p, u, n, t) == doctest::Approx(std::log(5.0)).epsilon(1e-14));
    }
  }
}

TEST_CASE("info gain is non-negative on average and shrinks with more audio") {
  const TaskParams p = noisy_task();
  const Dataset ds = gen_task(p, 300, 5);
  const auto test = ds.split("test");
  REQUIRE(test.size() > 10);
  double total = 0.0;
  int count = 0;
  std::vector<double> by_t(static_cast<std::size_t>(p.total_frames()) + 1, 0.0);
  for (const Utterance* u : test) {
    for (int n = 0; n < p.tokens; ++n) {
      for (int t = 0; t <= p.total_frames(); ++t) {
        const double g = exact_info_gain(p, *u, n, t);
        by_t[static_cast<std::size_t>(t)] += g;
        if (t < p.total_frames()) {
          total += g;
          ++count;
        }
      }
    }
  }
  CHECK(total / count >= -1e-9);
  for (std::size_t t = 1; t < by_t.size(); ++t) CHECK(by_t[t] <= by_t[t - 1] + 1e-9);
}

TEST_CASE("exact posterior refuses oversized enumerations and bad inputs") {
  TaskParams big = noisy_task(12, 10);
  const std::vector<int> frames{1};
  CHECK_THROWS_AS(exact_posterior(big, frames, std::vector<int>{}), ResourceLimitError);
  const TaskParams p = noisy_task();
  const std::vector<int> bad{99};
  CHECK_THROWS_AS(exact_posterior(p, bad, std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("truncate_sample distribution") {
  Utterance u;
  u.frames = {0, 1, 2, 3, 4, 5, 6, 7};
  u.tgt_tokens = {1, 2};
  Rng rng(9);
  for (int i = 0; i < 100; ++i) CHECK(truncate_sample(u, rng, 1.0).frames == u.frames);

  std::map<std::size_t, int> hist;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++hist[truncate_sample(u, rng, 0.0).frames.size()];
  CHECK(hist.size() == 7);
  double chi2 = 0.0;
  const double expected = draws / 7.0;
  for (std::size_t len = 1; len <= 7; ++len) chi2 += std::pow(hist[len] - expected, 2) / expected;
  CHECK(chi2 < 16.81);  // chi-square, 6 dof, p = 0.01

  int full = 0;
  for (int i = 0; i < draws; ++i) full += truncate_sample(u, rng, 0.2).frames.size() == 8 ? 1 : 0;
  CHECK(static_cast<double>(full) / draws == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("generation is reproducible and round-trips through JSONL") {
  const TaskParams p = noisy_task();
  const auto a = test::scratch("synth_a"), b = test::scratch("synth_b");
  write_dataset(gen_task(p, 40, 7), a);
  write_dataset(gen_task(p, 40, 7), b);
  for (const auto& entry : std::filesystem::directory_iterator(a)) {
    CHECK(read_file(entry.path()) == read_file(b / entry.path().filename()));
  }
  const Dataset back = read_dataset(a);
  const Dataset orig = gen_task(p, 40, 7);
  REQUIRE(back.utterances.size() == orig.utterances.size());
  for (std::size_t i = 0; i < back.utterances.size(); ++i) {
    CHECK(utterance_jsonl(back.utterances[i]) == utterance_jsonl(orig.utterances[i]));
  }
  CHECK(gen_task(p, 40, 8).utterances[0].src_tokens != orig.utterances[0].src_tokens);
}

TEST_CASE("splits partition the dataset") {
  const Dataset ds = gen_task(noisy_task(), 500, 1);
  const auto n = ds.split("train").size() + ds.split("dev").size() + ds.split("test").size();
  CHECK(n == 500);
  CHECK(ds.split("train").size() > 350);
}
