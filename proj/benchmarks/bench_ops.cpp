#include <benchmark/benchmark.h>

#include "reina/ops.hpp"
#include "reina/rng.hpp"

using namespace reina;

namespace {

ad::Tensor random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  ad::Tensor t({rows, cols});
  for (double& x : t.data()) x = rng.uniform(-1, 1);
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const ad::Tensor a = random_matrix(rng, n, n), b = random_matrix(rng, n, n);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var va = tape.leaf(a, true), vb = tape.leaf(b, true);
    auto grads = tape.backward(ad::sum(ad::matmul(va, vb)));
    benchmark::DoNotOptimize(grads);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(8, 64)->Complexity();

void BM_CausalAttention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const ad::Tensor q = random_matrix(rng, len, 32), k = random_matrix(rng, len, 32), v = random_matrix(rng, len, 32);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var vq = tape.leaf(q, true), vk = tape.leaf(k, true), vv = tape.leaf(v, true);
    auto grads = tape.backward(ad::sum(ad::attention(vq, vk, vv, 2, ad::AttentionMask::kCausal)));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_CausalAttention)->Arg(8)->Arg(16)->Arg(32);

void BM_LayerNormLogSoftmax(benchmark::State& state) {
  Rng rng(3);
  const ad::Tensor x = random_matrix(rng, 16, 64);
  const ad::Tensor g({64}, 1.0), b({64}, 0.0);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var vx = tape.leaf(x, true), vg = tape.leaf(g, true), vb = tape.leaf(b, true);
    auto grads = tape.backward(ad::mean(ad::log_softmax(ad::layer_norm(vx, vg, vb))));
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_LayerNormLogSoftmax);

}  // namespace

BENCHMARK_MAIN();
