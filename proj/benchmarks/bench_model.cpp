#include <benchmark/benchmark.h>

#include "reina/checkpoint.hpp"
#include "reina/decoder.hpp"
#include "reina/trainer.hpp"

using namespace reina;

namespace {

TaskParams task() {
  TaskParams p;
  p.kind = TaskKind::kBlockReorder;
  p.source_vocab = p.target_vocab = 6;
  p.tokens = 6;
  p.frames_per_token = 2;
  p.noise_rate = 0.3;
  return p;
}

const ModelParams& model() {
  static const ModelParams params = [] {
    ArchConfig a;
    a.max_frames = 16;
    a.max_tokens = 12;
    a.bind_task(task());
    return init_params(a, 1);
  }();
  return params;
}

const Dataset& data() {
  static const Dataset ds = gen_task(task(), 64, 1);
  return ds;
}

void BM_EncodeDecodeForward(benchmark::State& state) {
  const Utterance& u = data().utterances.front();
  const TeacherForcing tf = translation_pair(model().arch.vocab(), u.tgt_tokens);
  for (auto _ : state) {
    const ad::Tensor enc = encode(model(), u.frames);
    auto st = decode_states(model(), enc, tf.inputs);
    benchmark::DoNotOptimize(st);
  }
}
BENCHMARK(BM_EncodeDecodeForward);

void BM_Stage1Step(benchmark::State& state) {
  TrainConfig cfg;
  cfg.stage = 1;
  cfg.steps = 1;
  cfg.seed = 3;
  const Checkpoint init = fresh_checkpoint(model().arch, 1);
  for (auto _ : state) {
    auto ck = train_stage1(init, cfg, data());
    benchmark::DoNotOptimize(ck);
  }
}
BENCHMARK(BM_Stage1Step)->Unit(benchmark::kMillisecond);

void BM_StreamDecode(benchmark::State& state) {
  DecodeConfig cfg;
  cfg.policy = PolicyKind::kLearned;
  cfg.alpha = 0.5;
  const Utterance& u = data().utterances.front();
  for (auto _ : state) {
    auto r = stream_decode(model(), u.frames, u.frame_dur_s, cfg);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_StreamDecode)->Unit(benchmark::kMillisecond);

void BM_WaitKDecode(benchmark::State& state) {
  const Utterance& u = data().utterances.front();
  for (auto _ : state) {
    auto r = waitk_decode(model(), u.frames, u.frame_dur_s, static_cast<int>(state.range(0)), DecodeConfig{});
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_WaitKDecode)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
