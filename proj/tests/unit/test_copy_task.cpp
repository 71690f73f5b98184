#include "reina/checkpoint.hpp"
#include "reina/decoder.hpp"
#include "reina/trainer.hpp"
#include "test_util.hpp"

using namespace reina;

TEST_CASE("the base model learns the noiseless copy task") {
  TaskParams task;
  task.kind = TaskKind::kCopy;
  task.source_vocab = task.target_vocab = 5;
  task.tokens = 4;
  ArchConfig arch;
  arch.max_frames = 8;
  arch.max_tokens = 8;
  // Smoothing would floor the unsmoothed CE near 0.1 nats; measure the fit itself.
  arch.label_smoothing = 0.0;
  arch.bind_task(task);
  const Dataset ds = gen_task(task, 1000, 5);
  TrainConfig cfg;
  cfg.stage = 1;
  cfg.steps = 2000;
  cfg.lr = 1e-3;
  cfg.seed = 1;
  const Checkpoint ck = train_stage1(fresh_checkpoint(arch, 1), cfg, ds);

  const double dev_ce = mean_token_nll(ck.params, ds.split("dev"));
  MESSAGE("dev CE " << dev_ce);
  CHECK(dev_ce < 0.1);

  const TokenVocab vocab = arch.vocab();
  std::size_t positions = 0, argmax_hits = 0, sentences = 0, exact = 0;
  for (const Utterance* u : ds.split("test")) {
    const ad::Tensor enc = encode(ck.params, u->frames);
    const TeacherForcing tf = translation_pair(vocab, u->tgt_tokens);
    const ad::Tensor lp = decode_states(ck.params, enc, tf.inputs).logprobs;
    for (std::size_t n = 0; n < u->tgt_tokens.size(); ++n) {
      std::size_t best = 0;
      for (std::size_t v = 1; v < lp.shape()[1]; ++v) {
        if (lp.at(n, v) > lp.at(n, best)) best = v;
      }
      argmax_hits += static_cast<int>(best) == tf.labels[n];
      ++positions;
    }
    exact += offline_beam_decode(ck.params, u->frames, DecodeConfig{}).tokens == u->tgt_tokens;
    ++sentences;
  }
  const double argmax_rate = static_cast<double>(argmax_hits) / static_cast<double>(positions);
  const double exact_rate = static_cast<double>(exact) / static_cast<double>(sentences);
  MESSAGE("argmax " << argmax_rate << " exact " << exact_rate);
  CHECK(argmax_rate >= 0.99);
  CHECK(exact_rate >= 0.99);
}
