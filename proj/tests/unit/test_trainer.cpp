#include <cmath>
#include <vector>

#include "reina/checkpoint.hpp"
#include "reina/error.hpp"
#include "reina/trainer.hpp"
#include "test_util.hpp"

using namespace reina;

namespace {

TaskParams reorder_task() {
  TaskParams p;
  p.kind = TaskKind::kBlockReorder;
  p.tokens = 4;
  p.source_vocab = p.target_vocab = 5;
  p.frames_per_token = 2;
  p.noise_rate = 0.1;
  return p;
}

ArchConfig small_arch() {
  ArchConfig a;
  a.d_model = 16;
  a.encoder_layers = 1;
  a.decoder_layers = 1;
  a.policy_layers = 1;
  a.ff_mult = 2;
  a.max_frames = 8;
  a.max_tokens = 6;
  a.bind_task(reorder_task());
  return a;
}

const Dataset& data() {
  static const Dataset ds = gen_task(reorder_task(), 300, 11);
  return ds;
}

TrainConfig cfg(int stage, int steps) {
  TrainConfig c;
  c.stage = stage;
  c.steps = steps;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.seed = 100 + static_cast<std::uint64_t>(stage);
  c.warmup_steps = 5;
  return c;
}

const Checkpoint& stage1() {
  static const Checkpoint ck = train_stage1(fresh_checkpoint(small_arch(), 1), cfg(1, 30), data());
  return ck;
}

const Checkpoint& stage2() {
  static const Checkpoint ck = train_stage2(stage1(), cfg(2, 20), data());
  return ck;
}

std::vector<double> column(const Checkpoint& ck, const char* key) {
  std::vector<double> out;
  for (const auto& row : ck.log) out.push_back(row.at(key).get<double>());
  return out;
}

}  // namespace

TEST_CASE("training is deterministic for a fixed config and seed") {
  const Checkpoint again = train_stage1(fresh_checkpoint(small_arch(), 1), cfg(1, 30), data());
  CHECK(again.params.tensors == stage1().params.tensors);
  CHECK(again.log == stage1().log);
  CHECK(checkpoint_to_json(again).dump() == checkpoint_to_json(stage1()).dump());
  TrainConfig other = cfg(1, 30);
  other.seed = 999;
  CHECK(train_stage1(fresh_checkpoint(small_arch(), 1), other, data()).params.tensors != stage1().params.tensors);
}

TEST_CASE("stage 1 reduces the training loss and logs every step") {
  const auto loss = column(stage1(), "loss");
  REQUIRE(loss.size() == 30);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) first += loss[static_cast<std::size_t>(i)];
  for (int i = 25; i < 30; ++i) last += loss[static_cast<std::size_t>(i)];
  CHECK(last < first);
  CHECK(stage1().stage == 1);
  CHECK(stage1().counters.at("src_sequences").get<int>() > 0);
  CHECK(!stage1().log.back().at("dev").is_null());
}

TEST_CASE("asr weight zero never samples the transcription task") {
  TrainConfig c = cfg(1, 5);
  c.asr_weight = 0.0;
  const Checkpoint ck = train_stage1(fresh_checkpoint(small_arch(), 1), c, data());
  CHECK(ck.counters.at("src_sequences").get<int>() == 0);
  CHECK(ck.counters.at("tgt_sequences").get<int>() == 5 * 8);
  for (double x : column(ck, "ce_src")) CHECK(x == 0.0);
}

TEST_CASE("stage 2 with p_full = 1 is continued stage 1 training") {
  TrainConfig s2 = cfg(2, 6);
  s2.p_full = 1.0;
  TrainConfig s1 = s2;
  s1.stage = 1;
  const Checkpoint a = train_stage2(stage1(), s2, data());
  const Checkpoint b = train_stage1(stage1(), s1, data());
  CHECK(column(a, "loss") == column(b, "loss"));
  CHECK(a.params.tensors == b.params.tensors);
}

TEST_CASE("stage 2 samples full audio at rate p_full") {
  TrainConfig c = cfg(2, 60);
  c.p_full = 0.2;
  const Checkpoint ck = train_stage2(stage1(), c, data());
  const double full = ck.counters.at("full_samples").get<double>();
  const double trunc = ck.counters.at("truncated_samples").get<double>();
  CHECK(full + trunc == 60 * 8);
  CHECK(full / (full + trunc) == doctest::Approx(0.2).epsilon(0.25));
}

TEST_CASE("gradient clipping bounds every applied update") {
  TrainConfig c = cfg(1, 10);
  c.clip_norm = 0.5;
  const Checkpoint ck = train_stage1(fresh_checkpoint(small_arch(), 1), c, data());
  bool engaged = false;
  for (const auto& row : ck.log) {
    CHECK(row.at("applied_norm").get<double>() <= 0.5 + 1e-9);
    engaged = engaged || row.at("clipped").get<bool>();
  }
  CHECK(engaged);
  for (const auto& row : stage1().log) CHECK(row.at("applied_norm").get<double>() <= 10.0 + 1e-9);
}

TEST_CASE("stage 3 leaves every base weight bit-identical") {
  TrainConfig c = cfg(3, 100);
  c.batch_size = 4;
  const Checkpoint ck = train_stage3_policy(stage2(), c, data());
  const auto& before = stage2().params;
  bool policy_moved = false;
  for (std::size_t i = 0; i < before.tensors.size(); ++i) {
    if (before.groups[i] == ParamGroup::kBase) {
      CHECK(ck.params.tensors[i] == before.tensors[i]);
    } else {
      policy_moved = policy_moved || ck.params.tensors[i] != before.tensors[i];
    }
  }
  CHECK(policy_moved);
  CHECK(ck.provenance.size() == 3);
}

TEST_CASE("stages 1 and 2 leave policy weights untouched") {
  const auto fresh = fresh_checkpoint(small_arch(), 1).params;
  for (std::size_t i = 0; i < fresh.tensors.size(); ++i) {
    if (fresh.groups[i] == ParamGroup::kPolicy) CHECK(stage2().params.tensors[i] == fresh.tensors[i]);
  }
}

TEST_CASE("policy loss variants") {
  TrainConfig c = cfg(3, 8);
  c.policy_loss = PolicyLossKind::kReinaNoMono;
  const Checkpoint no_mono = train_stage3_policy(stage2(), c, data());
  for (double x : column(no_mono, "l_m")) CHECK(x == 0.0);
  c.policy_loss = PolicyLossKind::kDivergence;
  const Checkpoint div = train_stage3_policy(stage2(), c, data());
  for (double x : column(div, "l_div")) CHECK(x >= 0.0);
  CHECK(div.provenance.back().note == "divergence");
}

TEST_CASE("stage preconditions") {
  CHECK_THROWS(train_stage2(fresh_checkpoint(small_arch(), 1), cfg(2, 1), data()));
  CHECK_THROWS(train_stage3_policy(stage1(), cfg(3, 1), data()));
  TrainConfig allow = cfg(3, 2);
  allow.allow_stage1_init = true;
  CHECK_NOTHROW(train_stage3_policy(stage1(), allow, data()));
  CHECK_THROWS(train_stage1(stage2(), cfg(1, 1), data()));
}

TEST_CASE("learning-rate schedules") {
  TrainConfig c = cfg(3, 100);
  c.lr = 1e-3;
  c.warmup_steps = 10;
  CHECK(scheduled_lr(c, 1) == doctest::Approx(1e-4));
  CHECK(scheduled_lr(c, 10) == doctest::Approx(1e-3));
  CHECK(scheduled_lr(c, 40) == doctest::Approx(5e-4));
  TrainConfig s1 = cfg(1, 100);
  CHECK(scheduled_lr(s1, 1) == s1.lr);
  CHECK(scheduled_lr(s1, 77) == s1.lr);
}

TEST_CASE("train config json rejects unknown keys") {
  nlohmann::json j = cfg(2, 10);
  CHECK(j.get<TrainConfig>().steps == 10);
  j["stepz"] = 3;
  CHECK_THROWS(j.get<TrainConfig>());
}

TEST_CASE("stage 2 lowers CE on truncated audio relative to stage 1") {
  const auto dev = data().split("dev");
  const auto truncated = truncated_eval_set(dev, 5);
  CHECK(mean_token_nll(stage2().params, truncated) < mean_token_nll(stage1().params, truncated));
}
