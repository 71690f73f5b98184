#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/checkpoint.hpp"
#include "reina/losses.hpp"
#include "reina/model.hpp"
#include "reina/synth.hpp"

namespace reina {

enum class PolicyLossKind { kReina, kReinaNoMono, kDivergence };

std::string to_string(PolicyLossKind kind);
PolicyLossKind policy_loss_from_string(const std::string& s);

struct TrainConfig {
  int stage = 1;
  int steps = 2000;
  int batch_size = 16;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  double p_full = 0.2;                 // stage 2
  PolicyLossKind policy_loss = PolicyLossKind::kReina;
  double asr_weight = 1.0;             // stages 1-2
  int warmup_steps = 500;              // stage 3 inverse-sqrt schedule
  int eval_every = 0;                  // 0: evaluate on dev only after the last step
  int eval_max = 0;                    // cap on dev utterances per evaluation, 0 = all
  bool allow_stage1_init = false;      // stage 3 normally requires a stage-2 checkpoint
  LossConfig loss;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Learning rate applied at 1-based step `step`.
double scheduled_lr(const TrainConfig& cfg, int step);

// Stage 1-2 objective for one batch: mean translation CE plus asr_weight times
// mean transcription CE (the latter skipped when asr_weight == 0).
struct CeBatchLoss {
  ad::Var total;
  double ce_tgt = 0.0;
  double ce_src = 0.0;
  int tgt_sequences = 0;
  int src_sequences = 0;
};
CeBatchLoss ce_batch_loss(const ModelGraph& g, const std::vector<const Utterance*>& utts,
                          const std::vector<std::vector<int>>& frames, double asr_weight, double smoothing,
                          DropoutCtx* drop);

// Stage-3 objective for one batch of (utterance, frames kept) samples. Base
// forward passes are value-only; gradients flow into the policy head of `g`.
struct PolicySample {
  const Utterance* utt = nullptr;
  int t = 0;
};
struct PolicyBatchLoss {
  ad::Var total;
  double l_p = 0.0;
  double l_m = 0.0;
  double l_r = 0.0;
  double l_div = 0.0;
};
PolicyBatchLoss policy_batch_loss(const ModelGraph& g, const std::vector<PolicySample>& batch, PolicyLossKind kind,
                                  const LossConfig& lc);

// Stage 1: teacher-forced CE on full audio, L = L_s2tt + w * L_asr.
Checkpoint train_stage1(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data);
// Stage 2: as stage 1 with each sample passed through truncate_sample(p_full).
Checkpoint train_stage2(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data);
// Stage 3: policy head only, base frozen, dual-pass full/partial estimates.
Checkpoint train_stage3_policy(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data);
// Dispatch on cfg.stage.
Checkpoint train_stage(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data);

void write_train_log_csv(const Checkpoint& ckpt, const std::filesystem::path& path);

// Mean unsmoothed per-token NLL of the translation task (labels include EOS).
double mean_token_nll(const ModelParams& params, const std::vector<const Utterance*>& utts);
double mean_token_nll(const ModelParams& params, const std::vector<Utterance>& utts);

// Each utterance cut to a fixed uniform length in [1, T-1] drawn from `seed`.
std::vector<Utterance> truncated_eval_set(const std::vector<const Utterance*>& utts, std::uint64_t seed);

// Policy scores and label log-probs at every decoder position for one
// truncation point t (frames kept), teacher-forced on the reference.
struct PolicyProbe {
  std::vector<double> q;
  std::vector<double> logp_partial;
  std::vector<double> logp_full;
};
PolicyProbe probe_policy(const ModelParams& params, const Utterance& utt, int t);

// Population covariance of q and F-hat = logp_full - logp_partial over dev
// utterances, one truncation point per utterance drawn from `seed`.
double policy_dev_covariance(const ModelParams& params, const std::vector<const Utterance*>& utts,
                             std::uint64_t seed);

}  // namespace reina
