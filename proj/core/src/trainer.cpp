#include "reina/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "reina/error.hpp"
#include "reina/optim.hpp"

namespace reina {

using ad::Tensor;
using ad::Var;
using ojson = nlohmann::ordered_json;

std::string to_string(PolicyLossKind kind) {
  switch (kind) {
    case PolicyLossKind::kReina: return "reina";
    case PolicyLossKind::kReinaNoMono: return "reina_no_mono";
    case PolicyLossKind::kDivergence: return "divergence";
  }
  return "?";
}

PolicyLossKind policy_loss_from_string(const std::string& s) {
  if (s == "reina") return PolicyLossKind::kReina;
  if (s == "reina_no_mono") return PolicyLossKind::kReinaNoMono;
  if (s == "divergence") return PolicyLossKind::kDivergence;
  throw std::invalid_argument("unknown policy loss kind '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (stage < 1 || stage > 3) fail("stage must be 1, 2 or 3");
  if (steps < 0) fail("steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm must be > 0");
  if (!(p_full >= 0.0 && p_full <= 1.0)) fail("p_full must lie in [0, 1]");
  if (!(asr_weight >= 0.0)) fail("asr_weight must be >= 0");
  if (warmup_steps < 0 || eval_every < 0 || eval_max < 0) fail("warmup_steps, eval_every, eval_max must be >= 0");
  loss.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"stage", c.stage},
                     {"steps", c.steps},
                     {"batch_size", c.batch_size},
                     {"lr", c.lr},
                     {"weight_decay", c.weight_decay},
                     {"clip_norm", c.clip_norm},
                     {"seed", c.seed},
                     {"p_full", c.p_full},
                     {"policy_loss", to_string(c.policy_loss)},
                     {"asr_weight", c.asr_weight},
                     {"warmup_steps", c.warmup_steps},
                     {"eval_every", c.eval_every},
                     {"eval_max", c.eval_max},
                     {"allow_stage1_init", c.allow_stage1_init},
                     {"lambda", c.loss.lambda},
                     {"epsilon", c.loss.epsilon},
                     {"bn_eps", c.loss.bn_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
  const nlohmann::json defaults = TrainConfig{};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw std::invalid_argument("train: unknown key '" + it.key() + "'");
  }
  c = TrainConfig{};
  c.stage = j.value("stage", c.stage);
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.p_full = j.value("p_full", c.p_full);
  c.policy_loss = policy_loss_from_string(j.value("policy_loss", to_string(c.policy_loss)));
  c.asr_weight = j.value("asr_weight", c.asr_weight);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_max = j.value("eval_max", c.eval_max);
  c.allow_stage1_init = j.value("allow_stage1_init", c.allow_stage1_init);
  c.loss.lambda = j.value("lambda", c.loss.lambda);
  c.loss.epsilon = j.value("epsilon", c.loss.epsilon);
  c.loss.bn_eps = j.value("bn_eps", c.loss.bn_eps);
}

double scheduled_lr(const TrainConfig& cfg, int step) {
  if (cfg.stage != 3 || cfg.warmup_steps == 0) return cfg.lr;
  const double s = std::max(step, 1);
  const double w = cfg.warmup_steps;
  return cfg.lr * std::min(s / w, std::sqrt(w / s));
}

namespace {

Tensor first_rows(const Tensor& x, std::size_t n) {
  const std::size_t c = x.cols();
  return Tensor({n, c}, std::vector<double>(x.storage().begin(), x.storage().begin() + n * c));
}

// Cycles through the training pool in per-epoch shuffled order.
class BatchSampler {
 public:
  BatchSampler(std::vector<const Utterance*> pool, Rng& rng) : pool_(std::move(pool)), rng_(rng) {
    if (pool_.empty()) throw std::invalid_argument("training split is empty");
    order_.resize(pool_.size());
    reshuffle();
  }

  std::vector<const Utterance*> next(int size) {
    std::vector<const Utterance*> out;
    for (int i = 0; i < size; ++i) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(pool_[order_[pos_++]]);
    }
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  std::vector<const Utterance*> pool_;
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void check_compatible(const ArchConfig& arch, const TaskParams& task) {
  if (arch.target_vocab != task.target_vocab || arch.source_vocab != task.source_vocab ||
      arch.frame_vocab != task.frame_vocab()) {
    throw std::invalid_argument("checkpoint vocabulary does not match the dataset task");
  }
  if (arch.max_frames < task.total_frames() || arch.max_tokens < task.tokens + 2) {
    throw std::invalid_argument("checkpoint length limits do not cover the dataset task");
  }
}

std::vector<std::size_t> group_indices(const ModelParams& mp, ParamGroup g) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mp.groups.size(); ++i) {
    if (mp.groups[i] == g) idx.push_back(i);
  }
  return idx;
}

struct StepStats {
  double loss = 0.0, ce_tgt = 0.0, ce_src = 0.0, l_p = 0.0, l_m = 0.0, l_r = 0.0, l_div = 0.0;
  double grad_norm = 0.0, applied_norm = 0.0, lr = 0.0;
  bool clipped = false;
};

ojson log_row(int step, const StepStats& s, double dev) {
  ojson r;
  r["step"] = step;
  r["loss"] = s.loss;
  r["ce_tgt"] = s.ce_tgt;
  r["ce_src"] = s.ce_src;
  r["l_p"] = s.l_p;
  r["l_m"] = s.l_m;
  r["l_r"] = s.l_r;
  r["l_div"] = s.l_div;
  r["grad_norm"] = s.grad_norm;
  r["applied_norm"] = s.applied_norm;
  r["clipped"] = s.clipped;
  r["lr"] = s.lr;
  if (std::isnan(dev)) {
    r["dev"] = nullptr;
  } else {
    r["dev"] = dev;
  }
  return r;
}

// Clips the gradient set, applies AdamW to the selected tensors, fills norms.
void apply_update(ModelParams& mp, const std::vector<std::size_t>& idx, std::vector<Tensor>& grads,
                  ad::OptimizerState& opt, const TrainConfig& cfg, int step, StepStats& s) {
  s.grad_norm = ad::clip_global_norm(grads, cfg.clip_norm);
  s.clipped = s.grad_norm > cfg.clip_norm;
  s.applied_norm = ad::global_norm(grads);
  s.lr = scheduled_lr(cfg, step);
  std::vector<Tensor*> ptrs;
  for (std::size_t i : idx) ptrs.push_back(&mp.tensors[i]);
  const ad::AdamWConfig acfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  ad::adamw_step(ptrs, grads, opt, acfg, s.lr);
}

[[noreturn]] void diverged(int stage, int step, const std::string& what) {
  throw DivergenceError("stage " + std::to_string(stage) + " diverged at step " + std::to_string(step) + ": " + what);
}

std::vector<const Utterance*> capped(std::vector<const Utterance*> v, int cap) {
  if (cap > 0 && static_cast<int>(v.size()) > cap) v.resize(static_cast<std::size_t>(cap));
  return v;
}

void finish(Checkpoint& ck, const TrainConfig& cfg, int stage, const std::string& note, const Rng& batch,
            const Rng& dropout, const Rng& trunc) {
  ck.stage = stage;
  ck.seed = cfg.seed;
  ck.provenance.push_back({stage, cfg.seed, cfg.steps, note});
  ck.train_config = ojson(nlohmann::json(cfg));
  ck.rng_state = {{"batch", batch.state()}, {"dropout", dropout.state()}, {"truncation", trunc.state()}};
}

Checkpoint train_ce(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data, int stage) {
  cfg.validate();
  Checkpoint ck = init;
  ck.log = ojson::array();
  ModelParams& mp = ck.params;
  check_compatible(mp.arch, data.params);
  const auto dev = capped(data.split("dev"), cfg.eval_max);
  Rng batch_rng(Rng::derive(cfg.seed, 1)), drop_rng(Rng::derive(cfg.seed, 2)), trunc_rng(Rng::derive(cfg.seed, 3));
  BatchSampler sampler(data.split("train"), batch_rng);
  const std::vector<std::size_t> idx = group_indices(mp, ParamGroup::kBase);
  const double smoothing = mp.arch.label_smoothing;
  ad::OptimizerState opt;
  std::uint64_t tgt_seqs = 0, src_seqs = 0, full = 0, truncated = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    StepStats s;
    try {
      ad::Tape tape;
      ModelGraph g(tape, mp, Trainable::kBase);
      DropoutCtx drop{mp.arch.dropout, &drop_rng};
      const auto batch = sampler.next(cfg.batch_size);
      std::vector<std::vector<int>> frames;
      for (const Utterance* u : batch) {
        frames.push_back(u->frames);
        if (stage == 2) {
          frames.back() = truncate_sample(*u, trunc_rng, cfg.p_full).frames;
          (frames.back().size() == u->frames.size() ? full : truncated) += 1;
        }
      }
      const CeBatchLoss bl = ce_batch_loss(g, batch, frames, cfg.asr_weight, smoothing, &drop);
      tgt_seqs += static_cast<std::uint64_t>(bl.tgt_sequences);
      src_seqs += static_cast<std::uint64_t>(bl.src_sequences);
      s.ce_tgt = bl.ce_tgt;
      s.ce_src = bl.ce_src;
      const Var total = bl.total;
      s.loss = total.value().item();
      const ad::Gradients gr = tape.backward(total);
      std::vector<Tensor> grads;
      for (std::size_t i : idx) grads.push_back(gr[g.param(i)]);
      apply_update(mp, idx, grads, opt, cfg, step, s);
    } catch (const std::domain_error& e) {
      diverged(stage, step, e.what());
    }
    if (!std::isfinite(s.loss) || !std::isfinite(s.grad_norm)) diverged(stage, step, "non-finite loss or gradient");
    double dev_nll = std::numeric_limits<double>::quiet_NaN();
    const bool eval_now = (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
    if (eval_now && !dev.empty()) dev_nll = mean_token_nll(mp, dev);
    ck.log.push_back(log_row(step, s, dev_nll));
  }
  ck.counters = {{"tgt_sequences", tgt_seqs},
                 {"src_sequences", src_seqs},
                 {"full_samples", full},
                 {"truncated_samples", truncated}};
  std::ostringstream note;
  if (stage == 2) note << "p_full=" << cfg.p_full;
  finish(ck, cfg, stage, note.str(), batch_rng, drop_rng, trunc_rng);
  return ck;
}

std::vector<double> label_logprobs(const Tensor& logprobs, const std::vector<int>& labels) {
  std::vector<double> out;
  for (std::size_t n = 0; n < labels.size(); ++n) out.push_back(logprobs.at(n, static_cast<std::size_t>(labels[n])));
  return out;
}

Tensor partial_encoding(const ModelParams& mp, const Utterance& u, const Tensor& enc_full, int t) {
  if (mp.arch.causal_encoder) return first_rows(enc_full, static_cast<std::size_t>(t));
  return encode(mp, std::span<const int>(u.frames).first(static_cast<std::size_t>(t)));
}

}  // namespace

CeBatchLoss ce_batch_loss(const ModelGraph& g, const std::vector<const Utterance*>& utts,
                          const std::vector<std::vector<int>>& frames, double asr_weight, double smoothing,
                          DropoutCtx* drop) {
  if (utts.empty() || utts.size() != frames.size()) throw std::invalid_argument("ce_batch_loss: bad batch");
  const TokenVocab vocab = g.params().arch.vocab();
  CeBatchLoss out;
  std::vector<Var> tgt_losses, src_losses;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Var enc = g.encode(frames[i], drop);
    const TeacherForcing tf = translation_pair(vocab, utts[i]->tgt_tokens);
    tgt_losses.push_back(cross_entropy_loss(g.decode(enc, tf.inputs, drop).logprobs, tf.labels, {}, smoothing));
    ++out.tgt_sequences;
    if (asr_weight > 0.0) {
      const TeacherForcing sf = transcription_pair(vocab, utts[i]->src_tokens);
      src_losses.push_back(cross_entropy_loss(g.decode(enc, sf.inputs, drop).logprobs, sf.labels, {}, smoothing));
      ++out.src_sequences;
    }
  }
  Var l_tgt = ad::mean(ad::concat(tgt_losses));
  out.ce_tgt = l_tgt.value().item();
  out.total = l_tgt;
  if (!src_losses.empty()) {
    Var l_src = ad::mean(ad::concat(src_losses));
    out.ce_src = l_src.value().item();
    out.total = ad::add(l_tgt, ad::scale(l_src, asr_weight));
  }
  return out;
}

PolicyBatchLoss policy_batch_loss(const ModelGraph& g, const std::vector<PolicySample>& batch, PolicyLossKind kind,
                                  const LossConfig& lc) {
  const ModelParams& mp = g.params();
  const TokenVocab vocab = mp.arch.vocab();
  ad::Tape& tape = *g.param(0).tape();
  std::vector<Var> qs, hinges;
  std::vector<double> lp_part, lp_full, dist_part, dist_full;
  std::size_t positions = 0;
  for (const PolicySample& smp : batch) {
    const Utterance& u = *smp.utt;
    if (smp.t < 1 || smp.t > static_cast<int>(u.frames.size())) throw std::invalid_argument("policy sample t outside [1, T]");
    const TeacherForcing tf = translation_pair(vocab, u.tgt_tokens);
    const Tensor enc_full = encode(mp, u.frames);
    const DecoderStates full = decode_states(mp, enc_full, tf.inputs);
    const DecoderStates part = decode_states(mp, partial_encoding(mp, u, enc_full, smp.t), tf.inputs);
    Var q = g.policy(tape.constant(part.hidden));
    qs.push_back(q);
    if (kind == PolicyLossKind::kReina) hinges.push_back(ad::monotonicity_hinge(q, lc.epsilon));
    if (kind == PolicyLossKind::kDivergence) {
      for (double x : part.logprobs.data()) dist_part.push_back(std::exp(x));
      for (double x : full.logprobs.data()) dist_full.push_back(std::exp(x));
    } else {
      const auto a = label_logprobs(part.logprobs, tf.labels);
      const auto b = label_logprobs(full.logprobs, tf.labels);
      lp_part.insert(lp_part.end(), a.begin(), a.end());
      lp_full.insert(lp_full.end(), b.begin(), b.end());
    }
    positions += tf.labels.size();
  }
  if (positions < 2) throw std::invalid_argument("stage 3 batch has fewer than 2 valid positions");
  PolicyBatchLoss out;
  Var q = ad::concat(qs);
  if (kind == PolicyLossKind::kDivergence) {
    const auto v = static_cast<std::size_t>(vocab.size());
    out.total = divergence_baseline_loss(q, Tensor({positions, v}, dist_part), Tensor({positions, v}, dist_full), {});
    out.l_div = out.total.value().item();
    return out;
  }
  Var l_p = reina_policy_loss(q, tape.constant(Tensor::vector(lp_part)), tape.constant(Tensor::vector(lp_full)), {},
                              lc.bn_eps);
  Var l_m = hinges.empty() ? tape.constant(Tensor::scalar(0.0)) : ad::mean(ad::concat(hinges));
  Var l_r = l2_policy_loss(q, {});
  out.total = reina_total(l_p, l_m, l_r, lc.lambda);
  out.l_p = l_p.value().item();
  out.l_m = l_m.value().item();
  out.l_r = l_r.value().item();
  return out;
}

Checkpoint train_stage1(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data) {
  if (init.stage > 1) throw std::invalid_argument("stage 1 expects a fresh or stage-1 checkpoint");
  return train_ce(init, cfg, data, 1);
}

Checkpoint train_stage2(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data) {
  if (init.stage != 1) throw std::invalid_argument("stage 2 expects a stage-1 checkpoint");
  return train_ce(init, cfg, data, 2);
}

Checkpoint train_stage3_policy(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data) {
  cfg.validate();
  if (!(init.stage == 2 || (init.stage == 1 && cfg.allow_stage1_init))) {
    throw std::invalid_argument(
        "stage 3 expects a stage-2 checkpoint (or a stage-1 one with allow_stage1_init)");
  }
  Checkpoint ck = init;
  ck.log = ojson::array();
  ModelParams& mp = ck.params;
  check_compatible(mp.arch, data.params);
  const auto dev = capped(data.split("dev"), cfg.eval_max);
  Rng batch_rng(Rng::derive(cfg.seed, 1)), drop_rng(Rng::derive(cfg.seed, 2)), trunc_rng(Rng::derive(cfg.seed, 3));
  BatchSampler sampler(data.split("train"), batch_rng);
  const std::vector<std::size_t> idx = group_indices(mp, ParamGroup::kPolicy);
  const LossConfig& lc = cfg.loss;
  ad::OptimizerState opt;

  for (int step = 1; step <= cfg.steps; ++step) {
    StepStats s;
    try {
      ad::Tape tape;
      ModelGraph g(tape, mp, Trainable::kPolicy);
      std::vector<PolicySample> batch;
      for (const Utterance* u : sampler.next(cfg.batch_size)) {
        batch.push_back({u, trunc_rng.uniform_int(1, static_cast<int>(u->frames.size()))});
      }
      const PolicyBatchLoss bl = policy_batch_loss(g, batch, cfg.policy_loss, lc);
      s.l_p = bl.l_p;
      s.l_m = bl.l_m;
      s.l_r = bl.l_r;
      s.l_div = bl.l_div;
      const Var total = bl.total;
      s.loss = total.value().item();
      const ad::Gradients gr = tape.backward(total);
      std::vector<Tensor> grads;
      for (std::size_t i : idx) grads.push_back(gr[g.param(i)]);
      apply_update(mp, idx, grads, opt, cfg, step, s);
    } catch (const std::domain_error& e) {
      diverged(3, step, e.what());
    }
    if (!std::isfinite(s.loss) || !std::isfinite(s.grad_norm)) diverged(3, step, "non-finite loss or gradient");
    double dev_cov = std::numeric_limits<double>::quiet_NaN();
    const bool eval_now = (cfg.eval_every > 0 && step % cfg.eval_every == 0) || step == cfg.steps;
    if (eval_now && !dev.empty()) dev_cov = policy_dev_covariance(mp, dev, cfg.seed);
    ck.log.push_back(log_row(step, s, dev_cov));
  }
  ck.counters = {{"policy_loss", to_string(cfg.policy_loss)}};
  finish(ck, cfg, 3, to_string(cfg.policy_loss), batch_rng, drop_rng, trunc_rng);
  return ck;
}

Checkpoint train_stage(const Checkpoint& init, const TrainConfig& cfg, const Dataset& data) {
  switch (cfg.stage) {
    case 1: return train_stage1(init, cfg, data);
    case 2: return train_stage2(init, cfg, data);
    case 3: return train_stage3_policy(init, cfg, data);
    default: throw std::invalid_argument("train config: stage must be 1, 2 or 3");
  }
}

void write_train_log_csv(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const char* cols[] = {"step", "loss", "ce_tgt", "ce_src", "l_p", "l_m", "l_r", "l_div",
                        "grad_norm", "applied_norm", "clipped", "lr", "dev"};
  for (std::size_t i = 0; i < std::size(cols); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& row : ckpt.log) {
    for (std::size_t i = 0; i < std::size(cols); ++i) {
      if (i) out << ',';
      const auto& v = row.at(cols[i]);
      if (v.is_null()) continue;
      if (v.is_boolean()) {
        out << (v.get<bool>() ? 1 : 0);
      } else {
        out << v.dump();
      }
    }
    out << '\n';
  }
}

double mean_token_nll(const ModelParams& params, const std::vector<const Utterance*>& utts) {
  const TokenVocab vocab = params.arch.vocab();
  double total = 0.0;
  std::size_t count = 0;
  for (const Utterance* u : utts) {
    const TeacherForcing tf = translation_pair(vocab, u->tgt_tokens);
    const Tensor lp = decode_logprobs(params, encode(params, u->frames), tf.inputs);
    for (double x : label_logprobs(lp, tf.labels)) total -= x;
    count += tf.labels.size();
  }
  if (count == 0) throw std::invalid_argument("mean_token_nll: no utterances");
  return total / static_cast<double>(count);
}

double mean_token_nll(const ModelParams& params, const std::vector<Utterance>& utts) {
  std::vector<const Utterance*> ptrs;
  for (const auto& u : utts) ptrs.push_back(&u);
  return mean_token_nll(params, ptrs);
}

std::vector<Utterance> truncated_eval_set(const std::vector<const Utterance*>& utts, std::uint64_t seed) {
  std::vector<Utterance> out;
  for (const Utterance* u : utts) {
    Rng rng(Rng::derive(seed, fnv1a64(u->id)));
    Utterance cut = *u;
    const int T = static_cast<int>(u->frames.size());
    if (T > 1) cut.frames.resize(static_cast<std::size_t>(rng.uniform_int(1, T - 1)));
    out.push_back(std::move(cut));
  }
  return out;
}

PolicyProbe probe_policy(const ModelParams& params, const Utterance& utt, int t) {
  const int T = static_cast<int>(utt.frames.size());
  if (t < 1 || t > T) throw std::invalid_argument("probe_policy: t outside [1, T]");
  const TeacherForcing tf = translation_pair(params.arch.vocab(), utt.tgt_tokens);
  const Tensor enc_full = encode(params, utt.frames);
  const DecoderStates full = decode_states(params, enc_full, tf.inputs);
  const DecoderStates part = decode_states(params, partial_encoding(params, utt, enc_full, t), tf.inputs);
  return {policy_scores(params, part.hidden).r, label_logprobs(part.logprobs, tf.labels),
          label_logprobs(full.logprobs, tf.labels)};
}

double policy_dev_covariance(const ModelParams& params, const std::vector<const Utterance*>& utts,
                             std::uint64_t seed) {
  std::vector<double> q, f;
  for (const Utterance* u : utts) {
    Rng rng(Rng::derive(seed ^ 0x5eedULL, fnv1a64(u->id)));
    const PolicyProbe p = probe_policy(params, *u, rng.uniform_int(1, static_cast<int>(u->frames.size())));
    for (std::size_t n = 0; n < p.q.size(); ++n) {
      q.push_back(p.q[n]);
      f.push_back(p.logp_full[n] - p.logp_partial[n]);
    }
  }
  if (q.empty()) return 0.0;
  double mq = 0.0, mf = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    mq += q[i];
    mf += f[i];
  }
  mq /= static_cast<double>(q.size());
  mf /= static_cast<double>(q.size());
  double c = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) c += (q[i] - mq) * (f[i] - mf);
  return c / static_cast<double>(q.size());
}

}  // namespace reina
