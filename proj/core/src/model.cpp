#include "reina/model.hpp"

#include <cmath>
#include <stdexcept>

namespace reina {

using ad::Tensor;
using ad::Var;

void ArchConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("arch config: " + m); };
  if (d_model <= 0 || heads <= 0 || policy_heads <= 0 || ff_mult <= 0) fail("sizes must be positive");
  if (d_model % heads != 0) fail("d_model must be divisible by heads");
  if (d_model % policy_heads != 0) fail("d_model must be divisible by policy_heads");
  if (encoder_layers <= 0 || decoder_layers <= 0 || policy_layers <= 0) fail("layer counts must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) fail("label_smoothing must lie in [0, 1)");
  if (max_frames <= 0 || max_tokens <= 0) fail("max lengths must be positive");
  if (frame_vocab <= 0 || target_vocab <= 0 || source_vocab <= 0) fail("vocabulary sizes must be positive");
}

void ArchConfig::bind_task(const TaskParams& task) {
  frame_vocab = task.frame_vocab();
  target_vocab = task.target_vocab;
  source_vocab = task.source_vocab;
  if (max_frames < task.total_frames()) {
    throw std::invalid_argument("arch config: max_frames below the task's frame count");
  }
  if (max_tokens < task.tokens + 2) {
    throw std::invalid_argument("arch config: max_tokens too small for tag + tokens + EOS");
  }
}

void to_json(nlohmann::json& j, const ArchConfig& a) {
  j = nlohmann::json{{"d_model", a.d_model},
                     {"heads", a.heads},
                     {"encoder_layers", a.encoder_layers},
                     {"decoder_layers", a.decoder_layers},
                     {"policy_layers", a.policy_layers},
                     {"policy_heads", a.policy_heads},
                     {"ff_mult", a.ff_mult},
                     {"dropout", a.dropout},
                     {"label_smoothing", a.label_smoothing},
                     {"max_frames", a.max_frames},
                     {"max_tokens", a.max_tokens},
                     {"frame_vocab", a.frame_vocab},
                     {"target_vocab", a.target_vocab},
                     {"source_vocab", a.source_vocab},
                     {"causal_encoder", a.causal_encoder}};
}

void from_json(const nlohmann::json& j, ArchConfig& a) {
  nlohmann::json defaults = ArchConfig{};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw std::invalid_argument("arch: unknown key '" + it.key() + "'");
  }
  a = ArchConfig{};
  a.d_model = j.value("d_model", a.d_model);
  a.heads = j.value("heads", a.heads);
  a.encoder_layers = j.value("encoder_layers", a.encoder_layers);
  a.decoder_layers = j.value("decoder_layers", a.decoder_layers);
  a.policy_layers = j.value("policy_layers", a.policy_layers);
  a.policy_heads = j.value("policy_heads", a.policy_heads);
  a.ff_mult = j.value("ff_mult", a.ff_mult);
  a.dropout = j.value("dropout", a.dropout);
  a.label_smoothing = j.value("label_smoothing", a.label_smoothing);
  a.max_frames = j.value("max_frames", a.max_frames);
  a.max_tokens = j.value("max_tokens", a.max_tokens);
  a.frame_vocab = j.value("frame_vocab", a.frame_vocab);
  a.target_vocab = j.value("target_vocab", a.target_vocab);
  a.source_vocab = j.value("source_vocab", a.source_vocab);
  a.causal_encoder = j.value("causal_encoder", a.causal_encoder);
}

std::size_t ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw std::invalid_argument("unknown parameter " + name);
}

std::size_t ModelParams::count(ParamGroup g) const {
  std::size_t n = 0;
  for (ParamGroup x : groups) n += x == g ? 1 : 0;
  return n;
}

namespace {

enum class Init { kFanIn, kSmallFanIn, kEmbedding, kZero, kOne };

struct Registrar {
  ModelParams& mp;
  std::vector<Init> inits;

  std::size_t add(const std::string& name, ad::Shape shape, ParamGroup group, Init init) {
    mp.names.push_back(name);
    mp.tensors.emplace_back(std::move(shape), 0.0);
    mp.groups.push_back(group);
    inits.push_back(init);
    return mp.names.size() - 1;
  }

  BlockSlots block(const std::string& prefix, std::size_t d, std::size_t ff, bool cross, ParamGroup g) {
    BlockSlots s{};
    s.ln1_g = add(prefix + ".ln1.g", {d}, g, Init::kOne);
    s.ln1_b = add(prefix + ".ln1.b", {d}, g, Init::kZero);
    s.wq = add(prefix + ".attn.wq", {d, d}, g, Init::kFanIn);
    s.bq = add(prefix + ".attn.bq", {d}, g, Init::kZero);
    s.wk = add(prefix + ".attn.wk", {d, d}, g, Init::kFanIn);
    s.bk = add(prefix + ".attn.bk", {d}, g, Init::kZero);
    s.wv = add(prefix + ".attn.wv", {d, d}, g, Init::kFanIn);
    s.bv = add(prefix + ".attn.bv", {d}, g, Init::kZero);
    s.wo = add(prefix + ".attn.wo", {d, d}, g, Init::kFanIn);
    s.bo = add(prefix + ".attn.bo", {d}, g, Init::kZero);
    if (cross) {
      s.has_cross = true;
      s.lnc_g = add(prefix + ".lnc.g", {d}, g, Init::kOne);
      s.lnc_b = add(prefix + ".lnc.b", {d}, g, Init::kZero);
      s.cwq = add(prefix + ".cross.wq", {d, d}, g, Init::kFanIn);
      s.cbq = add(prefix + ".cross.bq", {d}, g, Init::kZero);
      s.cwk = add(prefix + ".cross.wk", {d, d}, g, Init::kFanIn);
      s.cbk = add(prefix + ".cross.bk", {d}, g, Init::kZero);
      s.cwv = add(prefix + ".cross.wv", {d, d}, g, Init::kFanIn);
      s.cbv = add(prefix + ".cross.bv", {d}, g, Init::kZero);
      s.cwo = add(prefix + ".cross.wo", {d, d}, g, Init::kFanIn);
      s.cbo = add(prefix + ".cross.bo", {d}, g, Init::kZero);
    }
    s.ln2_g = add(prefix + ".ln2.g", {d}, g, Init::kOne);
    s.ln2_b = add(prefix + ".ln2.b", {d}, g, Init::kZero);
    s.w1 = add(prefix + ".ff.w1", {d, ff}, g, Init::kFanIn);
    s.b1 = add(prefix + ".ff.b1", {ff}, g, Init::kZero);
    s.w2 = add(prefix + ".ff.w2", {ff, d}, g, Init::kFanIn);
    s.b2 = add(prefix + ".ff.b2", {d}, g, Init::kZero);
    return s;
  }
};

// Registers every tensor (zero-filled) and returns their init rules.
std::vector<Init> build(ModelParams& mp) {
  const ArchConfig& a = mp.arch;
  const auto d = static_cast<std::size_t>(a.d_model);
  const auto ff = static_cast<std::size_t>(a.d_model * a.ff_mult);
  const auto vocab = static_cast<std::size_t>(a.vocab().size());
  Registrar r{mp, {}};
  ModelLayout& L = mp.layout;
  const ParamGroup base = ParamGroup::kBase, pol = ParamGroup::kPolicy;
  L.frame_emb = r.add("enc.frame_emb", {static_cast<std::size_t>(a.frame_vocab), d}, base, Init::kEmbedding);
  L.enc_pos = r.add("enc.pos", {static_cast<std::size_t>(a.max_frames), d}, base, Init::kEmbedding);
  for (int i = 0; i < a.encoder_layers; ++i) {
    L.encoder.push_back(r.block("enc." + std::to_string(i), d, ff, false, base));
  }
  L.enc_ln_g = r.add("enc.ln.g", {d}, base, Init::kOne);
  L.enc_ln_b = r.add("enc.ln.b", {d}, base, Init::kZero);
  L.tok_emb = r.add("dec.tok_emb", {vocab, d}, base, Init::kEmbedding);
  L.dec_pos = r.add("dec.pos", {static_cast<std::size_t>(a.max_tokens), d}, base, Init::kEmbedding);
  for (int i = 0; i < a.decoder_layers; ++i) {
    L.decoder.push_back(r.block("dec." + std::to_string(i), d, ff, true, base));
  }
  L.dec_ln_g = r.add("dec.ln.g", {d}, base, Init::kOne);
  L.dec_ln_b = r.add("dec.ln.b", {d}, base, Init::kZero);
  L.out_w = r.add("dec.out.w", {d, vocab}, base, Init::kSmallFanIn);
  L.out_b = r.add("dec.out.b", {vocab}, base, Init::kZero);
  for (int i = 0; i < a.policy_layers; ++i) {
    L.policy.push_back(r.block("policy." + std::to_string(i), d, ff, false, pol));
  }
  L.pol_ln_g = r.add("policy.ln.g", {d}, pol, Init::kOne);
  L.pol_ln_b = r.add("policy.ln.b", {d}, pol, Init::kZero);
  L.pol_w = r.add("policy.out.w", {d, 1}, pol, Init::kFanIn);
  L.pol_b = r.add("policy.out.b", {1}, pol, Init::kZero);
  return r.inits;
}

}  // namespace

ModelParams init_params(const ArchConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams mp;
  mp.arch = cfg;
  const std::vector<Init> inits = build(mp);
  for (std::size_t i = 0; i < mp.tensors.size(); ++i) {
    Tensor& t = mp.tensors[i];
    Rng rng(Rng::derive(seed, i));
    const double fan_in = static_cast<double>(t.rows());
    double a = 0.0;
    switch (inits[i]) {
      case Init::kFanIn: a = std::sqrt(3.0 / fan_in); break;
      case Init::kSmallFanIn: a = 0.1 * std::sqrt(3.0 / fan_in); break;
      case Init::kEmbedding: a = 0.5 * std::sqrt(3.0); break;
      case Init::kZero: t.fill(0.0); continue;
      case Init::kOne: t.fill(1.0); continue;
    }
    for (double& x : t.data()) x = rng.uniform(-a, a);
  }
  return mp;
}

ModelGraph::ModelGraph(ad::Tape& tape, const ModelParams& params, Trainable trainable)
    : tape_(&tape), params_(&params) {
  leaves_.reserve(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const bool is_policy = params.groups[i] == ParamGroup::kPolicy;
    const bool train = trainable == Trainable::kAll ||
                       (trainable == Trainable::kBase && !is_policy) ||
                       (trainable == Trainable::kPolicy && is_policy);
    leaves_.push_back(tape.leaf(params.tensors[i], train));
  }
}

ModelGraph::ModelGraph(const ModelParams& params, std::vector<Var> leaves)
    : tape_(leaves.empty() ? nullptr : leaves.front().tape()), params_(&params), leaves_(std::move(leaves)) {
  if (leaves_.size() != params.tensors.size()) throw std::invalid_argument("ModelGraph: leaf count mismatch");
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    if (leaves_[i].shape() != params.tensors[i].shape()) {
      throw std::invalid_argument("ModelGraph: shape mismatch for " + params.names[i]);
    }
  }
}

namespace {

Var maybe_dropout(Var x, DropoutCtx* drop) {
  if (!drop || drop->p == 0.0) return x;
  return ad::dropout(x, drop->p, *drop->rng);
}

}  // namespace

Var ModelGraph::block(const BlockSlots& s, Var x, const Var* memory, ad::AttentionMask mask,
                      std::size_t heads, DropoutCtx* drop) const {
  auto p = [this](std::size_t i) { return leaves_[i]; };
  auto linear = [&](Var in, std::size_t w, std::size_t b) { return ad::add_bias(ad::matmul(in, p(w)), p(b)); };

  Var h = ad::layer_norm(x, p(s.ln1_g), p(s.ln1_b));
  Var a = ad::attention(linear(h, s.wq, s.bq), linear(h, s.wk, s.bk), linear(h, s.wv, s.bv), heads, mask);
  x = ad::add(x, maybe_dropout(linear(a, s.wo, s.bo), drop));
  if (memory) {
    h = ad::layer_norm(x, p(s.lnc_g), p(s.lnc_b));
    a = ad::attention(linear(h, s.cwq, s.cbq), linear(*memory, s.cwk, s.cbk), linear(*memory, s.cwv, s.cbv),
                      heads, ad::AttentionMask::kNone);
    x = ad::add(x, maybe_dropout(linear(a, s.cwo, s.cbo), drop));
  }
  h = ad::layer_norm(x, p(s.ln2_g), p(s.ln2_b));
  Var f = linear(ad::gelu(linear(h, s.w1, s.b1)), s.w2, s.b2);
  return ad::add(x, maybe_dropout(f, drop));
}

Var ModelGraph::encode(std::span<const int> frames, DropoutCtx* drop) const {
  const ArchConfig& a = params_->arch;
  const ModelLayout& L = params_->layout;
  if (frames.empty()) throw std::invalid_argument("encode: empty frame prefix");
  if (static_cast<int>(frames.size()) > a.max_frames) throw std::invalid_argument("encode: too many frames");
  Var x = ad::add(ad::embedding(leaves_[L.frame_emb], frames), ad::slice_rows(leaves_[L.enc_pos], 0, frames.size()));
  x = maybe_dropout(x, drop);
  const auto mask = a.causal_encoder ? ad::AttentionMask::kCausal : ad::AttentionMask::kNone;
  for (const BlockSlots& s : L.encoder) x = block(s, x, nullptr, mask, static_cast<std::size_t>(a.heads), drop);
  return ad::layer_norm(x, leaves_[L.enc_ln_g], leaves_[L.enc_ln_b]);
}

ModelGraph::DecoderOut ModelGraph::decode(Var enc, std::span<const int> tokens, DropoutCtx* drop,
                                          bool last_row_only) const {
  const ArchConfig& a = params_->arch;
  const ModelLayout& L = params_->layout;
  const TokenVocab vocab = a.vocab();
  if (tokens.empty()) throw std::invalid_argument("decode: empty token prefix");
  if (tokens[0] != TokenVocab::kTgtTag && tokens[0] != TokenVocab::kSrcTag) {
    throw std::invalid_argument("decode: token prefix must start with a task tag");
  }
  if (static_cast<int>(tokens.size()) > a.max_tokens) throw std::invalid_argument("decode: prefix too long");
  for (int t : tokens) {
    if (t < 0 || t >= vocab.size()) throw std::invalid_argument("decode: unknown token id " + std::to_string(t));
  }
  Var x = ad::add(ad::embedding(leaves_[L.tok_emb], tokens), ad::slice_rows(leaves_[L.dec_pos], 0, tokens.size()));
  x = maybe_dropout(x, drop);
  for (const BlockSlots& s : L.decoder) {
    x = block(s, x, &enc, ad::AttentionMask::kCausal, static_cast<std::size_t>(a.heads), drop);
  }
  Var hidden = ad::layer_norm(x, leaves_[L.dec_ln_g], leaves_[L.dec_ln_b]);
  Var proj_in = last_row_only ? ad::slice_rows(hidden, tokens.size() - 1, tokens.size()) : hidden;
  Var logits = ad::add_bias(ad::matmul(proj_in, leaves_[L.out_w]), leaves_[L.out_b]);
  return {hidden, ad::log_softmax(logits)};
}

Var ModelGraph::policy(Var hidden, DropoutCtx* drop) const {
  const ArchConfig& a = params_->arch;
  const ModelLayout& L = params_->layout;
  Var x = hidden;
  for (const BlockSlots& s : L.policy) {
    x = block(s, x, nullptr, ad::AttentionMask::kCausal, static_cast<std::size_t>(a.policy_heads), drop);
  }
  x = ad::layer_norm(x, leaves_[L.pol_ln_g], leaves_[L.pol_ln_b]);
  Var logit = ad::add_bias(ad::matmul(x, leaves_[L.pol_w]), leaves_[L.pol_b]);
  return ad::sigmoid(ad::reshape(logit, {logit.value().rows()}));
}

Tensor encode(const ModelParams& params, std::span<const int> frames) {
  ad::Tape tape;
  ModelGraph g(tape, params, Trainable::kNone);
  return g.encode(frames).value();
}

DecoderStates decode_states(const ModelParams& params, const Tensor& enc_states,
                            std::span<const int> token_prefix, bool last_row_only) {
  ad::Tape tape;
  ModelGraph g(tape, params, Trainable::kNone);
  Var enc = tape.leaf(enc_states, false);
  auto out = g.decode(enc, token_prefix, nullptr, last_row_only);
  return {out.hidden.value(), out.logprobs.value()};
}

Tensor decode_logprobs(const ModelParams& params, const Tensor& enc_states, std::span<const int> token_prefix) {
  return decode_states(params, enc_states, token_prefix).logprobs;
}

PolicyScores policy_scores(const ModelParams& params, const Tensor& decoder_states) {
  if (decoder_states.rank() != 2 || decoder_states.rows() == 0) {
    throw std::invalid_argument("policy_scores: expected at least one decoder state");
  }
  ad::Tape tape;
  ModelGraph g(tape, params, Trainable::kNone);
  Var r = g.policy(tape.leaf(decoder_states, false));
  const Tensor& v = r.value();
  return {std::vector<double>(v.data().begin(), v.data().end())};
}

TeacherForcing translation_pair(const TokenVocab& vocab, std::span<const int> tgt_tokens) {
  TeacherForcing tf;
  tf.inputs.push_back(TokenVocab::kTgtTag);
  for (int y : tgt_tokens) {
    tf.inputs.push_back(vocab.target_id(y));
    tf.labels.push_back(vocab.target_id(y));
  }
  tf.labels.push_back(TokenVocab::kEos);
  return tf;
}

TeacherForcing transcription_pair(const TokenVocab& vocab, std::span<const int> src_tokens) {
  TeacherForcing tf;
  tf.inputs.push_back(TokenVocab::kSrcTag);
  for (int z : src_tokens) {
    tf.inputs.push_back(vocab.source_id(z));
    tf.labels.push_back(vocab.source_id(z));
  }
  tf.labels.push_back(TokenVocab::kEos);
  return tf;
}

}  // namespace reina
