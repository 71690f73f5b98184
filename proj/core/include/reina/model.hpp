#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/ops.hpp"
#include "reina/rng.hpp"
#include "reina/synth.hpp"
#include "reina/tape.hpp"
#include "reina/tensor.hpp"

namespace reina {

// Decoder vocabulary: five specials, then target symbols, then source symbols
// (the latter only used by the auxiliary transcription task under <src>).
struct TokenVocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kTgtTag = 3;
  static constexpr int kSrcTag = 4;
  static constexpr int kSpecials = 5;

  int target_size = 0;
  int source_size = 0;

  int size() const { return kSpecials + target_size + source_size; }
  int target_id(int y) const { return kSpecials + y; }
  int source_id(int z) const { return kSpecials + target_size + z; }
  bool is_target(int id) const { return id >= kSpecials && id < kSpecials + target_size; }
  int target_of(int id) const { return id - kSpecials; }
};

struct ArchConfig {
  int d_model = 32;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int policy_layers = 2;
  int policy_heads = 2;
  int ff_mult = 4;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int max_frames = 64;
  int max_tokens = 64;
  int frame_vocab = 0;
  int target_vocab = 0;
  int source_vocab = 0;
  bool causal_encoder = true;

  TokenVocab vocab() const { return {target_vocab, source_vocab}; }
  void validate() const;
  // Fills vocabulary sizes from a task and checks the length limits cover it.
  void bind_task(const TaskParams& task);
};

void to_json(nlohmann::json& j, const ArchConfig& a);
void from_json(const nlohmann::json& j, ArchConfig& a);

enum class ParamGroup { kBase, kPolicy };

struct BlockSlots {
  std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
  bool has_cross = false;
  std::size_t lnc_g = 0, lnc_b = 0, cwq = 0, cbq = 0, cwk = 0, cbk = 0, cwv = 0, cbv = 0, cwo = 0, cbo = 0;
  std::size_t ln2_g, ln2_b, w1, b1, w2, b2;
};

// Index of every tensor in ModelParams, derived deterministically from ArchConfig.
struct ModelLayout {
  std::size_t frame_emb, enc_pos;
  std::vector<BlockSlots> encoder;
  std::size_t enc_ln_g, enc_ln_b;
  std::size_t tok_emb, dec_pos;
  std::vector<BlockSlots> decoder;
  std::size_t dec_ln_g, dec_ln_b, out_w, out_b;
  std::vector<BlockSlots> policy;
  std::size_t pol_ln_g, pol_ln_b, pol_w, pol_b;
};

struct ModelParams {
  ArchConfig arch;
  ModelLayout layout;
  std::vector<std::string> names;
  std::vector<ad::Tensor> tensors;
  std::vector<ParamGroup> groups;

  std::size_t index_of(const std::string& name) const;
  std::size_t count(ParamGroup g) const;
};

// Deterministic given (cfg, seed); linear weights use fan-in scaling.
ModelParams init_params(const ArchConfig& cfg, std::uint64_t seed);

enum class Trainable { kNone, kBase, kPolicy, kAll };

struct DropoutCtx {
  double p = 0.0;
  Rng* rng = nullptr;
};

// Binds ModelParams onto a tape and builds the forward graph.
class ModelGraph {
 public:
  ModelGraph(ad::Tape& tape, const ModelParams& params, Trainable trainable);
  // Uses caller-supplied leaves (one per tensor, same order) in place of params' values.
  ModelGraph(const ModelParams& params, std::vector<ad::Var> leaves);

  // One state per frame; state i depends only on frames <= i when the encoder is causal.
  ad::Var encode(std::span<const int> frames, DropoutCtx* drop = nullptr) const;

  struct DecoderOut {
    ad::Var hidden;    // [len, d] final-layer states
    ad::Var logprobs;  // [len, V], or [1, V] for the last position only
  };
  // Teacher-forced decoder pass; row n of logprobs predicts token n+1.
  DecoderOut decode(ad::Var enc, std::span<const int> tokens, DropoutCtx* drop = nullptr,
                    bool last_row_only = false) const;

  // r_n in (0,1) for each decoder position, causal over positions.
  ad::Var policy(ad::Var hidden, DropoutCtx* drop = nullptr) const;

  ad::Var param(std::size_t index) const { return leaves_[index]; }
  const std::vector<ad::Var>& leaves() const { return leaves_; }
  const ModelParams& params() const { return *params_; }

 private:
  ad::Var block(const BlockSlots& s, ad::Var x, const ad::Var* memory, ad::AttentionMask mask,
                std::size_t heads, DropoutCtx* drop) const;

  ad::Tape* tape_;
  const ModelParams* params_;
  std::vector<ad::Var> leaves_;
};

struct PolicyScores {
  std::vector<double> r;
};

struct DecoderStates {
  ad::Tensor hidden;
  ad::Tensor logprobs;
};

// Value-level forward passes (no gradient bookkeeping).
ad::Tensor encode(const ModelParams& params, std::span<const int> frames);
DecoderStates decode_states(const ModelParams& params, const ad::Tensor& enc_states,
                            std::span<const int> token_prefix, bool last_row_only = false);
ad::Tensor decode_logprobs(const ModelParams& params, const ad::Tensor& enc_states,
                           std::span<const int> token_prefix);
PolicyScores policy_scores(const ModelParams& params, const ad::Tensor& decoder_states);

// Decoder input [tag, y_1..y_N] and labels [y_1..y_N, EOS] for an utterance.
struct TeacherForcing {
  std::vector<int> inputs;
  std::vector<int> labels;
};
TeacherForcing translation_pair(const TokenVocab& vocab, std::span<const int> tgt_tokens);
TeacherForcing transcription_pair(const TokenVocab& vocab, std::span<const int> src_tokens);

}  // namespace reina
