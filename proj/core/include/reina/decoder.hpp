#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/model.hpp"
#include "reina/synth.hpp"

namespace reina {

enum class PolicyKind { kLearned, kWaitK, kAlwaysRead, kNeverRead };

std::string to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& s);

struct DecodeConfig {
  double chunk_s = 0.25;
  int beam = 3;
  int patience = 3;
  double length_penalty = 0.0;  // added per generated token to the average log-prob
  double alpha = 0.5;           // READ iff r > alpha
  int max_len = 0;              // 0: limited only by the model's max_tokens
  PolicyKind policy = PolicyKind::kLearned;
  int wait_k = 1;
  bool full_reencode = false;   // rerun the encoder on every chunk prefix

  void validate() const;
};

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

enum class HypStatus { kAlive, kWaited, kCompleted };

struct Hypothesis {
  std::vector<int> tokens;  // decoder ids generated in this search (EOS last if completed)
  double logprob = 0.0;
  std::vector<double> token_logprobs;
  std::vector<double> policy_scores;  // r at each position where the policy was consulted
  HypStatus status = HypStatus::kAlive;
  bool forced = false;  // completed by the length limit

  double average_logprob() const;
};

struct DelayTrace {
  std::vector<double> d;  // seconds consumed when token i was committed
  double total_s = 0.0;
};

struct DecodeResult {
  std::vector<int> tokens;  // target symbols, EOS excluded
  DelayTrace trace;
  double score = 0.0;  // average log-prob of the final selected hypothesis
  bool forced = false;
};

// Beam search over a fixed encoding from a committed prefix of target symbols.
// With `policy_alpha`, beams whose policy score exceeds it are moved to the
// waited set; without it the search runs to completion. Returns the
// waited/completed hypothesis with the highest average log-prob.
struct SearchOutcome {
  Hypothesis best;
  std::vector<Hypothesis> finished;
  int expansions = 0;
};
SearchOutcome beam_search(const ModelParams& params, const ad::Tensor& enc, std::span<const int> committed,
                          const DecodeConfig& cfg, std::optional<PolicyKind> policy, bool allow_eos);

DecodeResult offline_beam_decode(const ModelParams& params, std::span<const int> frames, const DecodeConfig& cfg);
DecodeResult stream_decode(const ModelParams& params, std::span<const int> frames, double frame_dur_s,
                           const DecodeConfig& cfg);
DecodeResult waitk_decode(const ModelParams& params, std::span<const int> frames, double frame_dur_s, int k,
                          const DecodeConfig& cfg);

// Frames consumed per chunk; chunk_s must be a whole multiple of frame_dur_s.
int frames_per_chunk(double chunk_s, double frame_dur_s);

struct DecodeLogEntry {
  std::string id;
  double alpha = 0.0;
  std::string policy;
  std::vector<int> tokens;
  std::vector<double> delays;
  double total_s = 0.0;
  std::vector<int> ref_tokens;
  std::optional<std::vector<int>> offline_tokens;
};

nlohmann::ordered_json to_json(const DecodeLogEntry& e);
DecodeLogEntry decode_log_from_json(const nlohmann::json& j);
void write_decode_log(const std::vector<DecodeLogEntry>& entries, const std::filesystem::path& path);
std::vector<DecodeLogEntry> read_decode_log(const std::filesystem::path& path);

enum class DecodeMode { kOffline, kStream, kWaitK };
DecodeMode decode_mode_from_string(const std::string& s);

// Decodes every utterance (in parallel up to REINA_LAB_THREADS), in input order.
std::vector<DecodeLogEntry> decode_utterances(const ModelParams& params, const std::vector<const Utterance*>& utts,
                                              const DecodeConfig& cfg, DecodeMode mode);

}  // namespace reina
