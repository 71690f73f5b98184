#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/rng.hpp"

namespace reina {

enum class TaskKind { kCopy, kBlockReorder, kNoisyChannel };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& s);

// Generative process for one synthetic stream-translation task.
//
// Source tokens are drawn i.i.d. uniform over the source vocabulary. Each
// token emits `frames_per_token` frames; a frame equals its token with
// probability 1 - noise_rate and is otherwise uniform over a disjoint noise
// alphabet (frame ids source_vocab .. source_vocab + noise_symbols - 1).
// Targets are g(source) for the bijection g(z) = (z + 1) mod |V|; for
// block_reorder each block of `block` tokens is reversed with probability
// swap_prob (1.0 gives the deterministic reorder).
struct TaskParams {
  TaskKind kind = TaskKind::kCopy;
  int source_vocab = 5;
  int target_vocab = 5;
  int tokens = 4;
  int frames_per_token = 1;
  int noise_symbols = 4;
  double noise_rate = 0.0;
  int block = 2;
  double swap_prob = 1.0;
  double frame_dur_s = 0.25;

  void validate() const;
  int frame_vocab() const { return source_vocab + noise_symbols; }
  int total_frames() const { return tokens * frames_per_token; }
  bool reorders() const { return kind == TaskKind::kBlockReorder; }
  int blocks() const { return reorders() ? (tokens + block - 1) / block : 0; }
  // |V_s|^M * 2^(#blocks) for reorder tasks, |V_s|^M otherwise.
  double enumeration_size() const;
  int map_token(int z) const { return (z + 1) % target_vocab; }
  int unmap_token(int y) const { return (y + target_vocab - 1) % target_vocab; }
};

void to_json(nlohmann::json& j, const TaskParams& p);
void from_json(const nlohmann::json& j, TaskParams& p);

inline constexpr double kEnumerationLimit = 1e7;

struct Utterance {
  std::string id;
  std::string split;
  std::vector<int> src_tokens;
  std::vector<int> frames;
  std::vector<int> tgt_tokens;
  double frame_dur_s = 0.25;

  double duration_s() const { return static_cast<double>(frames.size()) * frame_dur_s; }
};

struct Dataset {
  TaskParams params;
  std::uint64_t seed = 0;
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> split(const std::string& name) const;
};

// Split assignment by FNV-1a hash of the id: 80% train, 10% dev, 10% test.
std::string split_for_id(const std::string& id);

Dataset gen_task(const TaskParams& params, int count, std::uint64_t seed);

// JSONL body (one utterance per line) plus a task.json sidecar header.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);
std::string utterance_jsonl(const Utterance& u);

struct ExactPosterior {
  std::vector<double> probs;  // over the target vocabulary
  int frames_seen = 0;
  int tokens_given = 0;
};

// Bayes posterior of target token n+1 given a frame prefix and the first n
// target tokens, computed by exact marginalization over sources and reorder
// indicators. Throws ResourceLimitError when enumeration_size() exceeds the
// limit and std::invalid_argument for inconsistent or out-of-range inputs.
ExactPosterior exact_posterior(const TaskParams& params, std::span<const int> frames_prefix,
                               std::span<const int> tgt_prefix);

// E_{s ~ p(.|a_T,S_n)}[log p(s|a_T,S_n) - log p(s|a_t,S_n)] for the
// utterance's own target prefix S_n.
double exact_info_gain(const TaskParams& params, const Utterance& utt, int n, int t);

// With probability p_full returns utt unchanged, else keeps a uniform number of
// frames in [1, T-1]. Tokens are never modified.
Utterance truncate_sample(const Utterance& utt, Rng& rng, double p_full);

}  // namespace reina
