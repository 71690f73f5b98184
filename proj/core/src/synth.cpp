#include "reina/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "reina/error.hpp"

namespace reina {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kCopy: return "copy";
    case TaskKind::kBlockReorder: return "block_reorder";
    case TaskKind::kNoisyChannel: return "noisy_channel";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "block_reorder") return TaskKind::kBlockReorder;
  if (s == "noisy_channel") return TaskKind::kNoisyChannel;
  throw std::invalid_argument("unknown task kind: " + s);
}

void TaskParams::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("task params: " + m); };
  if (source_vocab < 1) fail("source_vocab must be positive");
  if (target_vocab != source_vocab) fail("target_vocab must equal source_vocab (bijective map)");
  if (tokens < 1) fail("tokens must be positive");
  if (frames_per_token < 1) fail("frames_per_token must be positive");
  if (noise_symbols < 1) fail("noise_symbols must be positive");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) fail("noise_rate must lie in [0, 1)");
  if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) fail("swap_prob must lie in [0, 1]");
  if (!(frame_dur_s > 0.0)) fail("frame_dur_s must be positive");
  if (kind == TaskKind::kBlockReorder && block < 2) fail("block_reorder needs block >= 2");
}

double TaskParams::enumeration_size() const {
  return std::pow(static_cast<double>(source_vocab), tokens) * std::pow(2.0, blocks());
}

void to_json(nlohmann::json& j, const TaskParams& p) {
  j = nlohmann::json{{"kind", to_string(p.kind)},
                     {"source_vocab", p.source_vocab},
                     {"target_vocab", p.target_vocab},
                     {"tokens", p.tokens},
                     {"frames_per_token", p.frames_per_token},
                     {"noise_symbols", p.noise_symbols},
                     {"noise_rate", p.noise_rate},
                     {"block", p.block},
                     {"swap_prob", p.swap_prob},
                     {"frame_dur_s", p.frame_dur_s}};
}

void from_json(const nlohmann::json& j, TaskParams& p) {
  static const char* kKeys[] = {"kind", "source_vocab", "target_vocab", "tokens",
                                "frames_per_token", "noise_symbols", "noise_rate",
                                "block", "swap_prob", "frame_dur_s"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : kKeys) known = known || it.key() == k;
    if (!known) throw std::invalid_argument("task: unknown key '" + it.key() + "'");
  }
  p = TaskParams{};
  if (j.contains("kind")) p.kind = task_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("source_vocab")) p.source_vocab = j.at("source_vocab").get<int>();
  p.target_vocab = j.value("target_vocab", p.source_vocab);
  if (j.contains("tokens")) p.tokens = j.at("tokens").get<int>();
  if (j.contains("frames_per_token")) p.frames_per_token = j.at("frames_per_token").get<int>();
  if (j.contains("noise_symbols")) p.noise_symbols = j.at("noise_symbols").get<int>();
  if (j.contains("noise_rate")) p.noise_rate = j.at("noise_rate").get<double>();
  if (j.contains("block")) p.block = j.at("block").get<int>();
  if (j.contains("swap_prob")) p.swap_prob = j.at("swap_prob").get<double>();
  if (j.contains("frame_dur_s")) p.frame_dur_s = j.at("frame_dur_s").get<double>();
  p.validate();
}

std::vector<const Utterance*> Dataset::split(const std::string& name) const {
  std::vector<const Utterance*> out;
  for (const Utterance& u : utterances) {
    if (u.split == name) out.push_back(&u);
  }
  return out;
}

std::string split_for_id(const std::string& id) {
  const std::uint64_t bucket = fnv1a64(id) % 10;
  if (bucket < 8) return "train";
  return bucket == 8 ? "dev" : "test";
}

namespace {

// Source index feeding target position p, given the block's reorder indicator.
int source_index(const TaskParams& p, int pos, bool reversed) {
  if (!p.reorders() || !reversed) return pos;
  const int start = (pos / p.block) * p.block;
  const int end = std::min(start + p.block, p.tokens);
  return start + (end - 1 - pos);
}

}  // namespace

Dataset gen_task(const TaskParams& params, int count, std::uint64_t seed) {
  params.validate();
  if (count <= 0) throw std::invalid_argument("gen_task: count must be positive");
  Dataset ds;
  ds.params = params;
  ds.seed = seed;
  ds.utterances.reserve(static_cast<std::size_t>(count));
  const int m = params.tokens;
  for (int i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "utt-%06d", i);
    Utterance u;
    u.id = buf;
    u.split = split_for_id(u.id);
    u.frame_dur_s = params.frame_dur_s;
    Rng rng(Rng::derive(seed, fnv1a64(u.id)));
    u.src_tokens.resize(static_cast<std::size_t>(m));
    for (int& z : u.src_tokens) z = static_cast<int>(rng.below(static_cast<std::size_t>(params.source_vocab)));
    for (int z : u.src_tokens) {
      for (int f = 0; f < params.frames_per_token; ++f) {
        if (params.noise_rate > 0.0 && rng.bernoulli(params.noise_rate)) {
          u.frames.push_back(params.source_vocab +
                             static_cast<int>(rng.below(static_cast<std::size_t>(params.noise_symbols))));
        } else {
          u.frames.push_back(z);
        }
      }
    }
    std::vector<bool> reversed(static_cast<std::size_t>(params.blocks()), false);
    for (std::size_t b = 0; b < reversed.size(); ++b) {
      reversed[b] = params.swap_prob >= 1.0 ? true : rng.bernoulli(params.swap_prob);
    }
    u.tgt_tokens.resize(static_cast<std::size_t>(m));
    for (int pos = 0; pos < m; ++pos) {
      const bool rev = params.reorders() && reversed[static_cast<std::size_t>(pos / params.block)];
      u.tgt_tokens[static_cast<std::size_t>(pos)] =
          params.map_token(u.src_tokens[static_cast<std::size_t>(source_index(params, pos, rev))]);
    }
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

std::string utterance_jsonl(const Utterance& u) {
  nlohmann::ordered_json j;
  j["id"] = u.id;
  j["split"] = u.split;
  j["src_tokens"] = u.src_tokens;
  j["frames"] = u.frames;
  j["tgt_tokens"] = u.tgt_tokens;
  j["frame_dur_s"] = u.frame_dur_s;
  return j.dump();
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    nlohmann::ordered_json header;
    header["format"] = "reina-lab-dataset";
    header["version"] = 1;
    header["seed"] = ds.seed;
    header["count"] = ds.utterances.size();
    header["task"] = nlohmann::json(ds.params);
    std::ofstream os(dir / "task.json", std::ios::binary);
    os << header.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + (dir / "task.json").string());
  }
  std::ofstream os(dir / "dataset.jsonl", std::ios::binary);
  for (const Utterance& u : ds.utterances) os << utterance_jsonl(u) << '\n';
  if (!os) throw std::runtime_error("cannot write " + (dir / "dataset.jsonl").string());
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  std::ifstream hs(dir / "task.json", std::ios::binary);
  if (!hs) throw LoadError("cannot open " + (dir / "task.json").string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
    if (header.at("format") != "reina-lab-dataset" || header.at("version") != 1) {
      throw LoadError("unsupported dataset header in " + dir.string());
    }
    ds.params = header.at("task").get<TaskParams>();
    ds.seed = header.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed task.json: ") + e.what());
  }
  std::ifstream is(dir / "dataset.jsonl", std::ios::binary);
  if (!is) throw LoadError("cannot open " + (dir / "dataset.jsonl").string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      Utterance u;
      u.id = j.at("id").get<std::string>();
      u.split = j.at("split").get<std::string>();
      u.src_tokens = j.at("src_tokens").get<std::vector<int>>();
      u.frames = j.at("frames").get<std::vector<int>>();
      u.tgt_tokens = j.at("tgt_tokens").get<std::vector<int>>();
      u.frame_dur_s = j.at("frame_dur_s").get<double>();
      ds.utterances.push_back(std::move(u));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("dataset.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (ds.utterances.size() != header.at("count").get<std::size_t>()) {
    throw LoadError("dataset.jsonl is truncated: expected " + header.at("count").dump() + " utterances");
  }
  return ds;
}

namespace {

// Per-source-token posterior over the source vocabulary given the frames seen
// so far. Returns an empty vector if the observations have zero likelihood.
std::vector<std::vector<double>> token_posteriors(const TaskParams& p, std::span<const int> frames) {
  const auto vs = static_cast<std::size_t>(p.source_vocab);
  std::vector<std::vector<double>> post(static_cast<std::size_t>(p.tokens), std::vector<double>(vs, 1.0));
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const int sym = frames[f];
    if (sym < 0 || sym >= p.frame_vocab()) throw std::invalid_argument("frame symbol out of range");
    auto& row = post[f / static_cast<std::size_t>(p.frames_per_token)];
    if (sym >= p.source_vocab) {
      // Noise likelihood eta/|noise| is the same for every source symbol.
      if (p.noise_rate == 0.0) return {};
      continue;
    }
    for (std::size_t v = 0; v < vs; ++v) {
      if (static_cast<int>(v) != sym) row[v] = 0.0;
    }
  }
  for (auto& row : post) {
    double z = 0.0;
    for (double x : row) z += x;
    if (z == 0.0) return {};
    for (double& x : row) x /= z;
  }
  return post;
}

}  // namespace

ExactPosterior exact_posterior(const TaskParams& params, std::span<const int> frames_prefix,
                               std::span<const int> tgt_prefix) {
  params.validate();
  if (params.enumeration_size() > kEnumerationLimit) {
    throw ResourceLimitError("exact posterior enumeration of " +
                             std::to_string(params.enumeration_size()) + " states exceeds limit");
  }
  if (static_cast<int>(frames_prefix.size()) > params.total_frames()) {
    throw std::invalid_argument("exact_posterior: frame prefix longer than the utterance");
  }
  const int n = static_cast<int>(tgt_prefix.size());
  if (n >= params.tokens) throw std::invalid_argument("exact_posterior: no next token to predict");
  for (int y : tgt_prefix) {
    if (y < 0 || y >= params.target_vocab) throw std::invalid_argument("target token out of range");
  }
  auto post = token_posteriors(params, frames_prefix);
  if (post.empty()) throw std::invalid_argument("exact_posterior: frames impossible under the channel");

  const auto vt = static_cast<std::size_t>(params.target_vocab);
  ExactPosterior out;
  out.frames_seen = static_cast<int>(frames_prefix.size());
  out.tokens_given = n;
  out.probs.assign(vt, 0.0);

  // Blocks before the one containing n only constrain their own sources;
  // they factor out of the posterior but must still be consistent.
  auto prefix_weight = [&](int from, int to, bool reversed) {
    double w = 1.0;
    for (int pos = from; pos < to; ++pos) {
      const int src = source_index(params, pos, reversed);
      w *= post[static_cast<std::size_t>(src)][static_cast<std::size_t>(
          params.unmap_token(tgt_prefix[static_cast<std::size_t>(pos)]))];
    }
    return w;
  };
  const int block = params.reorders() ? params.block : 1;
  const int cur_start = (n / block) * block;
  for (int start = 0; start < cur_start; start += block) {
    const int end = std::min(start + block, params.tokens);
    double w = 0.0;
    for (int r = 0; r < 2; ++r) {
      const double prior = params.reorders() ? (r ? params.swap_prob : 1.0 - params.swap_prob) : (r ? 0.0 : 1.0);
      if (prior > 0.0) w += prior * prefix_weight(start, end, r == 1);
    }
    if (w == 0.0) throw std::invalid_argument("exact_posterior: target prefix impossible given frames");
  }
  for (int r = 0; r < 2; ++r) {
    const double prior = params.reorders() ? (r ? params.swap_prob : 1.0 - params.swap_prob) : (r ? 0.0 : 1.0);
    if (prior == 0.0) continue;
    const double w = prior * prefix_weight(cur_start, n, r == 1);
    if (w == 0.0) continue;
    const auto& row = post[static_cast<std::size_t>(source_index(params, n, r == 1))];
    for (std::size_t v = 0; v < row.size(); ++v) {
      out.probs[static_cast<std::size_t>(params.map_token(static_cast<int>(v)))] += w * row[v];
    }
  }
  double z = 0.0;
  for (double x : out.probs) z += x;
  if (z == 0.0) throw std::invalid_argument("exact_posterior: target prefix impossible given frames");
  for (double& x : out.probs) x /= z;
  return out;
}

double exact_info_gain(const TaskParams& params, const Utterance& utt, int n, int t) {
  const int big_t = static_cast<int>(utt.frames.size());
  const int big_n = static_cast<int>(utt.tgt_tokens.size());
  if (n < 0 || n >= big_n) throw std::invalid_argument("exact_info_gain: n out of range");
  if (t < 0 || t > big_t) throw std::invalid_argument("exact_info_gain: t out of range");
  std::span<const int> prefix(utt.tgt_tokens.data(), static_cast<std::size_t>(n));
  const ExactPosterior full = exact_posterior(params, utt.frames, prefix);
  const ExactPosterior part =
      exact_posterior(params, std::span<const int>(utt.frames.data(), static_cast<std::size_t>(t)), prefix);
  double gain = 0.0;
  for (std::size_t s = 0; s < full.probs.size(); ++s) {
    if (full.probs[s] > 0.0) gain += full.probs[s] * (std::log(full.probs[s]) - std::log(part.probs[s]));
  }
  return gain;
}

Utterance truncate_sample(const Utterance& utt, Rng& rng, double p_full) {
  if (!(p_full >= 0.0 && p_full <= 1.0)) throw std::invalid_argument("truncate_sample: p_full outside [0, 1]");
  const int big_t = static_cast<int>(utt.frames.size());
  if (big_t <= 1) return utt;
  if (rng.bernoulli(p_full)) return utt;
  Utterance out = utt;
  out.frames.resize(static_cast<std::size_t>(rng.uniform_int(1, big_t - 1)));
  return out;
}

}  // namespace reina
