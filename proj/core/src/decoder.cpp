#include "reina/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "reina/error.hpp"
#include "reina/parallel.hpp"

namespace reina {

using ad::Tensor;

std::string to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kLearned: return "learned";
    case PolicyKind::kWaitK: return "waitk";
    case PolicyKind::kAlwaysRead: return "always_read";
    case PolicyKind::kNeverRead: return "never_read";
  }
  return "?";
}

PolicyKind policy_kind_from_string(const std::string& s) {
  if (s == "learned") return PolicyKind::kLearned;
  if (s == "waitk") return PolicyKind::kWaitK;
  if (s == "always_read") return PolicyKind::kAlwaysRead;
  if (s == "never_read") return PolicyKind::kNeverRead;
  throw std::invalid_argument("unknown policy kind '" + s + "'");
}

void DecodeConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("decode config: " + m); };
  if (!(chunk_s > 0.0)) fail("chunk_s must be > 0");
  if (beam < 1) fail("beam must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha must lie in [0, 1]");
  if (max_len < 0) fail("max_len must be >= 0");
  if (wait_k < 1) fail("wait_k must be >= 1");
  if (!std::isfinite(length_penalty)) fail("length_penalty must be finite");
}

void to_json(nlohmann::json& j, const DecodeConfig& c) {
  j = nlohmann::json{{"chunk_s", c.chunk_s},   {"beam", c.beam},       {"patience", c.patience},
                     {"length_penalty", c.length_penalty}, {"alpha", c.alpha}, {"max_len", c.max_len},
                     {"policy", to_string(c.policy)},      {"wait_k", c.wait_k}, {"full_reencode", c.full_reencode}};
}

void from_json(const nlohmann::json& j, DecodeConfig& c) {
  if (!j.is_object()) throw std::invalid_argument("decode config must be a JSON object");
  const nlohmann::json defaults = DecodeConfig{};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw std::invalid_argument("decode: unknown key '" + it.key() + "'");
  }
  c = DecodeConfig{};
  c.chunk_s = j.value("chunk_s", c.chunk_s);
  c.beam = j.value("beam", c.beam);
  c.patience = j.value("patience", c.patience);
  c.length_penalty = j.value("length_penalty", c.length_penalty);
  c.alpha = j.value("alpha", c.alpha);
  c.max_len = j.value("max_len", c.max_len);
  c.policy = policy_kind_from_string(j.value("policy", to_string(c.policy)));
  c.wait_k = j.value("wait_k", c.wait_k);
  c.full_reencode = j.value("full_reencode", c.full_reencode);
}

double Hypothesis::average_logprob() const {
  return tokens.empty() ? 0.0 : logprob / static_cast<double>(tokens.size());
}

int frames_per_chunk(double chunk_s, double frame_dur_s) {
  if (!(frame_dur_s > 0.0)) throw std::invalid_argument("frame duration must be > 0");
  const double ratio = chunk_s / frame_dur_s;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9) {
    throw std::invalid_argument("chunk_s must be a positive whole multiple of the frame duration");
  }
  return static_cast<int>(r);
}

namespace {

Tensor first_rows(const Tensor& x, std::size_t n) {
  const std::size_t c = x.cols();
  return Tensor({n, c}, std::vector<double>(x.storage().begin(), x.storage().begin() + n * c));
}

int length_limit(const ModelParams& params, const DecodeConfig& cfg) {
  const int model_limit = params.arch.max_tokens - 1;
  return cfg.max_len > 0 ? std::min(cfg.max_len, model_limit) : model_limit;
}

double selection_score(const Hypothesis& h, const DecodeConfig& cfg) {
  return h.average_logprob() + cfg.length_penalty * static_cast<double>(h.tokens.size());
}

std::vector<int> decoder_input(const TokenVocab& vocab, std::span<const int> committed, const Hypothesis& h) {
  std::vector<int> ids{TokenVocab::kTgtTag};
  for (int y : committed) ids.push_back(vocab.target_id(y));
  ids.insert(ids.end(), h.tokens.begin(), h.tokens.end());
  return ids;
}

struct Candidate {
  std::size_t parent;
  int token;
  double logprob;
  double total;
};

}  // namespace

SearchOutcome beam_search(const ModelParams& params, const Tensor& enc, std::span<const int> committed,
                          const DecodeConfig& cfg, std::optional<PolicyKind> policy, bool allow_eos) {
  cfg.validate();
  const TokenVocab vocab = params.arch.vocab();
  const std::size_t beam = static_cast<std::size_t>(cfg.beam);
  const std::size_t limit = beam * static_cast<std::size_t>(cfg.patience);
  const int max_len = length_limit(params, cfg);
  SearchOutcome out;
  std::vector<Hypothesis> alive(1);

  while (!alive.empty() && out.finished.size() < limit) {
    std::vector<Candidate> cands;
    std::vector<Hypothesis> expanding;
    for (Hypothesis& h : alive) {
      if (static_cast<int>(committed.size() + h.tokens.size()) >= max_len) {
        h.status = HypStatus::kCompleted;
        h.forced = true;
        out.finished.push_back(std::move(h));
        continue;
      }
      const std::vector<int> ids = decoder_input(vocab, committed, h);
      const DecoderStates st = decode_states(params, enc, ids, true);
      ++out.expansions;
      if (policy) {
        const PolicyKind kind = *policy;
        double r = 0.0;
        bool read = false;
        if (kind == PolicyKind::kAlwaysRead) {
          r = 1.0;
          read = true;
        } else if (kind == PolicyKind::kLearned) {
          r = policy_scores(params, st.hidden).r.back();
          read = r > cfg.alpha;
        }
        h.policy_scores.push_back(r);
        if (read) {
          h.status = HypStatus::kWaited;
          out.finished.push_back(std::move(h));
          continue;
        }
      }
      const std::size_t parent = expanding.size();
      for (int tok = 0; tok < vocab.size(); ++tok) {
        const bool is_eos = tok == TokenVocab::kEos;
        if (!vocab.is_target(tok) && !(is_eos && allow_eos)) continue;
        const double lp = st.logprobs.at(0, static_cast<std::size_t>(tok));
        cands.push_back({parent, tok, lp, h.logprob + lp});
      }
      expanding.push_back(std::move(h));
    }
    if (out.finished.size() >= limit) break;
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.total > b.total; });
    std::vector<Hypothesis> next;
    for (std::size_t rank = 0; rank < cands.size() && next.size() < beam; ++rank) {
      const Candidate& c = cands[rank];
      if (c.token == TokenVocab::kEos && rank >= beam) continue;
      Hypothesis nh = expanding[c.parent];
      nh.tokens.push_back(c.token);
      nh.token_logprobs.push_back(c.logprob);
      nh.logprob = c.total;
      if (c.token == TokenVocab::kEos) {
        nh.status = HypStatus::kCompleted;
        out.finished.push_back(std::move(nh));
        if (out.finished.size() >= limit) break;
      } else {
        next.push_back(std::move(nh));
      }
    }
    alive = std::move(next);
  }

  if (out.finished.empty()) throw std::logic_error("beam search finished without hypotheses");
  std::size_t best = 0;
  for (std::size_t i = 1; i < out.finished.size(); ++i) {
    if (selection_score(out.finished[i], cfg) > selection_score(out.finished[best], cfg)) best = i;
  }
  out.best = out.finished[best];
  return out;
}

namespace {

// Appends the hypothesis' target symbols to `committed`; true if it ended the output.
bool commit(const TokenVocab& vocab, const Hypothesis& h, double at_s, DecodeResult& res) {
  for (int id : h.tokens) {
    if (id == TokenVocab::kEos) return true;
    res.tokens.push_back(vocab.target_of(id));
    res.trace.d.push_back(at_s);
  }
  res.score = h.average_logprob();
  if (h.forced) {
    res.forced = true;
    return true;
  }
  return h.status == HypStatus::kCompleted;
}

class ChunkedSource {
 public:
  ChunkedSource(const ModelParams& params, std::span<const int> frames, double frame_dur_s, const DecodeConfig& cfg)
      : params_(params), frames_(frames), cfg_(cfg) {
    if (frames.empty()) throw std::invalid_argument("decode: empty frame sequence");
    fpc_ = frames_per_chunk(cfg.chunk_s, frame_dur_s);
    chunks_ = (static_cast<int>(frames.size()) + fpc_ - 1) / fpc_;
    total_s_ = static_cast<double>(frames.size()) * frame_dur_s;
    incremental_ = params.arch.causal_encoder && !cfg.full_reencode;
    if (incremental_) full_ = encode(params, frames);
  }

  int chunks() const { return chunks_; }
  double total_s() const { return total_s_; }
  // Seconds consumed after chunk c (1-based); the last chunk reports the total.
  double consumed_s(int c) const { return c >= chunks_ ? total_s_ : c * cfg_.chunk_s; }

  Tensor encoding(int c) const {
    const std::size_t t = std::min(frames_.size(), static_cast<std::size_t>(c) * static_cast<std::size_t>(fpc_));
    if (incremental_) return t == frames_.size() ? full_ : first_rows(full_, t);
    return encode(params_, frames_.first(t));
  }

 private:
  const ModelParams& params_;
  std::span<const int> frames_;
  const DecodeConfig& cfg_;
  int fpc_ = 1;
  int chunks_ = 0;
  double total_s_ = 0.0;
  bool incremental_ = false;
  Tensor full_;
};

}  // namespace

DecodeResult offline_beam_decode(const ModelParams& params, std::span<const int> frames, const DecodeConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("decode: empty frame sequence");
  const SearchOutcome s = beam_search(params, encode(params, frames), {}, cfg, std::nullopt, true);
  DecodeResult res;
  res.trace.total_s = 0.0;
  commit(params.arch.vocab(), s.best, 0.0, res);
  return res;
}

DecodeResult stream_decode(const ModelParams& params, std::span<const int> frames, double frame_dur_s,
                           const DecodeConfig& cfg) {
  cfg.validate();
  if (cfg.policy == PolicyKind::kWaitK) return waitk_decode(params, frames, frame_dur_s, cfg.wait_k, cfg);
  const ChunkedSource src(params, frames, frame_dur_s, cfg);
  const TokenVocab vocab = params.arch.vocab();
  DecodeResult res;
  res.trace.total_s = src.total_s();
  for (int c = 1; c <= src.chunks(); ++c) {
    std::optional<PolicyKind> policy;
    if (c < src.chunks()) policy.emplace(cfg.policy);
    const SearchOutcome s = beam_search(params, src.encoding(c), res.tokens, cfg, policy, true);
    if (commit(vocab, s.best, src.consumed_s(c), res)) break;
  }
  return res;
}

DecodeResult waitk_decode(const ModelParams& params, std::span<const int> frames, double frame_dur_s, int k,
                          const DecodeConfig& cfg) {
  cfg.validate();
  if (k < 1) throw std::invalid_argument("waitk_decode: k must be >= 1");
  const ChunkedSource src(params, frames, frame_dur_s, cfg);
  const TokenVocab vocab = params.arch.vocab();
  const int max_len = length_limit(params, cfg);
  DecodeResult res;
  res.trace.total_s = src.total_s();
  for (int c = 1; c <= src.chunks(); ++c) {
    const Tensor enc = src.encoding(c);
    if (c == src.chunks()) {
      const SearchOutcome s = beam_search(params, enc, res.tokens, cfg, std::nullopt, true);
      commit(vocab, s.best, src.consumed_s(c), res);
      break;
    }
    if (c < k || static_cast<int>(res.tokens.size()) >= max_len) continue;
    // One greedy WRITE per READ; EOS is held back until the audio ends.
    Hypothesis one;
    std::vector<int> ids{TokenVocab::kTgtTag};
    for (int y : res.tokens) ids.push_back(vocab.target_id(y));
    const Tensor lp = decode_states(params, enc, ids, true).logprobs;
    int best = vocab.target_id(0);
    for (int y = 1; y < vocab.target_size; ++y) {
      if (lp.at(0, static_cast<std::size_t>(vocab.target_id(y))) > lp.at(0, static_cast<std::size_t>(best))) {
        best = vocab.target_id(y);
      }
    }
    one.tokens = {best};
    one.logprob = lp.at(0, static_cast<std::size_t>(best));
    one.status = HypStatus::kWaited;
    commit(vocab, one, src.consumed_s(c), res);
  }
  return res;
}

nlohmann::ordered_json to_json(const DecodeLogEntry& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["alpha"] = e.alpha;
  j["policy"] = e.policy;
  j["tokens"] = e.tokens;
  j["d"] = e.delays;
  j["T_s"] = e.total_s;
  j["ref_tokens"] = e.ref_tokens;
  if (e.offline_tokens) j["offline_reference_tokens"] = *e.offline_tokens;
  return j;
}

DecodeLogEntry decode_log_from_json(const nlohmann::json& j) {
  DecodeLogEntry e;
  e.id = j.at("id").get<std::string>();
  e.alpha = j.at("alpha").get<double>();
  e.policy = j.value("policy", "");
  e.tokens = j.at("tokens").get<std::vector<int>>();
  e.delays = j.at("d").get<std::vector<double>>();
  e.total_s = j.at("T_s").get<double>();
  e.ref_tokens = j.value("ref_tokens", std::vector<int>{});
  if (j.contains("offline_reference_tokens")) e.offline_tokens = j.at("offline_reference_tokens").get<std::vector<int>>();
  if (e.tokens.size() != e.delays.size()) throw LoadError("decode log entry " + e.id + ": tokens and d differ in length");
  return e;
}

void write_decode_log(const std::vector<DecodeLogEntry>& entries, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& e : entries) out << to_json(e).dump() << '\n';
}

std::vector<DecodeLogEntry> read_decode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open decode log " + path.string());
  std::vector<DecodeLogEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(decode_log_from_json(nlohmann::json::parse(line)));
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw LoadError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "offline") return DecodeMode::kOffline;
  if (s == "stream") return DecodeMode::kStream;
  if (s == "waitk") return DecodeMode::kWaitK;
  throw std::invalid_argument("unknown decode mode '" + s + "'");
}

std::vector<DecodeLogEntry> decode_utterances(const ModelParams& params, const std::vector<const Utterance*>& utts,
                                              const DecodeConfig& cfg, DecodeMode mode) {
  cfg.validate();
  std::vector<DecodeLogEntry> out(utts.size());
  parallel_for(utts.size(), [&](std::size_t i) {
    const Utterance& u = *utts[i];
    DecodeLogEntry& e = out[i];
    e.id = u.id;
    e.ref_tokens = u.tgt_tokens;
    e.total_s = u.duration_s();
    DecodeResult r;
    switch (mode) {
      case DecodeMode::kOffline:
        r = offline_beam_decode(params, u.frames, cfg);
        r.trace.d.assign(r.tokens.size(), u.duration_s());
        e.policy = "offline";
        break;
      case DecodeMode::kStream:
        r = stream_decode(params, u.frames, u.frame_dur_s, cfg);
        e.policy = to_string(cfg.policy);
        e.alpha = cfg.policy == PolicyKind::kWaitK ? cfg.wait_k : cfg.alpha;
        break;
      case DecodeMode::kWaitK:
        r = waitk_decode(params, u.frames, u.frame_dur_s, cfg.wait_k, cfg);
        e.policy = "waitk";
        e.alpha = cfg.wait_k;
        break;
    }
    e.tokens = r.tokens;
    e.delays = r.trace.d;
  });
  return out;
}

}  // namespace reina
