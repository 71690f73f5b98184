#include "reina/sweep.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "reina/trainer.hpp"

namespace reina {

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw std::invalid_argument("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

SweepResult sweep_curve(const ModelParams& params, const std::vector<const Utterance*>& utts,
                        const std::vector<double>& values, const DecodeConfig& cfg,
                        const std::filesystem::path& csv_out) {
  if (values.empty()) throw std::invalid_argument("sweep: value list is empty");
  if (utts.empty()) throw std::invalid_argument("sweep: no utterances");
  SweepResult res;
  for (double v : values) {
    bool dup = false;
    for (double seen : res.values) dup = dup || seen == v;
    if (dup) {
      std::ostringstream w;
      w << "duplicate sweep value " << v << " ignored";
      res.warnings.push_back(w.str());
    } else {
      res.values.push_back(v);
    }
  }
  const bool waitk = cfg.policy == PolicyKind::kWaitK;
  for (double v : res.values) {
    if (waitk && (v < 1.0 || v != static_cast<double>(static_cast<int>(v)))) {
      throw std::invalid_argument("sweep: wait-k values must be positive integers");
    }
    if (!waitk && !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("sweep: alpha values must lie in [0, 1]");
  }
  res.curve.policy = to_string(cfg.policy);
  res.offline = decode_utterances(params, utts, cfg, DecodeMode::kOffline);
  res.curve.offline_bleu = log_bleu(res.offline);
  std::vector<CurvePoint> points;
  auto flush = [&] {
    res.curve.points = points;
    sort_points(res.curve.points);
    if (!csv_out.empty()) write_curve_csv(res.curve, csv_out);
  };
  try {
    for (double v : res.values) {
      DecodeConfig c = cfg;
      if (waitk) {
        c.wait_k = static_cast<int>(v);
      } else {
        c.alpha = v;
      }
      res.logs.push_back(decode_utterances(params, utts, c, DecodeMode::kStream));
      points.push_back(score_log(res.logs.back(), v));
    }
  } catch (...) {
    flush();
    throw;
  }
  flush();
  return res;
}

std::vector<double> auto_thresholds(const ModelParams& params, const std::vector<const Utterance*>& utts,
                                    int points) {
  if (points < 1) throw std::invalid_argument("auto_thresholds: points must be >= 1");
  std::vector<double> scores;
  for (const Utterance* u : utts) {
    for (int t = 1; t <= static_cast<int>(u->frames.size()); ++t) {
      const PolicyProbe p = probe_policy(params, *u, t);
      scores.insert(scores.end(), p.q.begin(), p.q.end());
    }
  }
  if (scores.empty()) throw std::invalid_argument("auto_thresholds: no utterances");
  std::sort(scores.begin(), scores.end());
  std::vector<double> out;
  for (int i = 1; i <= points; ++i) {
    const double pos = static_cast<double>(i) / (points + 1) * static_cast<double>(scores.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, scores.size() - 1);
    const double v = scores[lo] + (pos - static_cast<double>(lo)) * (scores[hi] - scores[lo]);
    if (out.empty() || v > out.back()) out.push_back(v);
  }
  return out;
}

}  // namespace reina
