#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/decoder.hpp"

namespace reina {

using TokenSeq = std::vector<int>;

// Corpus BLEU on 0-100 with 1-4-gram clipped precisions. A zero match count
// for n >= 2 is replaced by 1/(total+1); brevity penalty exp(min(0, 1 - r/c)).
double corpus_bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references);

struct LagResult {
  double seconds = 0.0;
  bool empty_hypothesis = false;  // AL defined as T_s
};

LagResult average_lagging(const DelayTrace& trace, int ref_len);
// AL with the pacing denominator max(ref_len, hyp_len).
LagResult laal(const DelayTrace& trace, int ref_len, int hyp_len);

struct CurvePoint {
  double alpha = 0.0;
  double al = 0.0;
  double laal = 0.0;
  double bleu = 0.0;
  int n_sentences = 0;
};

struct CurveSpec {
  std::vector<CurvePoint> points;  // sorted by AL
  double x = 0.0;
  double y = 0.0;
  double offline_bleu = 0.0;
  std::string policy;  // informational label
};

// Normalized area under the piecewise-linear BLEU(AL) curve over [x, y].
// Throws OutOfDomainError if the curve does not cover [x, y] or x >= y.
double nose(const CurveSpec& curve);

// Widest [x, y] covered by every curve: max of minimum ALs, min of maximum ALs.
std::pair<double, double> shared_bounds(std::span<const CurveSpec> curves);

std::string format_bounds(double x, double y);

void sort_points(std::vector<CurvePoint>& points);

void write_curve_csv(const CurveSpec& curve, const std::filesystem::path& path);
CurveSpec read_curve_csv(const std::filesystem::path& path);

nlohmann::ordered_json nose_report(const CurveSpec& curve, double value);

// Aggregates one curve point from a decode log.
CurvePoint score_log(const std::vector<DecodeLogEntry>& log, double alpha);
double log_bleu(const std::vector<DecodeLogEntry>& log);

}  // namespace reina
