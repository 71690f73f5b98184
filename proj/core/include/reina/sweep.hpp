#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "reina/decoder.hpp"
#include "reina/metrics.hpp"

namespace reina {

struct SweepResult {
  CurveSpec curve;
  std::vector<DecodeLogEntry> offline;
  std::vector<std::vector<DecodeLogEntry>> logs;  // one per swept value, in sweep order
  std::vector<double> values;                      // deduplicated sweep values
  std::vector<std::string> warnings;
};

// Stream-decodes the utterances once per value (alpha for the learned policy,
// k for wait-k) plus one offline pass for offline_bleu. When `csv_out` is set,
// the curve is written there; on a decode failure the points finished so far
// are written before the error propagates.
SweepResult sweep_curve(const ModelParams& params, const std::vector<const Utterance*>& utts,
                        const std::vector<double>& values, const DecodeConfig& cfg,
                        const std::filesystem::path& csv_out = {});

std::vector<double> parse_value_list(const std::string& csv);

// Thresholds at `points` evenly spaced quantiles of the policy scores probed
// over every (position, frames-kept) pair of the given utterances, sorted and
// deduplicated. Lets each policy be swept over the range its scores occupy.
std::vector<double> auto_thresholds(const ModelParams& params, const std::vector<const Utterance*>& utts,
                                    int points);

}  // namespace reina
