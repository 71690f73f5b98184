#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "reina/checkpoint.hpp"
#include "reina/decoder.hpp"
#include "reina/metrics.hpp"
#include "reina/sweep.hpp"
#include "reina/synth.hpp"
#include "reina/trainer.hpp"

namespace reina {

struct DataSpec {
  int count = 2000;
  std::uint64_t seed = 1;
};

struct SweepSpec {
  std::vector<double> alphas{0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0};
  bool auto_alphas = false;  // per-policy thresholds at score quantiles on the dev split
  int auto_points = 15;
  int auto_utterances = 50;
  std::vector<double> waitk{1, 2, 3, 4, 5, 6};
  std::string split = "test";
  int max_utterances = 0;  // 0 = whole split
  std::optional<std::pair<double, double>> bounds;  // default: shared bounds of the compared curves
  double matched_bleu_fraction = 0.9;               // operating point for the AL comparison
};

struct ExperimentConfig {
  TaskParams task;
  DataSpec data;
  ArchConfig arch;
  TrainConfig stage1;
  TrainConfig stage2;
  TrainConfig stage3;
  DecodeConfig decode;
  SweepSpec sweep;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs/default";
};

// Schema-checked parse; unknown keys at any level are rejected.
ExperimentConfig parse_experiment(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& cfg);

enum class System { kReina, kReinaNoMono, kDivergence, kReinaFromStage1, kWaitK };
std::string system_name(System s);

// Writes the resolved config and run metadata (seed list, version) to `dir`.
void write_run_metadata(const std::filesystem::path& dir, const nlohmann::ordered_json& resolved,
                        const std::string& command);

// Refuses to reuse a non-empty directory unless `force` is set.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

// Lazily trains and sweeps each (seed, system) once, persisting every
// artifact under the output directory.
class ExperimentRunner {
 public:
  ExperimentRunner(ExperimentConfig cfg, std::filesystem::path out_dir, std::ostream* progress = nullptr);

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& output_dir() const { return out_; }
  const Dataset& dataset();
  std::vector<const Utterance*> sweep_utterances();

  const Checkpoint& stage1(std::uint64_t seed);
  const Checkpoint& stage2(std::uint64_t seed);
  const Checkpoint& policy(std::uint64_t seed, System system);
  const SweepResult& curve(std::uint64_t seed, System system);

 private:
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  void note(const std::string& msg);
  TrainConfig stage_config(const TrainConfig& base, std::uint64_t seed, int stage) const;

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::ostream* progress_;
  std::unique_ptr<Dataset> data_;
  std::map<std::pair<std::uint64_t, int>, Checkpoint> ckpts_;
  std::map<std::pair<std::uint64_t, int>, SweepResult> curves_;
};

// Smallest AL at which the piecewise-linear curve reaches `bleu`; +inf if never.
double min_al_reaching(const CurveSpec& curve, double bleu);

struct ComparisonRow {
  std::string system;
  double nose = 0.0;
  double offline_bleu = 0.0;
  double al_at_matched_bleu = 0.0;
};

struct Comparison {
  std::string which;
  std::uint64_t seed = 0;
  double x = 0.0;
  double y = 0.0;
  double matched_bleu = 0.0;
  std::vector<ComparisonRow> rows;

  const ComparisonRow& row(const std::string& system) const;
};

std::vector<System> ablation_systems(const std::string& which);

// One comparison per configured seed; also writes ablation-<which>.json/.txt.
std::vector<Comparison> run_ablation(ExperimentRunner& runner, const std::string& which);
Comparison compare_systems(ExperimentRunner& runner, std::uint64_t seed, const std::string& which);

nlohmann::ordered_json to_json(const Comparison& c);
std::string format_comparisons(const std::vector<Comparison>& comps);

// Full pipeline for every seed: data, three stages, REINA sweep, NoSE report.
void run_pipeline(ExperimentRunner& runner);

}  // namespace reina
