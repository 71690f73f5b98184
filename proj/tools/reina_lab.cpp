#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reina/checkpoint.hpp"
#include "reina/decoder.hpp"
#include "reina/error.hpp"
#include "reina/experiment.hpp"
#include "reina/gradcheck_suite.hpp"
#include "reina/metrics.hpp"
#include "reina/sweep.hpp"
#include "reina/synth.hpp"
#include "reina/trainer.hpp"
#include "reina/version.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace reina;

namespace {

// Raised for flag combinations CLI11 cannot express; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const LoadError*>(&e)) return "load";
  if (dynamic_cast<const OutOfDomainError*>(&e)) return "out_of_domain";
  if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
  if (dynamic_cast<const ResourceLimitError*>(&e)) return "resource_limit";
  if (dynamic_cast<const std::invalid_argument*>(&e)) return "invalid_argument";
  return "runtime";
}

int report_error(const std::string& kind, const std::string& message, int code) {
  ordered_json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  std::cerr << j.dump() << '\n';
  return code;
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    throw std::runtime_error(path.string() + " already exists (use --force to overwrite)");
  }
}

void require_distinct(const fs::path& input, const fs::path& output) {
  if (fs::exists(input) && fs::exists(output) && fs::equivalent(input, output)) {
    throw UsageError("output " + output.string() + " would overwrite input " + input.string());
  }
}

void write_sidecar(const fs::path& artifact, const ordered_json& meta) {
  std::ofstream f(artifact.string() + ".meta.json", std::ios::trunc);
  f << meta.dump(2) << '\n';
}

ordered_json base_meta(const std::string& command) {
  ordered_json m;
  m["version"] = version_string();
  m["command"] = command;
  return m;
}

// Data source shared by decode/sweep/train: an existing dataset directory, or
// the dataset regenerated deterministically from an experiment config.
struct DataSource {
  std::string config;
  std::string data;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", config, "Experiment config JSON")->check(CLI::ExistingFile);
    cmd->add_option("--data", data, "Dataset directory written by gen-data")->check(CLI::ExistingDirectory);
  }
  std::optional<ExperimentConfig> experiment() const {
    if (config.empty()) return std::nullopt;
    return load_experiment(config);
  }
  Dataset load() const {
    if (!data.empty()) return read_dataset(data);
    if (!config.empty()) {
      const ExperimentConfig cfg = load_experiment(config);
      return gen_task(cfg.task, cfg.data.count, cfg.data.seed);
    }
    throw UsageError("one of --data or --config is required");
  }
};

std::vector<const Utterance*> select_split(const Dataset& ds, const std::string& split, int limit) {
  auto utts = ds.split(split);
  if (utts.empty()) throw std::runtime_error("split '" + split + "' is empty");
  if (limit > 0 && static_cast<int>(utts.size()) > limit) utts.resize(static_cast<std::size_t>(limit));
  return utts;
}

struct GenDataCmd {
  std::string config, out;
  bool force = false;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    c->add_option("--config", config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output directory")->required();
    c->add_flag("--force", force, "Overwrite a non-empty output directory");
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    const ExperimentConfig cfg = load_experiment(config);
    prepare_output_dir(out, force);
    const Dataset ds = gen_task(cfg.task, cfg.data.count, cfg.data.seed);
    write_dataset(ds, out);
    write_run_metadata(out, to_json(cfg), command);
    std::cout << "wrote " << ds.utterances.size() << " utterances to " << out << '\n';
  }
};

struct TrainCmd {
  int stage = 0;
  DataSource src;
  std::string init, out, policy_loss;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  bool force = false;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("train", "Train one stage and write a checkpoint");
    c->add_option("--stage", stage, "Stage 1, 2 or 3")->required()->check(CLI::IsMember({1, 2, 3}));
    src.add(c);
    c->get_option("--config")->required();
    c->add_option("--init", init, "Checkpoint to start from (required for stages 2 and 3)")
        ->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output checkpoint path")->required();
    c->add_option("--seed", seed, "Run seed (default: first configured seed)");
    c->add_option("--steps", steps, "Override the configured step count");
    c->add_option("--policy-loss", policy_loss, "Stage-3 objective: reina, reina_no_mono, divergence");
    c->add_flag("--force", force, "Overwrite existing outputs");
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    if (stage >= 2 && init.empty()) throw UsageError("--init is required for stage " + std::to_string(stage));
    if (!init.empty()) require_distinct(init, out);
    const ExperimentConfig cfg = *src.experiment();
    const std::uint64_t run_seed = seed.value_or(cfg.seeds.front());
    refuse_overwrite(out, force);

    TrainConfig tc = stage == 1 ? cfg.stage1 : stage == 2 ? cfg.stage2 : cfg.stage3;
    tc.stage = stage;
    tc.seed = Rng::derive(run_seed, static_cast<std::uint64_t>(stage));
    if (steps) tc.steps = *steps;
    if (!policy_loss.empty()) tc.policy_loss = policy_loss_from_string(policy_loss);

    const Checkpoint start = init.empty() ? fresh_checkpoint(cfg.arch, run_seed) : load_checkpoint(init);
    const Dataset ds = src.load();
    const Checkpoint ck = train_stage(start, tc, ds);

    if (const fs::path dir = fs::path(out).parent_path(); !dir.empty()) fs::create_directories(dir);
    save_checkpoint(ck, out);
    write_train_log_csv(ck, out + ".log.csv");
    ordered_json meta = base_meta(command);
    meta["seed"] = run_seed;
    meta["stage"] = stage;
    meta["init"] = init;
    meta["config"] = to_json(cfg);
    write_sidecar(out, meta);
    std::cout << "wrote " << out << '\n';
  }
};

struct DecodeCmd {
  std::string mode = "stream", ckpt, split = "test", out;
  DataSource src;
  double alpha = 0.5;
  int k = 1, limit = 0;
  bool force = false;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("decode", "Decode a split and write a JSONL decode log");
    c->add_option("--mode", mode, "offline, stream or waitk")
        ->check(CLI::IsMember({"offline", "stream", "waitk"}));
    c->add_option("--alpha", alpha, "READ threshold for the learned policy")->check(CLI::Range(0.0, 1.0));
    c->add_option("--k", k, "Wait-k lag in chunks")->check(CLI::PositiveNumber);
    c->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "dev", "test"}));
    c->add_option("--limit", limit, "Decode at most this many utterances");
    src.add(c);
    c->add_option("--out", out, "Output decode log (JSONL)")->required();
    c->add_flag("--force", force, "Overwrite an existing log");
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    require_distinct(ckpt, out);
    refuse_overwrite(out, force);
    const auto exp = src.experiment();
    DecodeConfig dc = exp ? exp->decode : DecodeConfig{};
    const DecodeMode dm = decode_mode_from_string(mode);
    dc.alpha = alpha;
    dc.wait_k = k;
    if (dm == DecodeMode::kWaitK) dc.policy = PolicyKind::kWaitK;
    const Checkpoint ck = load_checkpoint(ckpt);
    const Dataset ds = src.load();
    const auto utts = select_split(ds, split, limit);
    const auto log = decode_utterances(ck.params, utts, dc, dm);
    write_decode_log(log, out);
    ordered_json meta = base_meta(command);
    meta["checkpoint"] = ckpt;
    meta["mode"] = mode;
    meta["split"] = split;
    meta["decode"] = nlohmann::json(dc);
    write_sidecar(out, meta);
    const CurvePoint p = score_log(log, dm == DecodeMode::kWaitK ? k : alpha);
    std::cout << "decoded " << log.size() << " utterances: BLEU " << shortest(p.bleu) << ", AL "
              << shortest(p.al) << " s\n";
  }
};

struct SweepCmd {
  std::string alphas = "auto", ckpt, out, split = "test", policy = "learned", logs;
  DataSource src;
  int points = 15, limit = 0;
  bool force = false;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("sweep", "Trace a latency/quality curve and write it as CSV");
    c->add_option("--alphas", alphas, "Comma-separated thresholds (or k values for waitk), or 'auto'");
    c->add_option("--points", points, "Number of thresholds when --alphas auto")->check(CLI::PositiveNumber);
    c->add_option("--policy", policy, "learned or waitk")->check(CLI::IsMember({"learned", "waitk"}));
    c->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--split", split, "Dataset split")->check(CLI::IsMember({"train", "dev", "test"}));
    c->add_option("--limit", limit, "Decode at most this many utterances");
    src.add(c);
    c->add_option("--out", out, "Output curve CSV")->required();
    c->add_option("--logs", logs, "Directory for per-point decode logs");
    c->add_flag("--force", force, "Overwrite existing outputs");
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    require_distinct(ckpt, out);
    refuse_overwrite(out, force);
    if (!logs.empty()) prepare_output_dir(logs, force);
    const auto exp = src.experiment();
    DecodeConfig dc = exp ? exp->decode : DecodeConfig{};
    dc.policy = policy == "waitk" ? PolicyKind::kWaitK : PolicyKind::kLearned;
    const Checkpoint ck = load_checkpoint(ckpt);
    const Dataset ds = src.load();
    const auto utts = select_split(ds, split, limit);

    std::vector<double> values;
    if (alphas == "auto") {
      if (dc.policy == PolicyKind::kWaitK) throw UsageError("--alphas auto applies to the learned policy only");
      auto dev = ds.split("dev");
      const int n = exp ? exp->sweep.auto_utterances : 50;
      dev.resize(std::min<std::size_t>(dev.size(), static_cast<std::size_t>(n)));
      values = auto_thresholds(ck.params, dev, points);
    } else {
      try {
        values = parse_value_list(alphas);
      } catch (const std::exception& e) {
        throw UsageError(std::string("--alphas: ") + e.what());
      }
    }
    const SweepResult r = sweep_curve(ck.params, utts, values, dc, out);
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
    if (!logs.empty()) {
      write_decode_log(r.offline, fs::path(logs) / "offline.jsonl");
      for (std::size_t i = 0; i < r.values.size(); ++i) {
        std::ostringstream name;
        name << "point-" << std::setw(2) << std::setfill('0') << i << ".jsonl";
        write_decode_log(r.logs[i], fs::path(logs) / name.str());
      }
    }
    ordered_json meta = base_meta(command);
    meta["checkpoint"] = ckpt;
    meta["split"] = split;
    meta["values"] = r.values;
    meta["decode"] = nlohmann::json(dc);
    write_sidecar(out, meta);
    std::cout << "wrote " << r.curve.points.size() << " points to " << out << " (offline BLEU "
              << shortest(r.curve.offline_bleu) << ")\n";
  }
};

struct ScoreCmd {
  std::string metric, log;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("score", "Score a decode log");
    c->add_option("--metric", metric, "bleu, al or laal")->required()->check(CLI::IsMember({"bleu", "al", "laal"}));
    c->add_option("--log", log, "Decode log (JSONL)")->required()->check(CLI::ExistingFile);
    c->callback([this] { run(); });
  }
  void run() const {
    const auto entries = read_decode_log(log);
    if (entries.empty()) throw std::runtime_error(log + " contains no entries");
    const CurvePoint p = score_log(entries, entries.front().alpha);
    const double v = metric == "bleu" ? p.bleu : metric == "al" ? p.al : p.laal;
    std::cout << shortest(v) << '\n';
  }
};

struct NoseCmd {
  std::string curve;
  std::vector<double> bounds;
  bool json = false;

  void setup(CLI::App& app) {
    auto* c = app.add_subcommand("nose", "Normalized streaming efficiency of a curve over AL bounds");
    c->add_option("--curve", curve, "Curve CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--bounds", bounds, "Lower and upper AL bound")->expected(2)->required();
    c->add_flag("--json", json, "Print a JSON report instead of the bare value");
    c->callback([this] { run(); });
  }
  void run() const {
    CurveSpec spec = read_curve_csv(curve);
    spec.x = bounds[0];
    spec.y = bounds[1];
    const double v = nose(spec);
    if (json) {
      std::cout << nose_report(spec, v).dump(2) << '\n';
    } else {
      std::cout << shortest(v) << '\n';
    }
  }
};

struct GradcheckCmd {
  std::uint64_t seed = 1;
  double tolerance = 1e-6;

  void setup(CLI::App& app, int& status) {
    auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every op and training loss");
    c->add_option("--seed", seed, "Seed for inputs and probed coordinates");
    c->add_option("--tolerance", tolerance, "Maximum relative error");
    c->callback([this, &status] { status = run(); });
  }
  int run() const {
    const auto cases = gradcheck_suite(seed);
    int failures = 0;
    for (const auto& c : cases) {
      const bool ok = c.result.max_rel_error < tolerance;
      failures += ok ? 0 : 1;
      std::cout << (ok ? "ok    " : "FAIL  ") << std::left << std::setw(28) << c.name << " max_rel_error "
                << std::scientific << std::setprecision(3) << c.result.max_rel_error << std::defaultfloat
                << "  (" << c.result.coordinates << " coords, worst " << c.result.worst_param << ":" << c.result.worst_index << " analytic " << c.result.worst_analytic << " numeric " << c.result.worst_numeric << ")\n";
    }
    std::cout << cases.size() - static_cast<std::size_t>(failures) << "/" << cases.size() << " passed\n";
    if (failures > 0) {
      return report_error("gradcheck", std::to_string(failures) + " gradient checks exceeded tolerance", 1);
    }
    return 0;
  }
};

struct ExperimentCmd {
  std::string config, out;
  bool force = false;

  void add(CLI::App* c) {
    c->add_option("--config", config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output directory (default: the config's output_dir)");
    c->add_flag("--force", force, "Reuse a non-empty output directory");
  }
  ExperimentRunner runner(const std::string& command) const {
    const ExperimentConfig cfg = load_experiment(config);
    const fs::path dir = out.empty() ? fs::path(cfg.output_dir) : fs::path(out);
    prepare_output_dir(dir, force);
    write_run_metadata(dir, to_json(cfg), command);
    return ExperimentRunner(cfg, dir, &std::cerr);
  }
};

struct AblateCmd {
  std::string which;
  ExperimentCmd exp;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("ablate", "Run a paired ablation and print the comparison table");
    c->add_option("--which", which, "monotonicity, truncation or baseline")
        ->required()
        ->check(CLI::IsMember({"monotonicity", "truncation", "baseline"}));
    exp.add(c);
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    ExperimentRunner r = exp.runner(command);
    std::cout << format_comparisons(run_ablation(r, which));
  }
};

struct RunCmd {
  ExperimentCmd exp;

  void setup(CLI::App& app, std::string& command) {
    auto* c = app.add_subcommand("run", "Full pipeline: data, three stages, sweeps and NoSE reports");
    exp.add(c);
    c->callback([this, &command] { run(command); });
  }
  void run(const std::string& command) const {
    ExperimentRunner r = exp.runner(command);
    run_pipeline(r);
    std::cout << "artifacts in " << r.output_dir() << '\n';
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale simultaneous speech translation lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());

  std::string command;
  for (int i = 0; i < argc; ++i) command += (i ? " " : "") + std::string(argv[i]);

  int status = 0;
  GenDataCmd gen;
  TrainCmd train;
  DecodeCmd decode;
  SweepCmd sweep;
  ScoreCmd score;
  NoseCmd nose_cmd;
  GradcheckCmd gradcheck;
  AblateCmd ablate;
  RunCmd run;
  gen.setup(app, command);
  train.setup(app, command);
  decode.setup(app, command);
  sweep.setup(app, command);
  score.setup(app);
  nose_cmd.setup(app);
  gradcheck.setup(app, status);
  ablate.setup(app, command);
  run.setup(app, command);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return report_error("usage", e.what(), 2);
  } catch (const UsageError& e) {
    return report_error("usage", e.what(), 2);
  } catch (const std::exception& e) {
    return report_error(error_kind(e), e.what(), 1);
  }
  return status;
}
