#include "reina/experiment.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "reina/version.hpp"

namespace reina {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
  }
}

TrainConfig stage_from_json(const nlohmann::json& j, int stage) {
  TrainConfig c;
  if (!j.is_null()) c = j.get<TrainConfig>();
  if (j.is_object() && j.contains("stage") && c.stage != stage) {
    throw std::invalid_argument("train.stage" + std::to_string(stage) + ": stage field disagrees");
  }
  c.stage = stage;
  c.validate();
  return c;
}

}  // namespace

ExperimentConfig parse_experiment(const nlohmann::json& j) {
  reject_unknown(j, {"task", "data", "arch", "train", "decode", "sweep", "seeds", "output_dir"}, "experiment");
  ExperimentConfig c;
  if (j.contains("task")) c.task = j.at("task").get<TaskParams>();
  c.task.validate();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"count", "seed"}, "data");
    c.data.count = d.value("count", c.data.count);
    c.data.seed = d.value("seed", c.data.seed);
    if (c.data.count < 1) throw std::invalid_argument("data.count must be >= 1");
  }
  if (j.contains("arch")) c.arch = j.at("arch").get<ArchConfig>();
  c.arch.bind_task(c.task);
  c.arch.validate();
  nlohmann::json train = j.value("train", nlohmann::json::object());
  reject_unknown(train, {"stage1", "stage2", "stage3"}, "train");
  c.stage1 = stage_from_json(train.value("stage1", nlohmann::json()), 1);
  c.stage2 = stage_from_json(train.value("stage2", nlohmann::json()), 2);
  c.stage3 = stage_from_json(train.value("stage3", nlohmann::json()), 3);
  if (j.contains("decode")) c.decode = j.at("decode").get<DecodeConfig>();
  c.decode.validate();
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown(s, {"alphas", "auto_points", "auto_utterances", "waitk", "split", "max_utterances", "bounds",
                       "matched_bleu_fraction"}, "sweep");
    if (s.contains("alphas") && s.at("alphas").is_string()) {
      if (s.at("alphas").get<std::string>() != "auto") throw std::invalid_argument("sweep.alphas: list or \"auto\"");
      c.sweep.auto_alphas = true;
    } else {
      c.sweep.alphas = s.value("alphas", c.sweep.alphas);
    }
    c.sweep.auto_points = s.value("auto_points", c.sweep.auto_points);
    c.sweep.auto_utterances = s.value("auto_utterances", c.sweep.auto_utterances);
    if (c.sweep.auto_points < 1 || c.sweep.auto_utterances < 1) {
      throw std::invalid_argument("sweep.auto_points and sweep.auto_utterances must be >= 1");
    }
    c.sweep.waitk = s.value("waitk", c.sweep.waitk);
    c.sweep.split = s.value("split", c.sweep.split);
    c.sweep.max_utterances = s.value("max_utterances", c.sweep.max_utterances);
    c.sweep.matched_bleu_fraction = s.value("matched_bleu_fraction", c.sweep.matched_bleu_fraction);
    if (s.contains("bounds")) {
      const auto b = s.at("bounds").get<std::vector<double>>();
      if (b.size() != 2 || !(b[0] < b[1])) throw std::invalid_argument("sweep.bounds must be [x, y] with x < y");
      c.sweep.bounds = std::make_pair(b[0], b[1]);
    }
    if (c.sweep.split != "train" && c.sweep.split != "dev" && c.sweep.split != "test") {
      throw std::invalid_argument("sweep.split must be train, dev or test");
    }
  }
  if (c.sweep.alphas.empty()) throw std::invalid_argument("sweep.alphas must not be empty");
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (c.seeds.empty()) throw std::invalid_argument("seeds must not be empty");
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment(j);
}

ojson to_json(const ExperimentConfig& c) {
  ojson j;
  j["task"] = ojson(nlohmann::json(c.task));
  j["data"] = {{"count", c.data.count}, {"seed", c.data.seed}};
  j["arch"] = ojson(nlohmann::json(c.arch));
  j["train"] = {{"stage1", ojson(nlohmann::json(c.stage1))},
                {"stage2", ojson(nlohmann::json(c.stage2))},
                {"stage3", ojson(nlohmann::json(c.stage3))}};
  j["decode"] = ojson(nlohmann::json(c.decode));
  ojson s;
  if (c.sweep.auto_alphas) {
    s["alphas"] = "auto";
  } else {
    s["alphas"] = c.sweep.alphas;
  }
  s["auto_points"] = c.sweep.auto_points;
  s["auto_utterances"] = c.sweep.auto_utterances;
  s["waitk"] = c.sweep.waitk;
  s["split"] = c.sweep.split;
  s["max_utterances"] = c.sweep.max_utterances;
  if (c.sweep.bounds) s["bounds"] = {c.sweep.bounds->first, c.sweep.bounds->second};
  s["matched_bleu_fraction"] = c.sweep.matched_bleu_fraction;
  j["sweep"] = s;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

std::string system_name(System s) {
  switch (s) {
    case System::kReina: return "reina";
    case System::kReinaNoMono: return "reina_no_mono";
    case System::kDivergence: return "divergence";
    case System::kReinaFromStage1: return "reina_no_stage2";
    case System::kWaitK: return "waitk";
  }
  return "?";
}

void write_run_metadata(const fs::path& dir, const ojson& resolved, const std::string& command) {
  fs::create_directories(dir);
  std::ofstream cfg(dir / "config.resolved.json", std::ios::trunc);
  cfg << resolved.dump(2) << '\n';
  ojson meta;
  meta["version"] = version_string();
  meta["command"] = command;
  if (resolved.contains("seeds")) meta["seeds"] = resolved.at("seeds");
  if (resolved.contains("seed")) meta["seed"] = resolved.at("seed");
  std::ofstream run(dir / "run.json", std::ios::trunc);
  run << meta.dump(2) << '\n';
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw std::runtime_error("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

ExperimentRunner::ExperimentRunner(ExperimentConfig cfg, fs::path out_dir, std::ostream* progress)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)), progress_(progress) {
  fs::create_directories(out_);
}

void ExperimentRunner::note(const std::string& msg) {
  if (progress_) *progress_ << "[reina-lab] " << msg << std::endl;
}

fs::path ExperimentRunner::seed_dir(std::uint64_t seed) const { return out_ / ("seed-" + std::to_string(seed)); }

TrainConfig ExperimentRunner::stage_config(const TrainConfig& base, std::uint64_t seed, int stage) const {
  TrainConfig c = base;
  c.stage = stage;
  c.seed = Rng::derive(seed, static_cast<std::uint64_t>(stage));
  return c;
}

const Dataset& ExperimentRunner::dataset() {
  if (!data_) {
    note("generating " + std::to_string(cfg_.data.count) + " utterances (" + to_string(cfg_.task.kind) + ")");
    data_ = std::make_unique<Dataset>(gen_task(cfg_.task, cfg_.data.count, cfg_.data.seed));
    write_dataset(*data_, out_ / "data");
  }
  return *data_;
}

std::vector<const Utterance*> ExperimentRunner::sweep_utterances() {
  auto utts = dataset().split(cfg_.sweep.split);
  if (cfg_.sweep.max_utterances > 0 && static_cast<int>(utts.size()) > cfg_.sweep.max_utterances) {
    utts.resize(static_cast<std::size_t>(cfg_.sweep.max_utterances));
  }
  return utts;
}

const Checkpoint& ExperimentRunner::stage1(std::uint64_t seed) {
  const auto key = std::make_pair(seed, -1);
  if (auto it = ckpts_.find(key); it != ckpts_.end()) return it->second;
  const Dataset& d = dataset();
  note("seed " + std::to_string(seed) + ": stage 1");
  Checkpoint ck = train_stage1(fresh_checkpoint(cfg_.arch, seed), stage_config(cfg_.stage1, seed, 1), d);
  save_checkpoint(ck, seed_dir(seed) / "stage1.ckpt.json");
  write_train_log_csv(ck, seed_dir(seed) / "stage1.log.csv");
  return ckpts_.emplace(key, std::move(ck)).first->second;
}

const Checkpoint& ExperimentRunner::stage2(std::uint64_t seed) {
  const auto key = std::make_pair(seed, -2);
  if (auto it = ckpts_.find(key); it != ckpts_.end()) return it->second;
  const Checkpoint& s1 = stage1(seed);
  note("seed " + std::to_string(seed) + ": stage 2");
  Checkpoint ck = train_stage2(s1, stage_config(cfg_.stage2, seed, 2), dataset());
  save_checkpoint(ck, seed_dir(seed) / "stage2.ckpt.json");
  write_train_log_csv(ck, seed_dir(seed) / "stage2.log.csv");
  return ckpts_.emplace(key, std::move(ck)).first->second;
}

const Checkpoint& ExperimentRunner::policy(std::uint64_t seed, System system) {
  if (system == System::kWaitK) return stage2(seed);
  const auto key = std::make_pair(seed, static_cast<int>(system));
  if (auto it = ckpts_.find(key); it != ckpts_.end()) return it->second;
  TrainConfig tc = stage_config(cfg_.stage3, seed, 3);
  const Checkpoint* base = nullptr;
  switch (system) {
    case System::kReina: tc.policy_loss = PolicyLossKind::kReina; base = &stage2(seed); break;
    case System::kReinaNoMono: tc.policy_loss = PolicyLossKind::kReinaNoMono; base = &stage2(seed); break;
    case System::kDivergence: tc.policy_loss = PolicyLossKind::kDivergence; base = &stage2(seed); break;
    case System::kReinaFromStage1:
      tc.policy_loss = PolicyLossKind::kReina;
      tc.allow_stage1_init = true;
      base = &stage1(seed);
      break;
    case System::kWaitK: break;
  }
  note("seed " + std::to_string(seed) + ": stage 3 (" + system_name(system) + ")");
  Checkpoint ck = train_stage3_policy(*base, tc, dataset());
  const std::string stem = "stage3-" + system_name(system);
  save_checkpoint(ck, seed_dir(seed) / (stem + ".ckpt.json"));
  write_train_log_csv(ck, seed_dir(seed) / (stem + ".log.csv"));
  return ckpts_.emplace(key, std::move(ck)).first->second;
}

const SweepResult& ExperimentRunner::curve(std::uint64_t seed, System system) {
  const auto key = std::make_pair(seed, static_cast<int>(system));
  if (auto it = curves_.find(key); it != curves_.end()) return it->second;
  const Checkpoint& ck = policy(seed, system);
  DecodeConfig dc = cfg_.decode;
  std::vector<double> values = cfg_.sweep.alphas;
  if (system == System::kWaitK) {
    dc.policy = PolicyKind::kWaitK;
    values = cfg_.sweep.waitk;
  } else {
    dc.policy = PolicyKind::kLearned;
    if (cfg_.sweep.auto_alphas) {
      auto dev = dataset().split("dev");
      dev.resize(std::min<std::size_t>(dev.size(), static_cast<std::size_t>(cfg_.sweep.auto_utterances)));
      values = auto_thresholds(ck.params, dev, cfg_.sweep.auto_points);
    }
  }
  note("seed " + std::to_string(seed) + ": sweep (" + system_name(system) + ", " + std::to_string(values.size()) +
       " points)");
  const fs::path dir = seed_dir(seed);
  SweepResult r = sweep_curve(ck.params, sweep_utterances(), values, dc, dir / "curves" / (system_name(system) + ".csv"));
  for (const auto& w : r.warnings) note("warning: " + w);
  const fs::path logs = dir / "logs" / system_name(system);
  write_decode_log(r.offline, logs / "offline.jsonl");
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    std::ostringstream name;
    name << "point-" << std::setw(2) << std::setfill('0') << i << ".jsonl";
    write_decode_log(r.logs[i], logs / name.str());
  }
  return curves_.emplace(key, std::move(r)).first->second;
}

double min_al_reaching(const CurveSpec& curve, double bleu) {
  const auto& p = curve.points;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].bleu >= bleu) {
      if (i == 0 || p[i - 1].bleu >= bleu || p[i].al == p[i - 1].al) return p[i].al;
      const double f = (bleu - p[i - 1].bleu) / (p[i].bleu - p[i - 1].bleu);
      return p[i - 1].al + f * (p[i].al - p[i - 1].al);
    }
  }
  return std::numeric_limits<double>::infinity();
}

const ComparisonRow& Comparison::row(const std::string& system) const {
  for (const auto& r : rows) {
    if (r.system == system) return r;
  }
  throw std::invalid_argument("comparison has no system " + system);
}

std::vector<System> ablation_systems(const std::string& which) {
  if (which == "monotonicity") return {System::kReina, System::kReinaNoMono};
  if (which == "truncation") return {System::kReina, System::kReinaFromStage1};
  if (which == "baseline") return {System::kReina, System::kDivergence, System::kWaitK};
  throw std::invalid_argument("unknown ablation '" + which + "' (monotonicity, truncation, baseline)");
}

Comparison compare_systems(ExperimentRunner& runner, std::uint64_t seed, const std::string& which) {
  const std::vector<System> systems = ablation_systems(which);
  std::vector<CurveSpec> curves;
  for (System s : systems) curves.push_back(runner.curve(seed, s).curve);
  Comparison c;
  c.which = which;
  c.seed = seed;
  const auto& spec = runner.config().sweep;
  std::tie(c.x, c.y) = spec.bounds ? *spec.bounds : shared_bounds(curves);
  double min_offline = std::numeric_limits<double>::infinity();
  for (const auto& cv : curves) min_offline = std::min(min_offline, cv.offline_bleu);
  c.matched_bleu = spec.matched_bleu_fraction * min_offline;
  for (std::size_t i = 0; i < systems.size(); ++i) {
    CurveSpec cv = curves[i];
    cv.x = c.x;
    cv.y = c.y;
    c.rows.push_back({system_name(systems[i]), nose(cv), cv.offline_bleu, min_al_reaching(cv, c.matched_bleu)});
  }
  return c;
}

ojson to_json(const Comparison& c) {
  ojson j;
  j["ablation"] = c.which;
  j["seed"] = c.seed;
  j["bounds"] = {c.x, c.y};
  j["matched_bleu"] = c.matched_bleu;
  ojson rows = ojson::array();
  for (const auto& r : c.rows) {
    ojson row;
    row["system"] = r.system;
    row["nose"] = r.nose;
    row["offline_bleu"] = r.offline_bleu;
    if (std::isfinite(r.al_at_matched_bleu)) {
      row["al_at_matched_bleu"] = r.al_at_matched_bleu;
    } else {
      row["al_at_matched_bleu"] = nullptr;
    }
    rows.push_back(row);
  }
  j["systems"] = rows;
  return j;
}

std::string format_comparisons(const std::vector<Comparison>& comps) {
  std::ostringstream s;
  s << std::left << std::setw(6) << "seed" << std::setw(18) << "bounds" << std::setw(18) << "system" << std::right
    << std::setw(8) << "NoSE" << std::setw(10) << "offline" << std::setw(12) << "AL@match" << '\n';
  for (const auto& c : comps) {
    for (const auto& r : c.rows) {
      s << std::left << std::setw(6) << c.seed << std::setw(18) << format_bounds(c.x, c.y) << std::setw(18)
        << r.system << std::right << std::fixed << std::setprecision(3) << std::setw(8) << r.nose
        << std::setprecision(2) << std::setw(10) << r.offline_bleu << std::setprecision(3) << std::setw(12)
        << r.al_at_matched_bleu << '\n';
      s.unsetf(std::ios::fixed);
    }
  }
  return s.str();
}

std::vector<Comparison> run_ablation(ExperimentRunner& runner, const std::string& which) {
  ablation_systems(which);
  std::vector<Comparison> out;
  ojson all = ojson::array();
  for (std::uint64_t seed : runner.config().seeds) {
    out.push_back(compare_systems(runner, seed, which));
    all.push_back(to_json(out.back()));
  }
  std::ofstream(runner.output_dir() / ("ablation-" + which + ".json"), std::ios::trunc) << all.dump(2) << '\n';
  std::ofstream(runner.output_dir() / ("ablation-" + which + ".txt"), std::ios::trunc) << format_comparisons(out);
  return out;
}

void run_pipeline(ExperimentRunner& runner) {
  for (std::uint64_t seed : runner.config().seeds) {
    const Comparison c = compare_systems(runner, seed, "baseline");
    const std::vector<System> systems = ablation_systems("baseline");
    ojson report = ojson::object();
    for (std::size_t i = 0; i < systems.size(); ++i) {
      CurveSpec cv = runner.curve(seed, systems[i]).curve;
      cv.x = c.x;
      cv.y = c.y;
      report[c.rows[i].system] = nose_report(cv, c.rows[i].nose);
    }
    std::ofstream(runner.output_dir() / ("seed-" + std::to_string(seed)) / "nose.json", std::ios::trunc)
        << report.dump(2) << '\n';
  }
}

}  // namespace reina
