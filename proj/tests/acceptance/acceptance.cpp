// Acceptance suite: one PASS/FAIL line per criterion on stdout, progress on stderr.
// Usage: reina_acceptance [criterion numbers...]   (default: all)
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "reina/decoder.hpp"
#include "reina/experiment.hpp"
#include "reina/gradcheck_suite.hpp"
#include "reina/losses.hpp"
#include "reina/metrics.hpp"
#include "reina/ops.hpp"
#include "reina/rng.hpp"
#include "reina/trainer.hpp"

using namespace reina;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int digits = 4) {
  std::ostringstream ss;
  ss.precision(digits);
  ss << x;
  return ss.str();
}

const fs::path kOut = REINA_ACCEPTANCE_OUT;
const fs::path kConfigs = REINA_ACCEPTANCE_CONFIGS;

// ---- 1. gradient integrity

Verdict gradients() {
  const auto t0 = Clock::now();
  const auto cases = gradcheck_suite(1);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  std::size_t coords = 0;
  for (const auto& c : cases) {
    coords += c.result.coordinates;
    if (c.result.max_rel_error > worst) {
      worst = c.result.max_rel_error;
      worst_name = c.name;
    }
  }
  return {worst < 1e-6 && elapsed < 120.0,
          std::to_string(cases.size()) + " cases, " + std::to_string(coords) + " coords, worst " + fmt(worst) + " (" +
              worst_name + "), " + fmt(elapsed, 3) + " s"};
}

// ---- 2. loss algebra

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t n) {
  std::vector<std::uint8_t> m(n);
  std::size_t valid = 0;
  for (auto& x : m) valid += (x = rng.bernoulli(0.8) ? 1 : 0);
  if (valid < 2) m[0] = m[1] = 1;
  return m;
}

Verdict loss_algebra() {
  using ad::Tape;
  using ad::Tensor;
  Rng rng(2024);
  double cov_err = 0.0, dec_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(40);
    const auto q = uniform_vec(rng, n, 0, 1);
    const auto part = uniform_vec(rng, n, -6, 0), full = uniform_vec(rng, n, -6, 0);
    const auto mask = random_mask(rng, n);
    std::vector<double> f, qv;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i]) continue;
      f.push_back(full[i] - part[i]);
      qv.push_back(q[i]);
    }
    const double m = static_cast<double>(f.size());
    double mean = 0.0, var = 0.0, proxy = 0.0;
    for (double x : f) mean += x / m;
    for (double x : f) var += (x - mean) * (x - mean) / m;
    for (std::size_t i = 0; i < f.size(); ++i) proxy += qv[i] * (f[i] - mean) / std::sqrt(var + 1e-5) / m;

    Tape tape;
    const auto qc = tape.constant(Tensor::vector(q));
    const auto l_p = reina_policy_loss(qc, tape.constant(Tensor::vector(part)), tape.constant(Tensor::vector(full)),
                                       mask, 1e-5);
    cov_err = std::max(cov_err, std::abs(l_p.value().item() + proxy));
    const double lambda = rng.uniform(0, 1), eps = rng.uniform(0, 0.5);
    const auto l_m = monotonicity_loss(qc, eps, mask);
    const auto l_r = l2_policy_loss(qc, mask);
    const double total = reina_total(l_p, l_m, l_r, lambda).value().item();
    dec_err = std::max(dec_err, std::abs(total - (l_p.value().item() + l_m.value().item() + lambda * l_r.value().item())));
  }
  int iff_fail = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(10);
    const double eps = rng.uniform(0, 0.4);
    std::vector<double> q(n);
    double x = rng.uniform(0, 0.5);
    for (double& v : q) {
      v = x;
      x += rng.uniform(-eps - 0.15, 0.3);
    }
    bool ok = true;
    double best = -std::numeric_limits<double>::infinity();
    for (double v : q) {
      ok = ok && v >= best - eps;
      best = std::max(best, v);
    }
    Tape tape;
    const double l_m = monotonicity_loss(tape.constant(Tensor::vector(q)), eps, {}).value().item();
    iff_fail += (l_m == 0.0) != ok;
  }
  return {cov_err < 1e-12 && dec_err < 1e-12 && iff_fail == 0,
          "covariance err " + fmt(cov_err) + ", decomposition err " + fmt(dec_err) + ", iff violations " +
              std::to_string(iff_fail) + "/1000"};
}

// ---- shared oracle-task model (criteria 3 and 4)

ExperimentRunner& oracle_runner() {
  static ExperimentRunner runner = [] {
    fs::remove_all(kOut / "oracle");
    return ExperimentRunner(load_experiment(kConfigs / "oracle.json"), kOut / "oracle", &std::cerr);
  }();
  return runner;
}

const ModelParams& oracle_policy() { return oracle_runner().policy(1, System::kReina).params; }

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// ---- 3. oracle validation

Verdict oracle_validation() {
  const auto t0 = Clock::now();
  ExperimentRunner& runner = oracle_runner();
  const Dataset& ds = runner.dataset();
  const TaskParams& task = runner.config().task;
  const auto train = ds.split("train");
  const auto test = ds.split("test");
  const ModelParams& params = oracle_policy();

  std::vector<double> q_all, f_all;
  std::map<std::pair<int, int>, double> f_mean;
  bool endpoint_zero = true;
  for (const Utterance* u : test) {
    const int frames = static_cast<int>(u->frames.size());
    for (int t = 1; t <= frames; ++t) {
      const PolicyProbe probe = probe_policy(params, *u, t);
      for (int n = 0; n < static_cast<int>(u->tgt_tokens.size()); ++n) {
        const double f = exact_info_gain(task, *u, n, t);
        if (t == frames) endpoint_zero = endpoint_zero && f == 0.0;
        q_all.push_back(probe.q[static_cast<std::size_t>(n)]);
        f_all.push_back(f);
        f_mean[{n, t}] += f / static_cast<double>(test.size());
      }
    }
  }
  double min_mean = std::numeric_limits<double>::infinity();
  for (const auto& [key, v] : f_mean) min_mean = std::min(min_mean, v);
  const double r = pearson(q_all, f_all);
  const double elapsed = seconds_since(t0);
  const bool sizes = train.size() >= 2000 && test.size() >= 200;
  return {sizes && r >= 0.5 && min_mean >= -1e-9 && endpoint_zero && elapsed < 900.0,
          "pearson " + fmt(r) + " over " + std::to_string(q_all.size()) + " pairs, min avg F " + fmt(min_mean) +
              ", F(T)=0 " + (endpoint_zero ? "yes" : "no") + ", train/test " + std::to_string(train.size()) + "/" +
              std::to_string(test.size()) + ", " + fmt(elapsed, 3) + " s"};
}

// ---- 4. endpoint equivalences

Verdict endpoints() {
  const ModelParams& params = oracle_policy();
  const auto test = oracle_runner().dataset().split("test");
  DecodeConfig always = oracle_runner().config().decode;
  always.policy = PolicyKind::kAlwaysRead;
  DecodeConfig never = always;
  never.policy = PolicyKind::kNeverRead;
  std::size_t identical = 0, al_exact = 0, never_exact = 0;
  for (const Utterance* u : test) {
    const DecodeResult s = stream_decode(params, u->frames, u->frame_dur_s, always);
    const DecodeResult off = offline_beam_decode(params, u->frames, always);
    identical += s.tokens == off.tokens;
    const int ref = static_cast<int>(u->tgt_tokens.size());
    al_exact += average_lagging(s.trace, ref).seconds == u->duration_s();
    const DecodeResult nr = stream_decode(params, u->frames, u->frame_dur_s, never);
    bool at_chunk = true;
    for (double d : nr.trace.d) at_chunk = at_chunk && d == never.chunk_s;
    never_exact += at_chunk;
  }
  const std::size_t n = test.size();
  return {identical == n && al_exact == n && never_exact == n,
          "always_read identical " + std::to_string(identical) + "/" + std::to_string(n) + ", AL==T_s " +
              std::to_string(al_exact) + "/" + std::to_string(n) + ", never_read d==chunk_s " +
              std::to_string(never_exact) + "/" + std::to_string(n)};
}

// ---- 5. metric fixtures

Verdict metric_fixtures() {
  const double al = average_lagging({{1, 2, 3, 4}, 4.0}, 4).seconds;
  const double la = laal({{1, 1, 2, 2, 3, 3, 4, 4}, 4.0}, 4, 8).seconds;
  const double bleu = corpus_bleu({{1, 2, 3, 4}}, {{1, 2, 3, 5}});
  CurveSpec curve = read_curve_csv(fs::path(REINA_FIXTURE_DIR) / "two_point.csv");
  curve.x = 1.0;
  curve.y = 3.0;
  const double ns = nose(curve);
  const bool ok = std::abs(al - 1.0) <= 1e-12 && std::abs(la - 5.5 / 7.0) <= 1e-12 && std::abs(bleu - 59.46) <= 0.01 &&
                  ns == 0.75;
  return {ok, "AL " + fmt(al, 17) + ", LAAL " + fmt(la, 17) + ", BLEU " + fmt(bleu, 6) + ", NoSE " + fmt(ns, 17)};
}

// ---- 6-8. reorder-task ablations

ExperimentRunner& reorder_runner() {
  static ExperimentRunner runner = [] {
    fs::remove_all(kOut / "reorder");
    return ExperimentRunner(load_experiment(kConfigs / "reorder.json"), kOut / "reorder", &std::cerr);
  }();
  return runner;
}

struct SeedTally {
  int wins = 0;
  std::string detail;
};

template <class Pred>
SeedTally tally(const std::string& which, Pred pred) {
  SeedTally t;
  for (const Comparison& c : run_ablation(reorder_runner(), which)) {
    std::string note;
    const bool win = pred(c, note);
    t.wins += win;
    t.detail += (t.detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(c.seed) + ": " + note +
                (win ? " ok" : " no");
  }
  return t;
}

int seed_count() { return static_cast<int>(reorder_runner().config().seeds.size()); }

Verdict dominance() {
  const SeedTally t = tally("baseline", [](const Comparison& c, std::string& note) {
    const double reina = c.row("reina").nose, div = c.row("divergence").nose, wk = c.row("waitk").nose;
    note = "reina " + fmt(reina) + " div " + fmt(div) + " waitk " + fmt(wk);
    return reina > div && reina > wk;
  });
  return {2 * t.wins > seed_count(), std::to_string(t.wins) + "/" + std::to_string(seed_count()) + " seeds (" + t.detail + ")"};
}

Verdict monotonicity_ablation() {
  const SeedTally t = tally("monotonicity", [](const Comparison& c, std::string& note) {
    const double with = c.row("reina").al_at_matched_bleu, without = c.row("reina_no_mono").al_at_matched_bleu;
    note = "AL " + fmt(with) + " vs " + fmt(without) + " at BLEU " + fmt(c.matched_bleu);
    return with <= without;
  });
  return {t.wins >= 2, std::to_string(t.wins) + "/" + std::to_string(seed_count()) + " seeds (" + t.detail + ")"};
}

Verdict truncation_ablation() {
  const SeedTally t = tally("truncation", [](const Comparison& c, std::string& note) {
    const double s2 = c.row("reina").nose, s1 = c.row("reina_no_stage2").nose;
    note = "NoSE " + fmt(s2) + " vs " + fmt(s1);
    return s2 >= s1;
  });
  return {t.wins >= 2, std::to_string(t.wins) + "/" + std::to_string(seed_count()) + " seeds (" + t.detail + ")"};
}

// ---- 9. determinism

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

Verdict determinism() {
  setenv("REINA_LAB_THREADS", "1", 1);
  nlohmann::json j = nlohmann::json::parse(slurp(kConfigs / "reorder.json"));
  j["data"]["count"] = 300;
  j["train"]["stage1"]["steps"] = 60;
  j["train"]["stage2"]["steps"] = 40;
  j["train"]["stage3"]["steps"] = 40;
  j["train"]["stage3"]["warmup_steps"] = 10;
  j["sweep"]["max_utterances"] = 20;
  j["sweep"]["auto_points"] = 5;
  j["sweep"]["waitk"] = {1, 3, 6};
  j["seeds"] = {7};
  auto run = [&](const std::string& name) {
    const fs::path dir = kOut / name;
    fs::remove_all(dir);
    ExperimentRunner runner(parse_experiment(j), dir);
    run_pipeline(runner);
    return tree(dir);
  };
  const auto a = run("determinism-a");
  const auto b = run("determinism-b");
  std::size_t ckpts = 0, logs = 0, csvs = 0, differing = 0;
  for (const auto& [name, bytes] : a) {
    ckpts += name.ends_with(".ckpt.json");
    logs += name.ends_with(".jsonl");
    csvs += name.ends_with(".csv");
    const auto it = b.find(name);
    differing += it == b.end() || it->second != bytes;
  }
  const bool ok = a.size() == b.size() && differing == 0 && ckpts > 0 && logs > 0 && csvs > 0;
  return {ok, std::to_string(a.size()) + " files (" + std::to_string(ckpts) + " checkpoints, " + std::to_string(logs) +
                  " decode logs, " + std::to_string(csvs) + " CSVs), " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* title;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> all{
      {1, "gradient integrity", gradients},
      {2, "loss algebra", loss_algebra},
      {3, "oracle validation", oracle_validation},
      {4, "endpoint equivalences", endpoints},
      {5, "metric fixtures", metric_fixtures},
      {6, "latency/quality dominance", dominance},
      {7, "monotonicity ablation", monotonicity_ablation},
      {8, "truncation ablation", truncation_ablation},
      {9, "determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  const bool everything = wanted.empty();

  fs::create_directories(kOut);
  const auto t0 = Clock::now();
  bool all_pass = true;
  for (const Criterion& c : all) {
    if (!everything && !wanted.count(c.id)) continue;
    std::cerr << "[acceptance] criterion " << c.id << ": " << c.title << '\n';
    const auto start = Clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all_pass = all_pass && v.pass;
    std::cout << "criterion " << c.id << " " << (v.pass ? "PASS" : "FAIL") << " " << c.title << ": " << v.detail
              << " [" << fmt(seconds_since(start), 4) << " s]" << std::endl;
  }
  if (everything || wanted.count(10)) {
    const double total = seconds_since(t0);
    const bool ok = everything && total < 45.0 * 60.0;
    all_pass = all_pass && ok;
    std::cout << "criterion 10 " << (ok ? "PASS" : "FAIL") << " budget: suite took " << fmt(total / 60.0, 3)
              << " min (limit 45)" << (everything ? "" : ", partial run") << std::endl;
  }
  return all_pass ? 0 : 1;
}
