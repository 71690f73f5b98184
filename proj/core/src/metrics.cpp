#include "reina/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "reina/error.hpp"

namespace reina {

double corpus_bleu(const std::vector<TokenSeq>& hypotheses, const std::vector<TokenSeq>& references) {
  if (hypotheses.size() != references.size()) throw std::invalid_argument("corpus_bleu: corpus sizes differ");
  if (hypotheses.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  constexpr int kOrder = 4;
  double matches[kOrder] = {}, totals[kOrder] = {};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const TokenSeq& h = hypotheses[s];
    const TokenSeq& r = references[s];
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (int n = 1; n <= kOrder; ++n) {
      const auto un = static_cast<std::size_t>(n);
      std::map<TokenSeq, int> ref_counts;
      for (std::size_t i = 0; i + un <= r.size(); ++i) ++ref_counts[TokenSeq(r.begin() + i, r.begin() + i + un)];
      std::map<TokenSeq, int> hyp_counts;
      for (std::size_t i = 0; i + un <= h.size(); ++i) ++hyp_counts[TokenSeq(h.begin() + i, h.begin() + i + un)];
      for (const auto& [gram, cnt] : hyp_counts) {
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(cnt, it->second);
        totals[n - 1] += cnt;
      }
    }
  }
  if (hyp_len == 0.0 || matches[0] == 0.0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < kOrder; ++n) {
    const double p = (n > 0 && matches[n] == 0.0) ? 1.0 / (totals[n] + 1.0) : matches[n] / totals[n];
    log_p += std::log(p) / kOrder;
  }
  const double bp = std::exp(std::min(0.0, 1.0 - ref_len / hyp_len));
  return 100.0 * bp * std::exp(log_p);
}

namespace {

LagResult lagging(const DelayTrace& trace, double denom) {
  if (!(trace.total_s > 0.0)) throw std::invalid_argument("lagging: total duration must be > 0");
  if (trace.d.empty()) return {trace.total_s, true};
  const double rate = trace.total_s / denom;
  double acc = 0.0;
  std::size_t tau = trace.d.size();
  for (std::size_t i = 0; i < trace.d.size(); ++i) {
    if (trace.d[i] >= trace.total_s) {
      tau = i + 1;
      break;
    }
  }
  for (std::size_t i = 0; i < tau; ++i) acc += trace.d[i] - static_cast<double>(i) * rate;
  return {acc / static_cast<double>(tau), false};
}

}  // namespace

LagResult average_lagging(const DelayTrace& trace, int ref_len) {
  if (ref_len < 1) throw std::invalid_argument("average_lagging: ref_len must be >= 1");
  return lagging(trace, ref_len);
}

LagResult laal(const DelayTrace& trace, int ref_len, int hyp_len) {
  if (ref_len < 1) throw std::invalid_argument("laal: ref_len must be >= 1");
  return lagging(trace, std::max(ref_len, hyp_len));
}

void sort_points(std::vector<CurvePoint>& points) {
  std::stable_sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) { return a.al < b.al; });
}

double nose(const CurveSpec& curve) {
  const auto& p = curve.points;
  if (p.size() < 2) throw OutOfDomainError("nose: need at least two curve points");
  if (!(curve.offline_bleu > 0.0)) throw std::invalid_argument("nose: offline_bleu must be > 0");
  if (!(curve.x < curve.y)) throw OutOfDomainError("nose: bounds need x < y, got " + format_bounds(curve.x, curve.y));
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i].al < p[i - 1].al) throw std::invalid_argument("nose: points must be sorted by AL");
  }
  if (curve.x < p.front().al || curve.y > p.back().al) {
    std::ostringstream msg;
    msg << "nose: curve spans [" << p.front().al << ", " << p.back().al << "] but bounds are "
        << format_bounds(curve.x, curve.y);
    throw OutOfDomainError(msg.str());
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    const double a0 = p[i].al, a1 = p[i + 1].al;
    const double lo = std::max(a0, curve.x), hi = std::min(a1, curve.y);
    if (!(hi > lo)) continue;
    auto at = [&](double a) { return p[i].bleu + (p[i + 1].bleu - p[i].bleu) * (a - a0) / (a1 - a0); };
    area += 0.5 * (at(lo) + at(hi)) * (hi - lo);
  }
  return area / ((curve.y - curve.x) * curve.offline_bleu);
}

std::pair<double, double> shared_bounds(std::span<const CurveSpec> curves) {
  if (curves.empty()) throw std::invalid_argument("shared_bounds: no curves");
  double x = -INFINITY, y = INFINITY;
  for (const auto& c : curves) {
    if (c.points.empty()) throw std::invalid_argument("shared_bounds: empty curve");
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& pt : c.points) {
      lo = std::min(lo, pt.al);
      hi = std::max(hi, pt.al);
    }
    x = std::max(x, lo);
    y = std::min(y, hi);
  }
  if (!(x < y)) throw OutOfDomainError("curves share no AL range: " + format_bounds(x, y));
  return {x, y};
}

std::string format_bounds(double x, double y) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(3) << '[' << x << ", " << y << ']';
  return s.str();
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

}  // namespace

void write_curve_csv(const CurveSpec& curve, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# offline_bleu=" << num(curve.offline_bleu) << '\n';
  if (!curve.policy.empty()) out << "# policy=" << curve.policy << '\n';
  out << "alpha,AL_s,LAAL_s,BLEU,n_sentences\n";
  for (const auto& p : curve.points) {
    out << num(p.alpha) << ',' << num(p.al) << ',' << num(p.laal) << ',' << num(p.bleu) << ',' << p.n_sentences
        << '\n';
  }
}

CurveSpec read_curve_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open curve " + path.string());
  CurveSpec c;
  std::string line;
  bool header = false, have_offline = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq), value = body.substr(eq + 1);
      if (key == "offline_bleu") {
        c.offline_bleu = std::stod(value);
        have_offline = true;
      } else if (key == "policy") {
        c.policy = value;
      }
      continue;
    }
    if (!header) {
      if (line.rfind("alpha,AL_s", 0) != 0) throw LoadError(path.string() + ": unexpected curve header");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string f[5];
    for (auto& x : f) {
      if (!std::getline(ss, x, ',')) throw LoadError(path.string() + ": short curve row");
    }
    try {
      c.points.push_back({std::stod(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stoi(f[4])});
    } catch (const std::exception&) {
      throw LoadError(path.string() + ": malformed curve row '" + line + "'");
    }
  }
  if (!header || !have_offline) throw LoadError(path.string() + ": missing header or offline_bleu");
  sort_points(c.points);
  return c;
}

nlohmann::ordered_json nose_report(const CurveSpec& curve, double value) {
  nlohmann::ordered_json j;
  j["x"] = curve.x;
  j["y"] = curve.y;
  j["offline_bleu"] = curve.offline_bleu;
  j["nose"] = value;
  return j;
}

double log_bleu(const std::vector<DecodeLogEntry>& log) {
  std::vector<TokenSeq> hyps, refs;
  for (const auto& e : log) {
    hyps.push_back(e.tokens);
    refs.push_back(e.ref_tokens);
  }
  return corpus_bleu(hyps, refs);
}

CurvePoint score_log(const std::vector<DecodeLogEntry>& log, double alpha) {
  if (log.empty()) throw std::invalid_argument("score_log: empty decode log");
  CurvePoint p;
  p.alpha = alpha;
  p.bleu = log_bleu(log);
  for (const auto& e : log) {
    const DelayTrace tr{e.delays, e.total_s};
    const int ref_len = static_cast<int>(e.ref_tokens.size());
    p.al += average_lagging(tr, ref_len).seconds;
    p.laal += laal(tr, ref_len, static_cast<int>(e.tokens.size())).seconds;
  }
  p.n_sentences = static_cast<int>(log.size());
  p.al /= p.n_sentences;
  p.laal /= p.n_sentences;
  return p;
}

}  // namespace reina
