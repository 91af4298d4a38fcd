#include "dagan/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace dagan {

namespace fs = std::filesystem;

DetCurve det_curve(std::span<const double> normal, std::span<const double> candidate) {
  if (normal.empty()) throw UsageError("DET curve needs normal scores");
  if (candidate.empty()) throw UsageError("DET curve needs candidate scores");
  std::vector<double> neg(normal.begin(), normal.end());
  std::vector<double> pos(candidate.begin(), candidate.end());
  std::sort(neg.begin(), neg.end(), std::greater<>());
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::vector<double> thresholds;
  thresholds.reserve(neg.size() + pos.size());
  std::merge(neg.begin(), neg.end(), pos.begin(), pos.end(), std::back_inserter(thresholds), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double n_neg = static_cast<double>(neg.size());
  const double n_pos = static_cast<double>(pos.size());
  DetCurve curve;
  curve.points.reserve(thresholds.size() + 2);
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t fp = 0, tp = 0;
  for (double thr : thresholds) {
    while (fp < neg.size() && neg[fp] > thr) ++fp;
    while (tp < pos.size() && pos[tp] > thr) ++tp;
    curve.points.push_back({thr, static_cast<double>(fp) / n_neg, 1.0 - static_cast<double>(tp) / n_pos});
  }
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  curve.eer = eer(curve);
  curve.auc = auc(curve);
  return curve;
}

DetCurve det_curve(const std::vector<ScoreRecord>& records) {
  std::vector<double> normal, candidate;
  for (const auto& r : records) {
    if (r.set == EventSet::Normal) normal.push_back(r.m_anomaly);
    if (r.set == EventSet::Candidate) candidate.push_back(r.m_anomaly);
  }
  return det_curve(normal, candidate);
}

double eer(const DetCurve& curve) {
  const auto& p = curve.points;
  if (p.empty()) throw UsageError("empty DET curve");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i].fpr - p[i].fnr;
    if (d == 0.0) return p[i].fpr;
    if (d > 0.0) {
      if (i == 0) return p[i].fpr;
      const double d0 = p[i - 1].fpr - p[i - 1].fnr;
      const double lambda = -d0 / (d - d0);
      return p[i - 1].fpr + lambda * (p[i].fpr - p[i - 1].fpr);
    }
  }
  return p.back().fpr;
}

double auc(const DetCurve& curve) {
  const auto& p = curve.points;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i)
    area += (p[i].fpr - p[i - 1].fpr) * 0.5 * (p[i].fnr + p[i - 1].fnr);
  return area;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

namespace {

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  Histogram h{lo, hi, std::vector<Index>(static_cast<std::size_t>(bins), 0)};
  const double width = hi - lo;
  for (double x : values) {
    int b = width > 0.0 ? static_cast<int>(std::floor((x - lo) / width * bins)) : 0;
    b = std::clamp(b, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(b)];
  }
  return h;
}

}  // namespace

MedianGap median_gap(const std::vector<ScoreRecord>& records, int bins) {
  if (bins < 1) throw UsageError("histogram needs at least one bin");
  std::vector<double> normal, candidate, maneuver;
  for (const auto& r : records) {
    switch (r.set) {
      case EventSet::Normal: normal.push_back(r.m_anomaly); break;
      case EventSet::Candidate: candidate.push_back(r.m_anomaly); break;
      case EventSet::Maneuver: maneuver.push_back(r.m_anomaly); break;
    }
  }
  if (normal.empty() || candidate.empty()) throw UsageError("median gap needs normal and candidate scores");
  MedianGap g;
  g.median_normal = median(normal);
  g.median_candidate = median(candidate);
  g.median_maneuver = median(maneuver);
  g.delta = g.median_candidate - g.median_normal;

  double lo = 0.0, hi = 1.0;
  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (const auto& r : records) {
    mn = std::min(mn, r.m_anomaly);
    mx = std::max(mx, r.m_anomaly);
  }
  if (mn < 0.0 || mx > 1.0) {
    lo = mn;
    hi = mx;
  }
  g.normal = histogram(normal, lo, hi, bins);
  g.candidate = histogram(candidate, lo, hi, bins);
  g.maneuver = histogram(maneuver, lo, hi, bins);
  return g;
}

std::vector<std::size_t> top_k_indices(const std::vector<ScoreRecord>& records, Index k) {
  if (k < 1) throw UsageError("top-K needs K >= 1");
  if (static_cast<std::size_t>(k) > records.size())
    throw UsageError("top-K of " + std::to_string(k) + " exceeds the " + std::to_string(records.size()) +
                     " scored segments");
  std::vector<std::size_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = records[a];
    const auto& y = records[b];
    if (x.m_anomaly != y.m_anomaly) return x.m_anomaly > y.m_anomaly;
    if (x.target_start_s != y.target_start_s) return x.target_start_s < y.target_start_s;
    return x.session_id < y.session_id;
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

namespace {

void tally(OverlapRow& row, EventSet s) {
  switch (s) {
    case EventSet::Normal: ++row.normal; break;
    case EventSet::Candidate: ++row.candidate; break;
    case EventSet::Maneuver: ++row.maneuver; break;
  }
}

}  // namespace

OverlapTable top_k_overlap(const std::vector<ScoreRecord>& records, Index k, std::uint64_t random_seed) {
  OverlapTable t;
  t.k = k;
  for (std::size_t i : top_k_indices(records, k)) tally(t.model, records[i].set);

  // Partial Fisher-Yates draw.
  Rng rng(random_seed);
  std::vector<std::size_t> pool(records.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
    tally(t.random, records[pool[static_cast<std::size_t>(i)]].set);
  }
  return t;
}

ModelReport evaluate(const std::string& name, const std::vector<ScoreRecord>& records, Index top_k,
                     std::uint64_t random_seed) {
  ModelReport r;
  r.name = name;
  for (const auto& rec : records) {
    if (rec.set == EventSet::Normal) ++r.n_normal;
    if (rec.set == EventSet::Candidate) ++r.n_candidate;
    if (rec.set == EventSet::Maneuver) ++r.n_maneuver;
  }
  r.det = det_curve(records);
  r.gap = median_gap(records);
  r.overlap = top_k_overlap(records, top_k, random_seed);
  return r;
}

namespace {

std::string num(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

void write_histogram(const fs::path& path, const Histogram& h) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "bin_lo,bin_hi,count\n";
  const auto bins = static_cast<double>(h.counts.size());
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    const double lo = h.lo + (h.hi - h.lo) * static_cast<double>(b) / bins;
    const double hi = h.lo + (h.hi - h.lo) * static_cast<double>(b + 1) / bins;
    os << num(lo) << ',' << num(hi) << ',' << h.counts[b] << '\n';
  }
}

}  // namespace

void write_report(const fs::path& dir, const std::vector<ModelReport>& reports,
                  const std::vector<std::string>& provenance) {
  fs::create_directories(dir);
  std::ofstream os(dir / "report.txt");
  if (!os) throw std::runtime_error("cannot write " + (dir / "report.txt").string());
  for (const auto& line : provenance) os << "# " << line << '\n';
  for (const auto& r : reports) {
    const std::string p = r.name + ".";
    os << p << "n_normal = " << r.n_normal << '\n';
    os << p << "n_candidate = " << r.n_candidate << '\n';
    os << p << "n_maneuver = " << r.n_maneuver << '\n';
    os << p << "eer = " << num(r.det.eer) << '\n';
    os << p << "auc = " << num(r.det.auc) << '\n';
    os << p << "median_normal = " << num(r.gap.median_normal) << '\n';
    os << p << "median_candidate = " << num(r.gap.median_candidate) << '\n';
    os << p << "median_maneuver = " << num(r.gap.median_maneuver) << '\n';
    os << p << "median_gap = " << num(r.gap.delta) << '\n';
    os << p << "top_k = " << r.overlap.k << '\n';
    os << p << "top_k.normal = " << r.overlap.model.normal << '\n';
    os << p << "top_k.candidate = " << r.overlap.model.candidate << '\n';
    os << p << "top_k.maneuver = " << r.overlap.model.maneuver << '\n';
    os << p << "random_k.normal = " << r.overlap.random.normal << '\n';
    os << p << "random_k.candidate = " << r.overlap.random.candidate << '\n';
    os << p << "random_k.maneuver = " << r.overlap.random.maneuver << '\n';

    std::ofstream det(dir / ("det_" + r.name + ".csv"));
    if (!det) throw std::runtime_error("cannot write DET curve for " + r.name);
    det << "threshold,fpr,fnr\n";
    for (const auto& pt : r.det.points) det << num(pt.threshold) << ',' << num(pt.fpr) << ',' << num(pt.fnr) << '\n';
    write_histogram(dir / ("hist_" + r.name + "_normal.csv"), r.gap.normal);
    write_histogram(dir / ("hist_" + r.name + "_candidate.csv"), r.gap.candidate);
    write_histogram(dir / ("hist_" + r.name + "_maneuver.csv"), r.gap.maneuver);
  }
}

std::string model_name_from_path(const fs::path& scores_file) {
  std::string stem = scores_file.stem().string();
  constexpr std::string_view prefix = "scores_";
  if (stem.size() > prefix.size() && stem.compare(0, prefix.size(), prefix) == 0) stem.erase(0, prefix.size());
  return stem;
}

}  // namespace dagan
