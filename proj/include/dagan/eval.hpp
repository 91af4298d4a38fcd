#pragma once

#include "dagan/gan.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dagan {

struct DetPoint {
  double threshold;
  double fpr;
  double fnr;
};

/// Points ordered by decreasing threshold, from +inf (nothing flagged) to
/// -inf (everything flagged). A score above the threshold is flagged.
struct DetCurve {
  std::vector<DetPoint> points;
  double eer = 0.0;
  double auc = 0.0;
};

DetCurve det_curve(std::span<const double> normal, std::span<const double> candidate);
/// Uses the normal and candidate records; maneuver records are ignored.
DetCurve det_curve(const std::vector<ScoreRecord>& records);

/// Linear interpolation between the two sweep points that straddle FPR = FNR.
double eer(const DetCurve& curve);
/// Trapezoidal area under FNR(FPR) over [0, 1].
double auc(const DetCurve& curve);

inline constexpr int kHistogramBins = 50;

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<Index> counts;
};

struct MedianGap {
  double median_normal = 0.0;
  double median_candidate = 0.0;
  /// NaN when there are no maneuver records.
  double median_maneuver = 0.0;
  double delta = 0.0;
  Histogram normal, candidate, maneuver;
};

double median(std::vector<double> values);

/// Histograms span [0, 1] unless some score falls outside, in which case
/// they span the range of all scores.
MedianGap median_gap(const std::vector<ScoreRecord>& records, int bins = kHistogramBins);

struct OverlapRow {
  Index normal = 0;
  Index candidate = 0;
  Index maneuver = 0;
  Index total() const { return normal + candidate + maneuver; }
};

struct OverlapTable {
  Index k = 0;
  OverlapRow model;
  OverlapRow random;
};

inline constexpr Index kDefaultTopK = 100;

/// Sets of the K highest-scoring records (ties: earlier target start, then
/// session id) next to K records drawn uniformly without replacement.
OverlapTable top_k_overlap(const std::vector<ScoreRecord>& records, Index k, std::uint64_t random_seed);

/// Indices of the K highest-scoring records under the tie rule.
std::vector<std::size_t> top_k_indices(const std::vector<ScoreRecord>& records, Index k);

struct ModelReport {
  std::string name;
  std::size_t n_normal = 0, n_candidate = 0, n_maneuver = 0;
  DetCurve det;
  MedianGap gap;
  OverlapTable overlap;
};

ModelReport evaluate(const std::string& name, const std::vector<ScoreRecord>& records, Index top_k,
                     std::uint64_t random_seed);

/// Writes report.txt plus det_<model>.csv and hist_<model>_<set>.csv for
/// every model. See docs/report_format.md.
void write_report(const std::filesystem::path& dir, const std::vector<ModelReport>& reports,
                  const std::vector<std::string>& provenance = {});

/// Model name of a scores file: its stem without a leading "scores_".
std::string model_name_from_path(const std::filesystem::path& scores_file);

}  // namespace dagan
