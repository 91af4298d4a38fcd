#pragma once

#include "dagan/data.hpp"
#include "dagan/features.hpp"
#include "dagan/optim.hpp"
#include "dagan/tensor.hpp"

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dagan {

// ---------------------------------------------------------------------------
// Fixed-threshold rules
// ---------------------------------------------------------------------------

struct FixedThresholdConfig {
  // Base thresholds.
  double ac = 0.8;        // m/s^2
  double ss_low = 0.1;    // rad/s
  double vs = 30.0;       // km/h
  double ss_high = 0.4;   // rad/s
  double ya = 0.7;        // rad
  // Ranges swept by alpha.
  double r_ac = 10.0;
  double r_ss = kCanRanges[1].hi - kCanRanges[1].lo;
  double r_vs = kCanRanges[0].hi - kCanRanges[0].lo;
  double r_ya = kCanRanges[5].hi - kCanRanges[5].lo;
  /// Moving-average span applied to the speed derivative.
  double ac_smoothing_s = 0.5;

  void validate() const;
};

/// CAN statistics of one raw (physical units) window.
struct CanWindowStats {
  double ac = 0.0;  // window mean acceleration, m/s^2
  double ss = 0.0;  // max |steering speed|
  double vs = 0.0;  // max |speed|
  double ya = 0.0;  // max |yaw|
};

/// `window` is a raw 9 x N block in canonical channel order.
CanWindowStats can_window_stats(const Eigen::Ref<const Mat>& window, const FixedThresholdConfig& config = {});

bool fixed_threshold_flag(const CanWindowStats& stats, double alpha, const FixedThresholdConfig& config = {});

/// Largest alpha on the grid -1, -0.99, ..., 1 at which the rule fires;
/// kFixedThresholdNever when it fires nowhere on the grid.
double fixed_threshold_score(const CanWindowStats& stats, const FixedThresholdConfig& config = {});
inline constexpr double kFixedThresholdNever = -1.01;

// ---------------------------------------------------------------------------
// Standardization, PCA
// ---------------------------------------------------------------------------

/// Per-dimension standardization fitted on training rows. Dimensions with
/// zero variance are dropped.
struct Standardizer {
  Vec mean;
  Vec scale;
  std::vector<Index> kept;
  std::vector<Index> dropped;

  static Standardizer fit(const Mat& x);
  /// Standardized copy restricted to the kept dimensions.
  Mat apply(const Mat& x) const;
};

struct PcaModel {
  Standardizer standardizer;
  Vec axis;         // unit principal axis in standardized, kept coordinates
  Vec eigenvalues;  // descending
};

inline constexpr Index kPcaMinSamples = 52;

/// Principal axis of the standardized training rows. The axis sign makes the
/// projected training scores non-negatively skewed; a zero skewness falls
/// back to a positive first nonzero component.
PcaModel pca_fit(const Mat& train);
Vec pca_score(const PcaModel& model, const Mat& x);

// ---------------------------------------------------------------------------
// Gaussian mixture
// ---------------------------------------------------------------------------

enum class CovarianceType { Diagonal, Full };

struct GmmConfig {
  int components = 8;
  std::uint64_t seed = 0;
  CovarianceType covariance = CovarianceType::Diagonal;
  double variance_floor = 1e-6;
  /// Added to the diagonal of full covariances.
  double ridge = 1e-6;
  int max_iterations = 200;
  /// Stop when the total log-likelihood improves by less than this.
  double tolerance = 1e-6;
};

struct GmmParams {
  CovarianceType covariance = CovarianceType::Diagonal;
  Vec weights;                    // k
  Mat means;                      // k x d
  Mat variances;                  // k x d (diagonal)
  std::vector<Mat> covariances;   // k of d x d (full)
  std::vector<double> log_likelihood_trace;
};

GmmParams gmm_fit(const Mat& x, const GmmConfig& config = {});
/// log p(x) per row.
Vec gmm_log_density(const GmmParams& params, const Mat& x);
/// -log p(x) per row.
Vec gmm_score(const GmmParams& params, const Mat& x);
double gmm_log_likelihood(const GmmParams& params, const Mat& x);
Index gmm_free_parameters(Index components, Index dim, CovarianceType covariance);

inline double aic(double log_likelihood, double params) { return 2.0 * params - 2.0 * log_likelihood; }
inline double bic(double log_likelihood, double params, double n) {
  return params * std::log(n) - 2.0 * log_likelihood;
}

struct ModelSelectionRow {
  int components = 0;
  double log_likelihood = 0.0;
  Index parameters = 0;
  double aic = 0.0;
  double bic = 0.0;
};

struct ModelSelection {
  std::vector<ModelSelectionRow> rows;
  int best_aic = 0;
  int best_bic = 0;
};

ModelSelection gmm_model_select(const Mat& x, const std::vector<int>& candidates, const GmmConfig& config = {});

// ---------------------------------------------------------------------------
// BeatGAN
// ---------------------------------------------------------------------------

inline constexpr Index kBeatGanWidth = kChannelCount * kTargetFrames;
inline constexpr std::array<Index, 10> kBeatGanGeneratorWidths = {kBeatGanWidth, 256, 128, 32, 10,
                                                                  10, 32, 128, 256, kBeatGanWidth};
inline constexpr std::array<Index, 5> kBeatGanDiscriminatorWidths = {kBeatGanWidth, 256, 128, 32, 1};

struct BeatGan {
  ParamSet generator;
  ParamSet discriminator;
  std::uint64_t seed = 0;
};

struct BeatGanConfig {
  int epochs = 20;
  Index batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.5;
  std::uint64_t seed = 0;
  Index pairs_per_epoch = 0;
  double adversarial_weight = 0.1;
  double clip_norm = 5.0;
};

BeatGan build_beatgan(std::uint64_t seed);
/// Layer widths read back from the generator's parameter shapes.
std::vector<Index> beatgan_generator_widths(const BeatGan& model);

/// One row per 6 s window: all nine channels, channel-major.
Mat beatgan_windows(std::span<const WindowPair* const> pairs);

using BeatGanEpochCallback = std::function<void(int epoch, double g_loss, double d_loss)>;
void beatgan_train(BeatGan& model, const Mat& windows, const BeatGanConfig& config,
                   const BeatGanEpochCallback& on_epoch = {});
Mat beatgan_reconstruct(const BeatGan& model, const Mat& windows);
/// Mean squared reconstruction error per row.
Vec beatgan_score(const BeatGan& model, const Mat& windows);

}  // namespace dagan
