#pragma once

#include "dagan/baselines.hpp"
#include "dagan/gan.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace dagan {

/// Session ids of "train", "dev" or "test".
const std::vector<std::string>& split_ids(const Corpus& corpus, std::string_view split);

/// Independent stream seed derived from a run seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Training pairs drawn per epoch unless overridden. Recurrent models see a
/// seeded subset each epoch to keep a full run within a desk-scale budget.
Index default_pairs_per_epoch(Architecture arch);

/// Training windows for a model: its own condition length, one-second hop.
std::vector<WindowPair> training_pairs(const Corpus& corpus, const ArchitectureTag& tag);

struct Donors {
  const GanModel* cnn = nullptr;
  const GanModel* lstm = nullptr;
};

struct TrainOutcome {
  GanModel model;
  TrainLog log;
};

/// Trains FC, CNN or LSTM directly. CNN+LSTM runs the staged schedule; donors
/// that are not supplied are trained first for `config.epochs` epochs and
/// logged under the "donors" phase.
TrainOutcome train_model(const Corpus& corpus, const ArchitectureTag& tag, const TrainConfig& config,
                         Donors donors = {}, const EpochCallback& on_epoch = {});

/// Scores the shared evaluation windows of a split.
std::vector<ScoreRecord> score_split(const GanModel& model, const Corpus& corpus, std::string_view split,
                                     const ScoreConfig& config = {});

enum class BaselineMethod { Fixed, Pca, Gmm, BeatGan };

std::string_view to_string(BaselineMethod m);
BaselineMethod parse_baseline_method(std::string_view s);

struct BaselineConfig {
  std::uint64_t seed = 0;
  FixedThresholdConfig fixed;
  GmmConfig gmm;
  BeatGanConfig beatgan;
};

/// Seconds of signal the PCA and GMM feature vectors summarize; the window
/// ends where the scored target ends.
inline constexpr double kBaselineFeatureS = 12.0;

/// 51-dimensional features of the 12 s window ending at each target's end.
Mat baseline_features(std::span<const WindowPair> pairs);

/// Fits on the train split where the method needs fitting and scores the
/// evaluation windows of `split`. s_real and s_fake stay empty.
std::vector<ScoreRecord> run_baseline(const Corpus& corpus, BaselineMethod method, const BaselineConfig& config,
                                      std::string_view split = "test");

}  // namespace dagan
