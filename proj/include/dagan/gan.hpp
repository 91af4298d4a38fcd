#pragma once

#include "dagan/data.hpp"
#include "dagan/models.hpp"
#include "dagan/optim.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dagan {

struct TrainConfig {
  int epochs = 20;
  Index batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.5;
  /// Generator learning rate as a fraction of `lr`.
  double g_lr_ratio = 1.0;
  /// Std of Gaussian noise added to every window the discriminator sees
  /// during training (raw-window models only).
  double instance_noise = 0.5;
  std::uint64_t seed = 0;
  /// CNN+LSTM schedule: epochs with the CNN blocks frozen, then joint epochs.
  int stage_lstm_only = 10;
  int stage_joint = 10;
  /// Staged CNN+LSTM overrides: instance noise and generator rate for both
  /// stages, and the joint stage's learning rate as a fraction of `lr`.
  double staged_instance_noise = 0.0;
  double staged_g_lr_ratio = 0.1;
  double joint_lr_ratio = 0.03;
  /// Upper bound on pairs drawn per epoch (0 = every pair). Each epoch draws a
  /// fresh seeded subset of the shuffled pool.
  Index pairs_per_epoch = 0;
  /// Upper bound on dev pairs used for the per-epoch accuracy (0 = all).
  Index dev_pairs = 256;
  double clip_norm = 5.0;
  bool update_generator = true;
  bool update_discriminator = true;

  /// Throws UsageError when an invariant is violated.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double g_loss = 0.0;
  double d_loss = 0.0;
  double dev_d_acc = 0.0;
  std::string phase;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// Called after every epoch; lets callers stream progress.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adversarial training: per batch one discriminator step (real -> 1,
/// generated -> 0) followed by one generator step with the non-saturating
/// loss (generated -> 1). Throws NumericError naming epoch and batch when a
/// loss turns non-finite.
TrainLog train(GanModel& model, const std::vector<WindowPair>& pairs,
               const std::vector<WindowPair>& dev, const TrainConfig& config,
               const EpochCallback& on_epoch = {});

/// Discriminator accuracy on real (D > 0.5) and generated (D < 0.5) samples.
double dev_accuracy(const GanModel& model, const std::vector<WindowPair>& dev, Index max_pairs,
                    std::uint64_t noise_seed, Index batch_size = 64);

/// Copies donor weights into a CNN+LSTM model. CNN blocks come from the CNN
/// donor unchanged. LSTM tensors come from the LSTM donor where shapes agree;
/// the generator head takes the donor rows that act on the hidden state.
/// Returns the ids that were imported.
std::vector<std::string> import_donors(GanModel& target, const GanModel& cnn, const GanModel& lstm);

/// Staged CNN+LSTM schedule: import donors, train with the CNN blocks frozen
/// for `stage_lstm_only` epochs, then train everything for `stage_joint` epochs
/// at `joint_lr_ratio` times the rate. Both stages use the staged_* overrides.
/// `after_frozen_stage` (optional) receives the model between the two stages.
GanModel train_staged(const GanModel& cnn, const GanModel& lstm, const std::vector<WindowPair>& pairs,
                      const std::vector<WindowPair>& dev, const TrainConfig& config, TrainLog& log,
                      const std::function<void(const GanModel&)>& after_frozen_stage = {},
                      const EpochCallback& on_epoch = {});

struct ScoreRecord {
  std::string session_id;
  double target_start_s = 0.0;
  std::optional<double> s_real;
  std::optional<double> s_fake;
  double m_anomaly = 0.0;
  EventSet set = EventSet::Normal;
};

struct ScoreConfig {
  std::uint64_t noise_seed = 0;
  /// Generated samples averaged into S_F per pair.
  int noise_draws = 1;
  Index batch_size = 64;
  /// Worker threads; batches are fixed up front so results do not depend on it.
  int threads = 1;
};

/// m_anomaly = |S_R - S_F| for every pair, in input order.
std::vector<ScoreRecord> score(const GanModel& model, const std::vector<WindowPair>& pairs,
                               const ScoreConfig& config = {});

inline double anomaly_metric(double s_real, double s_fake) { return std::abs(s_real - s_fake); }

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline constexpr std::string_view kScoresHeader = "session_id,target_start_s,s_real,s_fake,m_anomaly,set";
inline constexpr std::string_view kTrainLogHeader = "epoch,g_loss,d_loss,dev_d_acc";

/// Writes '#'-prefixed provenance lines, then the header and one row per record.
void write_scores_csv(const std::vector<ScoreRecord>& records, const std::filesystem::path& path,
                      const std::vector<std::string>& provenance = {});
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

void write_train_log(const TrainLog& log, std::ostream& os,
                     const std::vector<std::string>& provenance = {});

/// Model container: a text header followed by raw little-endian float64 blocks.
/// See docs/model_format.md.
void save_model(const GanModel& model, const std::filesystem::path& path,
                const std::vector<std::string>& provenance = {});
GanModel load_model(const std::filesystem::path& path);

}  // namespace dagan
