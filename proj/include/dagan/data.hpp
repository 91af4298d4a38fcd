#pragma once

#include "dagan/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dagan {

inline constexpr int kSampleRate = 30;
inline constexpr Index kChannelCount = 9;
inline constexpr Index kTargetFrames = 6 * kSampleRate;

/// Channel order is the on-disk column order.
enum class Channel : Index { Speed, SteerSpeed, SteerAngle, Throttle, Brake, Yaw, Hr, Br, Eda };

inline constexpr std::array<std::string_view, kChannelCount> kChannelNames = {
    "speed", "steer_speed", "steer_angle", "throttle", "brake", "yaw", "hr", "br", "eda"};

constexpr Index channel_index(Channel c) { return static_cast<Index>(c); }
constexpr bool is_physiological(Index channel) { return channel >= channel_index(Channel::Hr); }

/// Fixed physical range of a CAN channel, mapped affinely onto [-1, 1].
struct ChannelRange {
  double lo;
  double hi;
  double span() const { return hi - lo; }
};

/// Ranges for the six CAN channels in header order.
inline constexpr std::array<ChannelRange, 6> kCanRanges = {{
    {0.0, 120.0},     // speed, km/h
    {-2.0, 2.0},      // steer_speed, rad/s
    {-7.0, 7.0},      // steer_angle, rad
    {0.0, 90.0},      // throttle, deg
    {0.0, 5000.0},    // brake, kPa
    {-1.0, 1.0},      // yaw, rad
}};

enum class EventSet { Normal, Maneuver, Candidate };

std::string_view to_string(EventSet s);
EventSet parse_event_set(std::string_view s);

struct Annotation {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string label;
  EventSet set = EventSet::Normal;
};

/// Nine synchronized channels at 30 Hz. `signals` is channels x frames.
struct Session {
  std::string id;
  Mat signals;
  std::vector<Annotation> annotations;

  Index frames() const { return signals.cols(); }
  double duration_s() const { return static_cast<double>(frames()) / kSampleRate; }
};

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> dev;
  std::vector<std::string> test;
};

struct Corpus {
  std::vector<Session> sessions;
  SplitSpec split;

  const Session& session(const std::string& id) const;
  std::vector<const Session*> sessions_of(const std::vector<std::string>& ids) const;
};

struct CorpusConfig {
  std::uint64_t seed = 0;
  double train_min = 60.0;
  double dev_min = 10.0;
  double test_min = 10.0;
  /// Candidate events per minute (Poisson).
  double event_rate = 0.5;
  /// Maneuvers (turns, intersection stops) per minute (Poisson).
  double maneuver_rate = 1.0;
  /// Sessions are cut into pieces of at most this many minutes.
  double session_min = 10.0;
};

/// Synthesizes a corpus. A pure function of the config.
Corpus generate_corpus(const CorpusConfig& config);

/// Writes sessions/, annotations/ and split.json. `provenance` is stored
/// verbatim under the "provenance" key of split.json.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir,
                  const std::string& provenance = {});
Corpus read_corpus(const std::filesystem::path& dir);

void write_session_csv(const Session& session, const std::filesystem::path& path);
/// Parses a session CSV; the id is the file stem and annotations are empty.
Session load_session(const std::filesystem::path& path);
void write_annotations_csv(const std::vector<Annotation>& annotations,
                           const std::filesystem::path& path);
std::vector<Annotation> load_annotations(const std::filesystem::path& path);

/// Physiological channels: z-score over the session (population std; constant
/// channels become zero). CAN channels: affine map of kCanRanges onto [-1, 1],
/// clamped.
Session znormalize(const Session& session);

/// (condition, target) slice pair inside one session.
struct WindowPair {
  std::shared_ptr<const Session> session;
  Index condition_start = 0;
  Index condition_frames = 0;
  Index target_frames = kTargetFrames;
  EventSet label = EventSet::Normal;

  Index target_start() const { return condition_start + condition_frames; }
  double target_start_s() const { return static_cast<double>(target_start()) / kSampleRate; }
  auto condition() const { return session->signals.middleCols(condition_start, condition_frames); }
  auto target() const { return session->signals.middleCols(target_start(), target_frames); }
  /// The last `frames` frames of the condition window.
  auto condition_tail(Index frames) const {
    return session->signals.middleCols(target_start() - frames, frames);
  }
};

/// Labels [start_s, end_s) by any-overlap with annotations; candidate beats
/// maneuver beats normal.
EventSet label_interval(const std::vector<Annotation>& annotations, double start_s, double end_s);

/// Slides a (condition_s + target_s) window every hop_s seconds. Empty when
/// the session is too short.
std::vector<WindowPair> make_window_pairs(std::shared_ptr<const Session> session, double condition_s,
                                          double target_s, double hop_s);

/// Window pairs over the listed sessions, normalized first when asked.
std::vector<WindowPair> split_pairs(const Corpus& corpus, const std::vector<std::string>& ids,
                                    double condition_s, double hop_s, bool normalize = true);

inline constexpr double kTrainHopS = 1.0;
inline constexpr double kEvalHopS = 2.0;
inline constexpr double kLongConditionS = 60.0;
inline constexpr double kShortConditionS = 6.0;

/// Scoring windows shared by every model: a 60 s condition (short-context
/// models read its tail) and targets every kEvalHopS seconds.
inline std::vector<WindowPair> evaluation_pairs(const Corpus& corpus, const std::vector<std::string>& ids,
                                                bool normalize = true) {
  return split_pairs(corpus, ids, kLongConditionS, kEvalHopS, normalize);
}

}  // namespace dagan
