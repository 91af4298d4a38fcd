#pragma once

#include "dagan/autodiff.hpp"
#include "dagan/data.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dagan {

enum class Architecture { FC, CNN, LSTM, CNN_LSTM };
enum class Modality { Physio, Can, Both };

std::string_view to_string(Architecture a);
std::string_view to_string(Modality m);
Architecture parse_architecture(std::string_view s);
Modality parse_modality(std::string_view s);

struct ArchitectureTag {
  Architecture arch = Architecture::CNN;
  Modality modality = Modality::Both;

  /// Canonical channel indices used by the modality (3, 6 or 9 of them).
  std::vector<Index> channel_indices() const;
  Index channels() const { return static_cast<Index>(channel_indices().size()); }
  Index physio_channels() const;
  /// Seconds of context the generator is conditioned on.
  double condition_s() const;

  bool operator==(const ArchitectureTag&) const = default;
};

/// Activation of hidden conv and dense layers.
inline constexpr Activation kHiddenActivation = Activation::LeakyRelu;

/// Generated raw windows pass through limit * tanh(x / limit) per channel.
inline constexpr double kCanOutputLimit = 1.0;
inline constexpr double kPhysioOutputLimit = 4.0;

// Layer geometry.
inline constexpr std::array<Index, 5> kFcGeneratorWidths = {180, 180, 180, 180, 180};
inline constexpr std::array<Index, 5> kFcDiscriminatorWidths = {51, 51, 51, 51, 51};
inline constexpr std::array<Index, 4> kConvChannels = {18, 18, 9, 1};
inline constexpr std::array<Index, 4> kConvKernels = {9, 3, 3, 3};
inline constexpr Index kLstmHidden = 27;
inline constexpr Index kLstmLayers = 2;
inline constexpr Index kNoiseDim = 16;
inline constexpr Index kSegments = 10;
inline constexpr Index kLongConditionFrames = kSegments * kTargetFrames;

struct GanModel {
  ArchitectureTag tag;
  ParamSet generator;
  ParamSet discriminator;
  /// Noise values drawn per sample.
  Index noise_dim = 0;
  std::uint64_t seed = 0;
};

GanModel build_fc(Modality modality, std::uint64_t seed);
GanModel build_cnn(Modality modality, std::uint64_t seed);
GanModel build_lstm(Modality modality, std::uint64_t seed);
GanModel build_cnn_lstm(Modality modality, std::uint64_t seed);
GanModel build_model(ArchitectureTag tag, std::uint64_t seed);

/// Length of the flattened CNN block output for an input of `frames`.
Index cnn_block_output(Index frames);

/// Batched network inputs. For FC these are feature vectors; otherwise
/// channel-major raw windows (condition B x C*Tc, target B x C*180).
struct ModelInputs {
  Mat condition;
  Mat target;
};

/// Gathers the model's view of a batch of window pairs (normalized sessions).
ModelInputs prepare_inputs(const ArchitectureTag& tag, std::span<const WindowPair* const> pairs);

/// Width of one generated/real target sample as the discriminator sees it.
Index target_width(const ArchitectureTag& tag);

Mat sample_noise(const GanModel& model, Index batch, Rng& rng);

/// Resolves parameter ids to tape leaves, once per tape. A binder over a
/// mutable ParamSet records gradients; over a const one it does not.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamSet& params) : tape_(tape), mutable_(&params), params_(&params) {}
  ParamBinder(Tape& tape, const ParamSet& params) : tape_(tape), params_(&params) {}

  Var operator()(const std::string& id);
  Tape& tape() { return tape_; }

 private:
  Tape& tape_;
  ParamSet* mutable_ = nullptr;
  const ParamSet* params_;
  std::map<std::string, Var> cache_;
};

/// G(noise | condition): output has exactly the target's width.
Var generate(const ArchitectureTag& tag, ParamBinder& g, Var condition, Var noise);

/// D(candidate | condition) for each candidate; outputs are B x 1 in (0,1).
/// Recurrent discriminators run the shared condition prefix once.
std::vector<Var> discriminate(const ArchitectureTag& tag, ParamBinder& d, Var condition,
                              const std::vector<Var>& candidates);
/// The discriminator's pre-sigmoid outputs, for numerically stable losses.
std::vector<Var> discriminate_logits(const ArchitectureTag& tag, ParamBinder& d, Var condition,
                                     const std::vector<Var>& candidates);

}  // namespace dagan
