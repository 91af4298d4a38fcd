#include "dagan/models.hpp"

#include "dagan/features.hpp"

namespace dagan {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::FC: return "fc";
    case Architecture::CNN: return "cnn";
    case Architecture::LSTM: return "lstm";
    case Architecture::CNN_LSTM: return "cnn-lstm";
  }
  return "cnn";
}

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Physio: return "physio";
    case Modality::Can: return "can";
    case Modality::Both: return "both";
  }
  return "both";
}

Architecture parse_architecture(std::string_view s) {
  if (s == "fc" || s == "FC") return Architecture::FC;
  if (s == "cnn" || s == "CNN") return Architecture::CNN;
  if (s == "lstm" || s == "LSTM") return Architecture::LSTM;
  if (s == "cnn-lstm" || s == "CNN_LSTM") return Architecture::CNN_LSTM;
  throw UsageError("unknown model '" + std::string(s) + "'");
}

Modality parse_modality(std::string_view s) {
  if (s == "physio") return Modality::Physio;
  if (s == "can") return Modality::Can;
  if (s == "both") return Modality::Both;
  throw UsageError("unknown modality '" + std::string(s) + "'");
}

std::vector<Index> ArchitectureTag::channel_indices() const {
  switch (modality) {
    case Modality::Physio: return {6, 7, 8};
    case Modality::Can: return {0, 1, 2, 3, 4, 5};
    case Modality::Both: return {0, 1, 2, 3, 4, 5, 6, 7, 8};
  }
  return {};
}

Index ArchitectureTag::physio_channels() const { return modality == Modality::Can ? 0 : 3; }

double ArchitectureTag::condition_s() const {
  return arch == Architecture::FC || arch == Architecture::CNN ? kShortConditionS : kLongConditionS;
}

Index cnn_block_output(Index frames) {
  Index t = frames;
  for (Index k : kConvKernels) t = conv1d_output_length(t, k, 1);
  return t;
}

Index target_width(const ArchitectureTag& tag) {
  if (tag.arch == Architecture::FC) return feature_dimension(tag.channels(), tag.physio_channels());
  return tag.channels() * kTargetFrames;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

void add_dense(ParamSet& ps, const std::string& name, Index in, Index out, Rng& rng) {
  glorot_uniform(ps.add(name + ".w", {in, out}), in, out, rng);
  ps.add(name + ".b", {1, out});
}

void add_cnn_block(ParamSet& ps, const std::string& prefix, Index in_channels, Rng& rng) {
  Index ch = in_channels;
  for (std::size_t l = 0; l < kConvChannels.size(); ++l) {
    const std::string name = prefix + "conv" + std::to_string(l + 1);
    const Index out = kConvChannels[l];
    const Index k = kConvKernels[l];
    glorot_uniform(ps.add(name + ".w", {out, ch, k}), ch * k, out * k, rng);
    ps.add(name + ".b", {1, out});
    ch = out;
  }
}

void add_lstm_stack(ParamSet& ps, const std::string& prefix, Index input_dim, Rng& rng) {
  Index in = input_dim;
  for (Index l = 1; l <= kLstmLayers; ++l) {
    const std::string name = prefix + "l" + std::to_string(l);
    glorot_uniform(ps.add(name + ".w_in", {in, 4 * kLstmHidden}), in, 4 * kLstmHidden, rng);
    glorot_uniform(ps.add(name + ".w_rec", {kLstmHidden, 4 * kLstmHidden}), kLstmHidden,
                   4 * kLstmHidden, rng);
    ps.add(name + ".b", {1, 4 * kLstmHidden}).value.middleCols(kLstmHidden, kLstmHidden).setConstant(1.0);
    in = kLstmHidden;
  }
}

GanModel start_model(Architecture arch, Modality modality, std::uint64_t seed, Index noise_dim) {
  GanModel m;
  m.tag = {arch, modality};
  m.seed = seed;
  m.noise_dim = noise_dim;
  return m;
}

}  // namespace

GanModel build_fc(Modality modality, std::uint64_t seed) {
  GanModel m = start_model(Architecture::FC, modality, seed, kNoiseDim);
  Rng rng(seed);
  const Index f = target_width(m.tag);
  Index in = f + kNoiseDim;
  for (std::size_t l = 0; l < kFcGeneratorWidths.size(); ++l) {
    add_dense(m.generator, "g.fc" + std::to_string(l + 1), in, kFcGeneratorWidths[l], rng);
    in = kFcGeneratorWidths[l];
  }
  add_dense(m.generator, "g.out", in, f, rng);
  in = f;
  for (std::size_t l = 0; l < kFcDiscriminatorWidths.size(); ++l) {
    add_dense(m.discriminator, "d.fc" + std::to_string(l + 1), in, kFcDiscriminatorWidths[l], rng);
    in = kFcDiscriminatorWidths[l];
  }
  add_dense(m.discriminator, "d.out", in, 1, rng);
  return m;
}

GanModel build_cnn(Modality modality, std::uint64_t seed) {
  GanModel m = start_model(Architecture::CNN, modality, seed, kTargetFrames);
  Rng rng(seed);
  const Index c = m.tag.channels();
  add_cnn_block(m.generator, "g.cnn.", c + 1, rng);
  add_dense(m.generator, "g.head", cnn_block_output(kTargetFrames), c * kTargetFrames, rng);
  add_cnn_block(m.discriminator, "d.cnn.", c, rng);
  add_dense(m.discriminator, "d.head", cnn_block_output(2 * kTargetFrames), 1, rng);
  return m;
}

GanModel build_lstm(Modality modality, std::uint64_t seed) {
  GanModel m = start_model(Architecture::LSTM, modality, seed, kNoiseDim);
  Rng rng(seed);
  const Index c = m.tag.channels();
  add_lstm_stack(m.generator, "g.lstm.", c, rng);
  add_dense(m.generator, "g.head", kLstmHidden + kNoiseDim, c * kTargetFrames, rng);
  add_lstm_stack(m.discriminator, "d.lstm.", c, rng);
  add_dense(m.discriminator, "d.head", kLstmHidden, 1, rng);
  return m;
}

GanModel build_cnn_lstm(Modality modality, std::uint64_t seed) {
  GanModel m = start_model(Architecture::CNN_LSTM, modality, seed, kSegments * kTargetFrames);
  Rng rng(seed);
  const Index c = m.tag.channels();
  const Index token = cnn_block_output(kTargetFrames);
  add_cnn_block(m.generator, "g.cnn.", c + 1, rng);
  add_lstm_stack(m.generator, "g.lstm.", token, rng);
  add_dense(m.generator, "g.head", kLstmHidden, c * kTargetFrames, rng);
  add_cnn_block(m.discriminator, "d.cnn.", c, rng);
  add_lstm_stack(m.discriminator, "d.lstm.", token, rng);
  add_dense(m.discriminator, "d.head", kLstmHidden, 1, rng);
  return m;
}

GanModel build_model(ArchitectureTag tag, std::uint64_t seed) {
  switch (tag.arch) {
    case Architecture::FC: return build_fc(tag.modality, seed);
    case Architecture::CNN: return build_cnn(tag.modality, seed);
    case Architecture::LSTM: return build_lstm(tag.modality, seed);
    case Architecture::CNN_LSTM: return build_cnn_lstm(tag.modality, seed);
  }
  throw UsageError("unknown architecture");
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

ModelInputs prepare_inputs(const ArchitectureTag& tag, std::span<const WindowPair* const> pairs) {
  const auto channels = tag.channel_indices();
  const Index c = static_cast<Index>(channels.size());
  const Index b = static_cast<Index>(pairs.size());
  ModelInputs in;
  if (tag.arch == Architecture::FC) {
    const Index f = target_width(tag);
    in.condition.resize(b, f);
    in.target.resize(b, f);
    for (Index i = 0; i < b; ++i) {
      const WindowPair& p = *pairs[static_cast<std::size_t>(i)];
      in.condition.row(i) = extract_features(p.condition_tail(kTargetFrames), channels).transpose();
      in.target.row(i) = extract_features(p.target(), channels).transpose();
    }
    return in;
  }
  const Index cond_frames =
      tag.arch == Architecture::CNN ? kTargetFrames : kLongConditionFrames;
  in.condition.resize(b, c * cond_frames);
  in.target.resize(b, c * kTargetFrames);
  for (Index i = 0; i < b; ++i) {
    const WindowPair& p = *pairs[static_cast<std::size_t>(i)];
    if (p.condition_frames < cond_frames)
      throw DimensionError("window pair condition has " + std::to_string(p.condition_frames) +
                           " frames, model needs " + std::to_string(cond_frames));
    const auto cond = p.condition_tail(cond_frames);
    const auto target = p.target();
    for (Index k = 0; k < c; ++k) {
      const Index ch = channels[static_cast<std::size_t>(k)];
      in.condition.row(i).segment(k * cond_frames, cond_frames) = cond.row(ch);
      in.target.row(i).segment(k * kTargetFrames, kTargetFrames) = target.row(ch);
    }
  }
  return in;
}

Mat sample_noise(const GanModel& model, Index batch, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Mat z(batch, model.noise_dim);
  for (Index i = 0; i < batch; ++i)
    for (Index j = 0; j < model.noise_dim; ++j) z(i, j) = n01(rng);
  return z;
}

// ---------------------------------------------------------------------------
// Forward graphs
// ---------------------------------------------------------------------------

Var ParamBinder::operator()(const std::string& id) {
  auto it = cache_.find(id);
  if (it != cache_.end()) return it->second;
  Var v = mutable_ ? tape_.param(mutable_->at(id)) : tape_.param(params_->at(id));
  cache_.emplace(id, v);
  return v;
}

namespace {

Var dense_layer(ParamBinder& p, const std::string& name, Var x) {
  return dense(p.tape(), x, p(name + ".w"), p(name + ".b"));
}

Var hidden_act(Tape& t, Var x) { return activate(t, x, kHiddenActivation); }

Var cnn_block(ParamBinder& p, const std::string& prefix, Var x, Index in_channels) {
  Index ch = in_channels;
  for (std::size_t l = 0; l < kConvChannels.size(); ++l) {
    const std::string name = prefix + "conv" + std::to_string(l + 1);
    x = conv1d(p.tape(), x, p(name + ".w"), p(name + ".b"), ch, kConvKernels[l]);
    // The one-channel output layer stays linear.
    if (l + 1 < kConvChannels.size()) x = hidden_act(p.tape(), x);
    ch = kConvChannels[l];
  }
  return x;
}

struct StackState {
  Var h[kLstmLayers];
  Var c[kLstmLayers];
};

// Two-layer LSTM over `steps` time-major frames. Continues from and updates
// `state`; returns the top layer's last hidden state.
Var lstm_stack(ParamBinder& p, const std::string& prefix, Var seq, Index steps, Index input_dim,
               StackState& state) {
  Tape& t = p.tape();
  Var x = seq;
  Index in = input_dim;
  Var last;
  for (Index l = 0; l < kLstmLayers; ++l) {
    const std::string name = prefix + "l" + std::to_string(l + 1);
    LstmOutput out{lstm(t, x, steps, in, p(name + ".w_in"), p(name + ".w_rec"), p(name + ".b"),
                        state.h[l], state.c[l]),
                   steps, kLstmHidden};
    state.h[l] = out.last_hidden(t);
    state.c[l] = out.last_cell(t);
    x = out.packed;
    in = kLstmHidden;
    last = state.h[l];
  }
  return last;
}

// Generated raw windows are kept inside the range of normalized data: CAN
// channels live in [-1, 1], z-scored physiology in a few standard deviations.
Var bound_output(const ArchitectureTag& tag, Tape& t, Var x) {
  const auto channels = tag.channel_indices();
  RowVec limits(static_cast<Index>(channels.size()) * kTargetFrames);
  for (std::size_t k = 0; k < channels.size(); ++k)
    limits.segment(static_cast<Index>(k) * kTargetFrames, kTargetFrames)
        .setConstant(is_physiological(channels[k]) ? kPhysioOutputLimit : kCanOutputLimit);
  return soft_bound(t, x, limits);
}

}  // namespace

Var generate(const ArchitectureTag& tag, ParamBinder& g, Var condition, Var noise) {
  Tape& t = g.tape();
  const Index c = tag.channels();
  switch (tag.arch) {
    case Architecture::FC: {
      Var x = concat_cols(t, {condition, noise});
      for (std::size_t l = 0; l < kFcGeneratorWidths.size(); ++l)
        x = hidden_act(t, dense_layer(g, "g.fc" + std::to_string(l + 1), x));
      return dense_layer(g, "g.out", x);
    }
    case Architecture::CNN: {
      Var x = concat_cols(t, {condition, noise});
      x = cnn_block(g, "g.cnn.", x, c + 1);
      return bound_output(tag, t, dense_layer(g, "g.head", x));
    }
    case Architecture::LSTM: {
      StackState state;
      Var seq = to_time_major(t, condition, c);
      Var h = lstm_stack(g, "g.lstm.", seq, kLongConditionFrames, c, state);
      return bound_output(tag, t, dense_layer(g, "g.head", concat_cols(t, {h, noise})));
    }
    case Architecture::CNN_LSTM: {
      const Index batch = t.value(condition).rows();
      Var segs = split_segments(t, condition, c, kSegments);
      Var seg_noise = reshape_rows(t, noise, batch * kSegments);
      Var x = cnn_block(g, "g.cnn.", concat_cols(t, {segs, seg_noise}), c + 1);
      Var tokens = reshape_rows(t, x, batch);
      StackState state;
      Var h = lstm_stack(g, "g.lstm.", tokens, kSegments, cnn_block_output(kTargetFrames), state);
      return bound_output(tag, t, dense_layer(g, "g.head", h));
    }
  }
  throw UsageError("unknown architecture");
}

std::vector<Var> discriminate_logits(const ArchitectureTag& tag, ParamBinder& d, Var condition,
                                     const std::vector<Var>& candidates) {
  Tape& t = d.tape();
  const Index c = tag.channels();
  std::vector<Var> out;
  out.reserve(candidates.size());
  switch (tag.arch) {
    case Architecture::FC:
      for (Var cand : candidates) {
        Var x = cand;
        for (std::size_t l = 0; l < kFcDiscriminatorWidths.size(); ++l)
          x = hidden_act(t, dense_layer(d, "d.fc" + std::to_string(l + 1), x));
        out.push_back(dense_layer(d, "d.out", x));
      }
      return out;
    case Architecture::CNN:
      for (Var cand : candidates) {
        Var x = cnn_block(d, "d.cnn.", concat_time(t, condition, cand, c), c);
        out.push_back(dense_layer(d, "d.head", x));
      }
      return out;
    case Architecture::LSTM: {
      StackState prefix;
      lstm_stack(d, "d.lstm.", to_time_major(t, condition, c), kLongConditionFrames, c, prefix);
      for (Var cand : candidates) {
        StackState state = prefix;
        Var h = lstm_stack(d, "d.lstm.", to_time_major(t, cand, c), kTargetFrames, c, state);
        out.push_back(dense_layer(d, "d.head", h));
      }
      return out;
    }
    case Architecture::CNN_LSTM: {
      const Index batch = t.value(condition).rows();
      const Index token = cnn_block_output(kTargetFrames);
      Var x = cnn_block(d, "d.cnn.", split_segments(t, condition, c, kSegments), c);
      StackState prefix;
      lstm_stack(d, "d.lstm.", reshape_rows(t, x, batch), kSegments, token, prefix);
      for (Var cand : candidates) {
        StackState state = prefix;
        Var tok = cnn_block(d, "d.cnn.", cand, c);
        Var h = lstm_stack(d, "d.lstm.", tok, 1, token, state);
        out.push_back(dense_layer(d, "d.head", h));
      }
      return out;
    }
  }
  throw UsageError("unknown architecture");
}

std::vector<Var> discriminate(const ArchitectureTag& tag, ParamBinder& d, Var condition,
                              const std::vector<Var>& candidates) {
  auto out = discriminate_logits(tag, d, condition, candidates);
  for (Var& v : out) v = activate(d.tape(), v, Activation::Sigmoid);
  return out;
}

}  // namespace dagan
