#include "dagan/pipeline.hpp"

#include <iostream>

namespace dagan {

const std::vector<std::string>& split_ids(const Corpus& corpus, std::string_view split) {
  if (split == "train") return corpus.split.train;
  if (split == "dev") return corpus.split.dev;
  if (split == "test") return corpus.split.test;
  throw UsageError("unknown split '" + std::string(split) + "' (train, dev, test)");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Index default_pairs_per_epoch(Architecture arch) {
  switch (arch) {
    case Architecture::FC:
    case Architecture::CNN: return 0;
    case Architecture::LSTM: return 256;
    case Architecture::CNN_LSTM: return 512;
  }
  return 0;
}

std::vector<WindowPair> training_pairs(const Corpus& corpus, const ArchitectureTag& tag) {
  return split_pairs(corpus, corpus.split.train, tag.condition_s(), kTrainHopS);
}

namespace {

void append_phase(TrainLog& log, const TrainLog& part, const std::string& phase, const EpochCallback& on_epoch) {
  const int offset = static_cast<int>(log.epochs.size());
  for (EpochRecord r : part.epochs) {
    r.epoch += offset;
    r.phase = phase;
    log.epochs.push_back(r);
    if (on_epoch) on_epoch(r);
  }
}

GanModel train_donor(const Corpus& corpus, const std::vector<WindowPair>& dev, Architecture arch,
                     Modality modality, const TrainConfig& config, TrainLog& log, const EpochCallback& on_epoch) {
  const ArchitectureTag tag{arch, modality};
  TrainConfig c = config;
  c.seed = derive_seed(config.seed, arch == Architecture::CNN ? 1 : 2);
  c.pairs_per_epoch = default_pairs_per_epoch(arch);
  GanModel m = build_model(tag, c.seed);
  TrainLog part = train(m, training_pairs(corpus, tag), dev, c);
  append_phase(log, part, "donors", on_epoch);
  return m;
}

}  // namespace

TrainOutcome train_model(const Corpus& corpus, const ArchitectureTag& tag, const TrainConfig& config, Donors donors,
                         const EpochCallback& on_epoch) {
  config.validate();
  const auto dev = evaluation_pairs(corpus, corpus.split.dev);
  if (tag.arch != Architecture::CNN_LSTM) {
    TrainOutcome out{build_model(tag, config.seed), {}};
    out.log = train(out.model, training_pairs(corpus, tag), dev, config, on_epoch);
    return out;
  }

  TrainLog log;
  std::optional<GanModel> cnn, lstm;
  if (!donors.cnn) {
    cnn = train_donor(corpus, dev, Architecture::CNN, tag.modality, config, log, on_epoch);
    donors.cnn = &*cnn;
  }
  if (!donors.lstm) {
    lstm = train_donor(corpus, dev, Architecture::LSTM, tag.modality, config, log, on_epoch);
    donors.lstm = &*lstm;
  }
  if (donors.cnn->tag.arch != Architecture::CNN) throw UsageError("--from-cnn must name a CNN model");
  if (donors.lstm->tag.arch != Architecture::LSTM) throw UsageError("--from-lstm must name an LSTM model");
  if (donors.cnn->tag.modality != tag.modality || donors.lstm->tag.modality != tag.modality)
    throw UsageError("donor modality differs from the requested " + std::string(to_string(tag.modality)));

  GanModel model = train_staged(*donors.cnn, *donors.lstm, training_pairs(corpus, tag), dev, config, log, {}, on_epoch);
  return {std::move(model), std::move(log)};
}

std::vector<ScoreRecord> score_split(const GanModel& model, const Corpus& corpus, std::string_view split,
                                     const ScoreConfig& config) {
  return score(model, evaluation_pairs(corpus, split_ids(corpus, split)), config);
}

std::string_view to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::Fixed: return "fixed";
    case BaselineMethod::Pca: return "pca";
    case BaselineMethod::Gmm: return "gmm";
    case BaselineMethod::BeatGan: return "beatgan";
  }
  return "?";
}

BaselineMethod parse_baseline_method(std::string_view s) {
  if (s == "fixed") return BaselineMethod::Fixed;
  if (s == "pca") return BaselineMethod::Pca;
  if (s == "gmm") return BaselineMethod::Gmm;
  if (s == "beatgan") return BaselineMethod::BeatGan;
  throw UsageError("unknown baseline '" + std::string(s) + "' (fixed, pca, gmm, beatgan)");
}

Mat baseline_features(std::span<const WindowPair> pairs) {
  const Index frames = static_cast<Index>(kBaselineFeatureS * kSampleRate);
  Mat out(static_cast<Index>(pairs.size()), kFeatureDim);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const WindowPair& p = pairs[i];
    const Index start = p.target_start() + p.target_frames - frames;
    if (start < 0) throw DimensionError("window pair too short for baseline features");
    out.row(static_cast<Index>(i)) = extract_features(p.session->signals.middleCols(start, frames)).transpose();
  }
  return out;
}

namespace {

std::vector<ScoreRecord> records_for(const std::vector<WindowPair>& pairs, const Vec& scores) {
  std::vector<ScoreRecord> out(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out[i].session_id = pairs[i].session->id;
    out[i].target_start_s = pairs[i].target_start_s();
    out[i].m_anomaly = scores(static_cast<Index>(i));
    out[i].set = pairs[i].label;
  }
  return out;
}

std::vector<const WindowPair*> pointers(const std::vector<WindowPair>& pairs) {
  std::vector<const WindowPair*> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(&p);
  return out;
}

void warn_dropped(const Standardizer& z) {
  if (z.dropped.empty()) return;
  std::clog << "warning: dropping " << z.dropped.size() << " zero-variance feature dimension(s):";
  for (Index j : z.dropped) std::clog << ' ' << j;
  std::clog << '\n';
}

}  // namespace

std::vector<ScoreRecord> run_baseline(const Corpus& corpus, BaselineMethod method, const BaselineConfig& config,
                                      std::string_view split) {
  const auto& ids = split_ids(corpus, split);
  switch (method) {
    case BaselineMethod::Fixed: {
      config.fixed.validate();
      const auto pairs = evaluation_pairs(corpus, ids, false);
      Vec s(static_cast<Index>(pairs.size()));
      for (std::size_t i = 0; i < pairs.size(); ++i)
        s(static_cast<Index>(i)) = fixed_threshold_score(can_window_stats(pairs[i].target(), config.fixed), config.fixed);
      return records_for(pairs, s);
    }
    case BaselineMethod::Pca:
    case BaselineMethod::Gmm: {
      const Mat train = baseline_features(split_pairs(corpus, corpus.split.train, kShortConditionS, kTrainHopS));
      const auto pairs = evaluation_pairs(corpus, ids);
      const Mat test = baseline_features(pairs);
      const Standardizer z = Standardizer::fit(train);
      warn_dropped(z);
      if (method == BaselineMethod::Pca) return records_for(pairs, pca_score(pca_fit(train), test));
      GmmConfig g = config.gmm;
      g.seed = config.seed;
      return records_for(pairs, gmm_score(gmm_fit(z.apply(train), g), z.apply(test)));
    }
    case BaselineMethod::BeatGan: {
      const auto train_pairs = split_pairs(corpus, corpus.split.train, kShortConditionS, kTrainHopS);
      BeatGan model = build_beatgan(config.seed);
      BeatGanConfig b = config.beatgan;
      b.seed = config.seed;
      beatgan_train(model, beatgan_windows(pointers(train_pairs)), b);
      const auto pairs = evaluation_pairs(corpus, ids);
      return records_for(pairs, beatgan_score(model, beatgan_windows(pointers(pairs))));
    }
  }
  throw UsageError("unknown baseline");
}

}  // namespace dagan
