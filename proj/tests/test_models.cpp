#include "dagan/models.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace dagan;

namespace {

std::vector<WindowPair> sample_pairs(double condition_s, std::size_t n) {
  Rng rng(17);
  std::normal_distribution<double> n01;
  auto s = std::make_shared<Session>();
  s->id = "m";
  s->signals.resize(kChannelCount, static_cast<Index>((condition_s + 20) * kSampleRate));
  for (Index i = 0; i < s->signals.size(); ++i) s->signals.data()[i] = 0.3 * n01(rng);
  auto pairs = make_window_pairs(s, condition_s, 6, 2);
  pairs.resize(n);
  return pairs;
}

constexpr Architecture kArchs[] = {Architecture::FC, Architecture::CNN, Architecture::LSTM, Architecture::CNN_LSTM};
constexpr Modality kModalities[] = {Modality::Physio, Modality::Can, Modality::Both};

}  // namespace

TEST_CASE("modality channel sets") {
  CHECK(ArchitectureTag{Architecture::CNN, Modality::Physio}.channels() == 3);
  CHECK(ArchitectureTag{Architecture::CNN, Modality::Can}.channels() == 6);
  CHECK(ArchitectureTag{Architecture::CNN, Modality::Both}.channels() == 9);
  CHECK(ArchitectureTag{Architecture::CNN, Modality::Physio}.physio_channels() == 3);
  CHECK(ArchitectureTag{Architecture::CNN, Modality::Can}.physio_channels() == 0);
  CHECK(parse_architecture("cnn-lstm") == Architecture::CNN_LSTM);
  CHECK(to_string(Architecture::CNN_LSTM) == "cnn-lstm");
  CHECK_THROWS_AS(parse_architecture("rnn"), UsageError);
  CHECK_THROWS_AS(parse_modality("video"), UsageError);
}

TEST_CASE("generator output matches the target shape and D stays inside (0, 1)") {
  for (Architecture a : kArchs)
    for (Modality m : kModalities) {
      const ArchitectureTag tag{a, m};
      CAPTURE(to_string(a));
      CAPTURE(to_string(m));
      GanModel model = build_model(tag, 3);
      const auto pairs = sample_pairs(tag.condition_s(), 3);
      std::vector<const WindowPair*> ptr;
      for (const auto& p : pairs) ptr.push_back(&p);
      const ModelInputs in = prepare_inputs(tag, ptr);
      CHECK(in.target.cols() == target_width(tag));
      Rng rng(1);
      Tape t;
      ParamBinder g(t, std::as_const(model.generator));
      ParamBinder d(t, std::as_const(model.discriminator));
      Var cond = t.constant(in.condition);
      Var fake = generate(tag, g, cond, t.constant(sample_noise(model, 3, rng)));
      CHECK(t.value(fake).rows() == in.target.rows());
      CHECK(t.value(fake).cols() == in.target.cols());
      auto scores = discriminate(tag, d, cond, {t.constant(in.target), fake});
      for (Var s : scores) {
        CHECK(t.value(s).rows() == 3);
        CHECK(t.value(s).cols() == 1);
        CHECK((t.value(s).array() > 0.0).all());
        CHECK((t.value(s).array() < 1.0).all());
      }
    }
}

TEST_CASE("same seed gives bit-identical initial parameters") {
  for (Architecture a : kArchs) {
    const GanModel x = build_model({a, Modality::Both}, 9);
    const GanModel y = build_model({a, Modality::Both}, 9);
    const GanModel z = build_model({a, Modality::Both}, 10);
    CHECK(x.generator == y.generator);
    CHECK(x.discriminator == y.discriminator);
    CHECK_FALSE(x.generator == z.generator);
  }
}

TEST_CASE("modality changes only input and output channel counts") {
  for (Architecture a : kArchs) {
    const GanModel phys = build_model({a, Modality::Physio}, 1);
    const GanModel both = build_model({a, Modality::Both}, 1);
    for (auto [p, b] : {std::pair{&phys.generator, &both.generator}, std::pair{&phys.discriminator, &both.discriminator}}) {
      REQUIRE(p->size() == b->size());
      auto ip = p->begin();
      for (auto ib = b->begin(); ib != b->end(); ++ib, ++ip) {
        CHECK(ip->first == ib->first);
        CHECK(ip->second.shape.size() == ib->second.shape.size());
      }
    }
  }
  const GanModel phys = build_model({Architecture::CNN, Modality::Physio}, 1);
  const GanModel both = build_model({Architecture::CNN, Modality::Both}, 1);
  CHECK(phys.generator.at("g.cnn.conv2.w").shape == both.generator.at("g.cnn.conv2.w").shape);
  CHECK(phys.generator.at("g.head.w").shape[1] == 3 * kTargetFrames);
  CHECK(both.generator.at("g.head.w").shape[1] == 9 * kTargetFrames);
}

TEST_CASE("layer geometry") {
  const GanModel cnn = build_cnn(Modality::Both, 1);
  const char* layers[] = {"conv1", "conv2", "conv3", "conv4"};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& w = cnn.generator.at(std::string("g.cnn.") + layers[i] + ".w");
    CHECK(w.shape[0] == kConvChannels[i]);
    CHECK(w.shape[2] == kConvKernels[i]);
  }
  CHECK(kConvChannels == std::array<Index, 4>{18, 18, 9, 1});
  CHECK(kConvKernels == std::array<Index, 4>{9, 3, 3, 3});

  const GanModel fc = build_fc(Modality::Both, 1);
  int d_hidden = 0;
  for (const auto& [id, p] : fc.discriminator)
    if (id.find(".w") != std::string::npos && id != "d.out.w") {
      ++d_hidden;
      CHECK(p.shape[1] == 51);
    }
  CHECK(d_hidden == 5);
  CHECK(fc.generator.at("g.out.w").shape[1] == 51);
  CHECK(fc.generator.at("g.fc1.w").shape[0] == 51 + kNoiseDim);

  const GanModel lstm = build_lstm(Modality::Both, 1);
  CHECK(lstm.generator.at("g.lstm.l1.w_rec").shape == std::vector<Index>{27, 108});
  CHECK(lstm.generator.at("g.lstm.l2.w_rec").shape == std::vector<Index>{27, 108});
  CHECK_FALSE(lstm.generator.contains("g.lstm.l3.w_rec"));
  CHECK(lstm.generator.at("g.head.w").shape[0] == kLstmHidden + kNoiseDim);

  const GanModel both = build_cnn_lstm(Modality::Both, 1);
  CHECK(both.generator.at("g.lstm.l1.w_in").shape[0] == cnn_block_output(kTargetFrames));
  CHECK(both.noise_dim == kSegments * kTargetFrames);
  CHECK(cnn.noise_dim == kTargetFrames);
}

TEST_CASE("initialization: Glorot bounds, zero biases, forget-gate bias one") {
  const GanModel m = build_lstm(Modality::Can, 4);
  for (const auto& [id, p] : m.generator) {
    if (id.ends_with(".b")) {
      if (id.find("lstm") != std::string::npos) {
        CHECK(p.value.leftCols(kLstmHidden).cwiseAbs().maxCoeff() == 0.0);
        CHECK((p.value.middleCols(kLstmHidden, kLstmHidden).array() == 1.0).all());
        CHECK(p.value.rightCols(2 * kLstmHidden).cwiseAbs().maxCoeff() == 0.0);
      } else {
        CHECK(p.value.cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
  const GanModel c = build_cnn(Modality::Both, 4);
  const auto& w = c.generator.at("g.cnn.conv1.w");
  const double fan_in = static_cast<double>(w.shape[1] * w.shape[2]);
  const double fan_out = static_cast<double>(w.shape[0] * w.shape[2]);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  CHECK(w.value.cwiseAbs().maxCoeff() <= a);
  CHECK(w.value.cwiseAbs().maxCoeff() > 0.5 * a);
}

TEST_CASE("prepare_inputs rejects windows shorter than the model context") {
  const auto pairs = sample_pairs(6, 1);
  std::vector<const WindowPair*> ptr{&pairs[0]};
  CHECK_THROWS_AS(prepare_inputs({Architecture::LSTM, Modality::Both}, ptr), DimensionError);
}
