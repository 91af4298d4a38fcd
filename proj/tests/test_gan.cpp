#include "dagan/gan.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace dagan;
namespace fs = std::filesystem;

namespace {

struct Fixture {
  Corpus corpus;
  std::vector<WindowPair> short_train, long_train, short_eval, long_eval;

  Fixture() {
    CorpusConfig c;
    c.seed = 21;
    c.train_min = 4;
    c.dev_min = 2;
    c.test_min = 2;
    c.event_rate = 2.0;
    corpus = generate_corpus(c);
    short_train = split_pairs(corpus, corpus.split.train, kShortConditionS, 3.0);
    long_train = split_pairs(corpus, corpus.split.train, kLongConditionS, 3.0);
    short_eval = evaluation_pairs(corpus, corpus.split.test);
    long_eval = short_eval;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

TrainConfig quick(int epochs, Index pairs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.pairs_per_epoch = pairs;
  c.dev_pairs = 16;
  c.seed = 5;
  return c;
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("dagan_gan_" + name); }

}  // namespace

TEST_CASE("anomaly metric identities") {
  CHECK(anomaly_metric(0.3, 0.3) == 0.0);
  CHECK(anomaly_metric(0.75, 0.25) == 0.5);
  CHECK(anomaly_metric(0.25, 0.75) == 0.5);
}

TEST_CASE("TrainConfig validation") {
  TrainConfig c;
  CHECK(c.epochs == 20);
  CHECK(c.lr == 1e-3);
  CHECK(c.stage_lstm_only == 10);
  CHECK(c.stage_joint == 10);
  CHECK_NOTHROW(c.validate());
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("disabling a step leaves that network bit-unchanged") {
  const auto& f = fixture();
  for (Architecture a : {Architecture::FC, Architecture::CNN}) {
    GanModel m = build_model({a, Modality::Both}, 2);
    const ParamSet d0 = m.discriminator, g0 = m.generator;
    TrainConfig c = quick(1, 32);
    c.update_discriminator = false;
    train(m, f.short_train, f.short_eval, c);
    CHECK(m.discriminator == d0);
    CHECK_FALSE(m.generator == g0);

    GanModel n = build_model({a, Modality::Both}, 2);
    c.update_discriminator = true;
    c.update_generator = false;
    train(n, f.short_train, f.short_eval, c);
    CHECK(n.generator == g0);
    CHECK_FALSE(n.discriminator == d0);
  }
}

TEST_CASE("training logs one finite record per epoch") {
  const auto& f = fixture();
  GanModel m = build_cnn(Modality::Can, 1);
  int calls = 0;
  const TrainLog log = train(m, f.short_train, f.short_eval, quick(3, 24), [&](const EpochRecord&) { ++calls; });
  REQUIRE(log.epochs.size() == 3);
  CHECK(calls == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(log.epochs[static_cast<std::size_t>(i)].epoch == i + 1);
    CHECK(std::isfinite(log.epochs[static_cast<std::size_t>(i)].g_loss));
    CHECK(std::isfinite(log.epochs[static_cast<std::size_t>(i)].d_loss));
    const double acc = log.epochs[static_cast<std::size_t>(i)].dev_d_acc;
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
}

TEST_CASE("a NaN parameter aborts training with epoch and batch") {
  const auto& f = fixture();
  GanModel m = build_cnn(Modality::Both, 1);
  m.discriminator.at("d.head.w").value(0, 0) = std::nan("");
  try {
    train(m, f.short_train, f.short_eval, quick(1, 16));
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch 1") != std::string::npos);
    CHECK(msg.find("batch 1") != std::string::npos);
  }
}

TEST_CASE("training and scoring are deterministic") {
  const auto& f = fixture();
  auto run = [&](int threads) {
    GanModel m = build_cnn(Modality::Both, 4);
    train(m, f.short_train, f.short_eval, quick(2, 32));
    ScoreConfig sc;
    sc.noise_seed = 3;
    sc.threads = threads;
    return std::pair{m, score(m, f.short_eval, sc)};
  };
  const auto [m1, s1] = run(1);
  const auto [m2, s2] = run(3);
  CHECK(m1.generator == m2.generator);
  CHECK(m1.discriminator == m2.discriminator);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    CHECK(s1[i].m_anomaly == s2[i].m_anomaly);
    CHECK(*s1[i].s_real == *s2[i].s_real);
  }
}

TEST_CASE("score records") {
  const auto& f = fixture();
  for (Architecture a : {Architecture::FC, Architecture::CNN, Architecture::LSTM}) {
    const GanModel m = build_model({a, Modality::Both}, 6);
    std::vector<WindowPair> eval(f.short_eval.begin(), f.short_eval.begin() + 20);
    const auto rec = score(m, eval);
    REQUIRE(rec.size() == eval.size());
    for (std::size_t i = 0; i < rec.size(); ++i) {
      CHECK(rec[i].session_id == eval[i].session->id);
      CHECK(rec[i].target_start_s == eval[i].target_start_s());
      CHECK(rec[i].set == eval[i].label);
      CHECK(*rec[i].s_real > 0.0);
      CHECK(*rec[i].s_real < 1.0);
      CHECK(*rec[i].s_fake > 0.0);
      CHECK(*rec[i].s_fake < 1.0);
      CHECK(rec[i].m_anomaly == std::abs(*rec[i].s_real - *rec[i].s_fake));
      CHECK(rec[i].m_anomaly < 1.0);
    }
    ScoreConfig other;
    other.noise_seed = 99;
    const auto again = score(m, eval);
    CHECK(again[3].m_anomaly == rec[3].m_anomaly);
    CHECK(score(m, eval, other)[3].s_real == rec[3].s_real);
  }
}

TEST_CASE("staged training freezes then releases the CNN blocks") {
  const auto& f = fixture();
  const GanModel cnn = build_cnn(Modality::Can, 1);
  const GanModel lstm = build_lstm(Modality::Can, 2);
  TrainConfig c = quick(1, 8);
  c.stage_lstm_only = 1;
  c.stage_joint = 1;

  GanModel imported = build_cnn_lstm(Modality::Can, c.seed);
  const auto ids = import_donors(imported, cnn, lstm);
  CHECK(imported.generator.at("g.cnn.conv1.w").value == cnn.generator.at("g.cnn.conv1.w").value);
  CHECK(imported.discriminator.at("d.cnn.conv4.w").value == cnn.discriminator.at("d.cnn.conv4.w").value);
  CHECK(imported.generator.at("g.lstm.l2.w_rec").value == lstm.generator.at("g.lstm.l2.w_rec").value);
  CHECK(imported.generator.at("g.head.w").value == lstm.generator.at("g.head.w").value.topRows(kLstmHidden));
  CHECK(std::find(ids.begin(), ids.end(), "g.lstm.l1.w_in") == ids.end());

  bool frozen_checked = false;
  TrainLog log;
  const GanModel out = train_staged(cnn, lstm, f.long_train, f.long_eval, c, log, [&](const GanModel& mid) {
    for (const auto* ps : {&mid.generator, &mid.discriminator})
      for (const auto& [id, p] : *ps)
        if (id.find(".cnn.") != std::string::npos) {
          const auto& donor = cnn.generator.contains(id) ? cnn.generator.at(id) : cnn.discriminator.at(id);
          CHECK(p.value == donor.value);
        }
    CHECK_FALSE(mid.generator.at("g.lstm.l2.w_rec").value == lstm.generator.at("g.lstm.l2.w_rec").value);
    frozen_checked = true;
  });
  CHECK(frozen_checked);
  CHECK_FALSE(out.generator.at("g.cnn.conv1.w").value == cnn.generator.at("g.cnn.conv1.w").value);
  CHECK_FALSE(out.discriminator.at("d.cnn.conv1.w").value == cnn.discriminator.at("d.cnn.conv1.w").value);
  REQUIRE(log.epochs.size() == 2);
  CHECK(log.epochs[0].phase == "lstm-only");
  CHECK(log.epochs[1].phase == "joint");
  CHECK(log.epochs[1].epoch == 2);

  TrainLog unused;
  CHECK_THROWS_AS(train_staged(cnn, build_lstm(Modality::Both, 2), f.long_train, f.long_eval, c, unused), UsageError);
}

TEST_CASE("model files round-trip") {
  const fs::path p = scratch("model.bin");
  for (Architecture a : {Architecture::FC, Architecture::CNN_LSTM}) {
    const GanModel m = build_model({a, Modality::Physio}, 77);
    save_model(m, p, {"command: test"});
    const GanModel back = load_model(p);
    CHECK(back.tag == m.tag);
    CHECK(back.seed == 77);
    CHECK(back.noise_dim == m.noise_dim);
    CHECK(back.generator == m.generator);
    CHECK(back.discriminator == m.discriminator);
  }
  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << "DAGAN-MODEL 1\narch cnn\n";
  }
  CHECK_THROWS_AS(load_model(p), ParseError);
  {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << "not a model";
  }
  CHECK_THROWS_AS(load_model(p), ParseError);

  save_model(build_model({Architecture::CNN, Modality::Can}, 5), p);
  std::string bytes;
  {
    std::ifstream is(p, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
  }
  auto rewrite_and_load = [&](const std::string& body) {
    {
      std::ofstream os(p, std::ios::binary | std::ios::trunc);
      os << body;
    }
    return load_model(p);
  };
  std::string renamed = bytes;
  renamed.replace(renamed.find("tensor d.head.b"), 15, "tensor d.tail.b");
  CHECK_THROWS_WITH_AS(rewrite_and_load(renamed), doctest::Contains("unknown tensor 'd.tail.b'"), ParseError);
  CHECK_THROWS_AS(rewrite_and_load(bytes.substr(0, bytes.size() / 2)), ParseError);
  std::string reshaped = bytes;
  reshaped.replace(reshaped.find("tensor d.head.b 2 1 1"), 21, "tensor d.head.b 2 1 2");
  CHECK_THROWS_AS(rewrite_and_load(reshaped), ParseError);
  fs::remove(p);
}

TEST_CASE("scores CSV round-trips and rejects schema violations") {
  const fs::path p = scratch("scores.csv");
  std::vector<ScoreRecord> rec(3);
  rec[0] = {"test_000", 60.0, 0.25, 0.5, 0.25, EventSet::Normal};
  rec[1] = {"test_000", 62.0, 0.1, 0.9, 0.8, EventSet::Candidate};
  rec[2] = {"test_001", 60.0, std::nullopt, std::nullopt, -3.5, EventSet::Maneuver};
  write_scores_csv(rec, p, {"command: x"});
  const auto back = read_scores_csv(p);
  REQUIRE(back.size() == 3);
  CHECK(back[1].m_anomaly == 0.8);
  CHECK(back[1].set == EventSet::Candidate);
  CHECK_FALSE(back[2].s_real.has_value());
  CHECK(back[2].m_anomaly == -3.5);

  auto expect_error = [&](const std::string& body, const std::string& needle) {
    std::ofstream(p, std::ios::trunc) << body;
    try {
      read_scores_csv(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  const std::string header = std::string(kScoresHeader) + "\n";
  expect_error("a,b,c\n", "header");
  expect_error(header + "s,60,0.1,0.2,0.1,normal\ns,62,0.1,0.2,oops,normal\n", "row 3");
  expect_error(header + "s,60,0.1,0.2,0.1,weird\n", "set");
  expect_error(header + "s,60,0.1,0.2\n", "fields");
  fs::remove(p);
}

TEST_CASE("train log format") {
  TrainLog log;
  log.epochs = {{1, 0.5, 1.25, 0.5, "donors"}, {2, 0.75, 1.0, 0.625, "joint"}};
  std::ostringstream os;
  write_train_log(log, os, {"seed: 1"});
  CHECK(os.str() == "# seed: 1\nepoch,g_loss,d_loss,dev_d_acc\n# phase donors\n1,0.5,1.25,0.5\n# phase joint\n2,0.75,1,0.625\n");
}
