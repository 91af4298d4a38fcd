#include "dagan/data.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

using namespace dagan;
namespace fs = std::filesystem;

namespace {

CorpusConfig small_config(std::uint64_t seed) {
  CorpusConfig c;
  c.seed = seed;
  c.train_min = 6;
  c.dev_min = 2;
  c.test_min = 2;
  return c;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("dagan_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Session flat_session(Index frames) {
  Session s;
  s.id = "s";
  s.signals = Mat::Zero(kChannelCount, frames);
  return s;
}

}  // namespace

TEST_CASE("generation is a pure function of the config") {
  const Corpus a = generate_corpus(small_config(7));
  const Corpus b = generate_corpus(small_config(7));
  REQUIRE(a.sessions.size() == b.sessions.size());
  for (std::size_t i = 0; i < a.sessions.size(); ++i) {
    CHECK(a.sessions[i].id == b.sessions[i].id);
    CHECK(a.sessions[i].signals == b.sessions[i].signals);
    CHECK(a.sessions[i].annotations.size() == b.sessions[i].annotations.size());
  }
  const Corpus c = generate_corpus(small_config(8));
  CHECK_FALSE(a.sessions[0].signals == c.sessions[0].signals);
}

TEST_CASE("same seed writes byte-identical files") {
  const fs::path d1 = scratch("det1"), d2 = scratch("det2");
  write_corpus(generate_corpus(small_config(3)), d1);
  write_corpus(generate_corpus(small_config(3)), d2);
  for (const auto& entry : fs::recursive_directory_iterator(d1)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), d1);
    CHECK(slurp(entry.path()) == slurp(d2 / rel));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("event_rate 0 yields no candidate annotations") {
  CorpusConfig cfg = small_config(5);
  cfg.event_rate = 0.0;
  for (const auto& s : generate_corpus(cfg).sessions)
    for (const auto& a : s.annotations) CHECK(a.set != EventSet::Candidate);
}

TEST_CASE("candidate count follows the configured rate") {
  CorpusConfig cfg;
  cfg.seed = 42;
  const Corpus c = generate_corpus(cfg);
  int candidates = 0;
  for (const auto* s : c.sessions_of(c.split.train))
    for (const auto& a : s->annotations) candidates += a.set == EventSet::Candidate;
  // Poisson with mean 30: three standard deviations.
  CHECK(std::abs(candidates - 30) <= 3.0 * std::sqrt(30.0));
}

TEST_CASE("corpus structure") {
  const Corpus c = generate_corpus(small_config(9));
  std::set<std::string> seen;
  for (const auto* list : {&c.split.train, &c.split.dev, &c.split.test}) {
    CHECK_FALSE(list->empty());
    for (const auto& id : *list) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == c.sessions.size());
  for (const auto& s : c.sessions) {
    CHECK(s.signals.rows() == kChannelCount);
    CHECK(s.signals.allFinite());
    for (const auto& a : s.annotations) {
      CHECK(a.start_s >= 0.0);
      CHECK(a.start_s < a.end_s);
      CHECK(a.end_s <= s.duration_s());
    }
  }
}

TEST_CASE("session and annotation files round-trip") {
  const fs::path dir = scratch("roundtrip");
  const Corpus c = generate_corpus(small_config(4));
  write_corpus(c, dir, "provenance line");
  const Corpus back = read_corpus(dir);
  REQUIRE(back.sessions.size() == c.sessions.size());
  for (std::size_t i = 0; i < c.sessions.size(); ++i) {
    const Session& a = c.sessions[i];
    const Session& b = back.session(a.id);
    CHECK(a.signals == b.signals);
    REQUIRE(a.annotations.size() == b.annotations.size());
    for (std::size_t k = 0; k < a.annotations.size(); ++k) {
      CHECK(a.annotations[k].start_s == b.annotations[k].start_s);
      CHECK(a.annotations[k].label == b.annotations[k].label);
      CHECK(a.annotations[k].set == b.annotations[k].set);
    }
  }
  CHECK(back.split.train == c.split.train);
  CHECK(slurp(dir / "split.json").find("provenance line") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("load_session rejects malformed files") {
  const fs::path dir = scratch("bad");
  fs::create_directories(dir);
  const std::string header = "frame,speed,steer_speed,steer_angle,throttle,brake,yaw,hr,br,eda\n";
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream(dir / name) << body;
    return dir / name;
  };
  CHECK_THROWS_AS(load_session(write("eight.csv", "frame,speed,steer_speed,steer_angle,throttle,brake,yaw,hr\n0,1,2,3,4,5,6,7\n")),
                  ParseError);
  CHECK_THROWS_AS(load_session(write("short_row.csv", header + "0,1,2,3,4,5,6,7,8,9\n1,1,2,3,4,5,6,7,8\n")), ParseError);
  CHECK_THROWS_AS(load_session(write("order.csv", header + "1,1,2,3,4,5,6,7,8,9\n0,1,2,3,4,5,6,7,8,9\n")), ParseError);
  try {
    load_session(write("nan.csv", header + "0,1,2,3,4,5,6,7,8,9\n1,1,2,3,nan,5,6,7,8,9\n"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  const Session ok = load_session(write("ok.csv", header + "0,1,2,3,4,5,6,7,8,9\n1,1,2,3,4,5,6,7,8,9\n"));
  CHECK(ok.id == "ok");
  CHECK(ok.frames() == 2);
  fs::remove_all(dir);
}

TEST_CASE("znormalize") {
  SUBCASE("hr = [1, 2, 3] uses the population std") {
    Session s = flat_session(3);
    s.signals.row(channel_index(Channel::Hr)) << 1, 2, 3;
    const Session z = znormalize(s);
    const double v = std::sqrt(1.5);
    CHECK(z.signals(channel_index(Channel::Hr), 0) == doctest::Approx(-v).epsilon(1e-12));
    CHECK(z.signals(channel_index(Channel::Hr), 1) == doctest::Approx(0.0));
    CHECK(z.signals(channel_index(Channel::Hr), 2) == doctest::Approx(v).epsilon(1e-12));
  }
  SUBCASE("constant physiology becomes zero") {
    Session s = flat_session(50);
    s.signals.row(channel_index(Channel::Eda)).setConstant(3.3);
    CHECK(znormalize(s).signals.row(channel_index(Channel::Eda)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("generated sessions") {
    for (const auto& s : generate_corpus(small_config(6)).sessions) {
      const Session z = znormalize(s);
      for (Index c = 0; c < kChannelCount; ++c) {
        const auto r = z.signals.row(c);
        if (is_physiological(c)) {
          const double mean = r.mean();
          const double sd = std::sqrt((r.array() - mean).square().mean());
          CHECK(std::abs(mean) < 1e-9);
          CHECK(std::abs(sd - 1.0) < 1e-9);
        } else {
          CHECK(r.cwiseAbs().maxCoeff() <= 1.0);
        }
      }
    }
  }
  SUBCASE("CAN channels map their physical range onto [-1, 1]") {
    Session s = flat_session(2);
    s.signals(channel_index(Channel::Speed), 0) = 60.0;
    s.signals(channel_index(Channel::Speed), 1) = 120.0;
    s.signals(channel_index(Channel::Brake), 1) = 9000.0;
    const Session z = znormalize(s);
    CHECK(z.signals(channel_index(Channel::Speed), 0) == doctest::Approx(0.0));
    CHECK(z.signals(channel_index(Channel::Speed), 1) == doctest::Approx(1.0));
    CHECK(z.signals(channel_index(Channel::Brake), 0) == doctest::Approx(-1.0));
    CHECK(z.signals(channel_index(Channel::Brake), 1) == 1.0);
  }
  SUBCASE("single frame is rejected") { CHECK_THROWS_AS(znormalize(flat_session(1)), DimensionError); }
}

TEST_CASE("make_window_pairs geometry") {
  auto s72 = std::make_shared<const Session>(flat_session(72 * kSampleRate));
  const auto p = make_window_pairs(s72, 60, 6, 6);
  REQUIRE(p.size() == 2);
  CHECK(p[0].condition_start == 0);
  CHECK(p[1].condition_start == 6 * kSampleRate);
  CHECK(p[0].condition_frames == 60 * kSampleRate);
  CHECK(p[0].target_frames == kTargetFrames);

  auto s66 = std::make_shared<const Session>(flat_session(66 * kSampleRate));
  CHECK(make_window_pairs(s66, 60, 6, 6).size() == 1);
  auto s65 = std::make_shared<const Session>(flat_session(65 * kSampleRate));
  CHECK(make_window_pairs(s65, 60, 6, 6).empty());

  // floor((T - 66) / hop) + 1 for several lengths and hops.
  for (int len : {66, 67, 80, 100})
    for (double hop : {1.0, 2.0, 6.0}) {
      auto s = std::make_shared<const Session>(flat_session(len * kSampleRate));
      CHECK(make_window_pairs(s, 60, 6, hop).size() == static_cast<std::size_t>(std::floor((len - 66) / hop)) + 1);
    }
}

TEST_CASE("window labels use any overlap with candidate over maneuver over normal") {
  Session s = flat_session(80 * kSampleRate);
  s.annotations = {{65.9, 70.0, "turn", EventSet::Maneuver}};
  auto p = make_window_pairs(std::make_shared<const Session>(s), 60, 6, 6);
  CHECK(p[0].label == EventSet::Maneuver);
  s.annotations.push_back({0.0, 60.1, "avoid pedestrian", EventSet::Candidate});
  p = make_window_pairs(std::make_shared<const Session>(s), 60, 6, 6);
  CHECK(p[0].label == EventSet::Candidate);
  CHECK(p[1].label == EventSet::Maneuver);
  CHECK(label_interval(s.annotations, 61.0, 62.0) == EventSet::Normal);
  CHECK(label_interval(s.annotations, 60.0, 60.2) == EventSet::Candidate);
  CHECK(label_interval({}, 0.0, 6.0) == EventSet::Normal);
}

TEST_CASE("window pairs never cross sessions") {
  const Corpus c = generate_corpus(small_config(2));
  for (const auto& p : split_pairs(c, c.split.train, 6, 1)) {
    CHECK(p.condition_start >= 0);
    CHECK(p.target_start() + p.target_frames <= p.session->frames());
  }
}
