#include "dagan/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace dagan {

namespace fs = std::filesystem;

std::string_view to_string(EventSet s) {
  switch (s) {
    case EventSet::Normal: return "normal";
    case EventSet::Maneuver: return "maneuver";
    case EventSet::Candidate: return "candidate";
  }
  return "normal";
}

EventSet parse_event_set(std::string_view s) {
  if (s == "normal") return EventSet::Normal;
  if (s == "maneuver") return EventSet::Maneuver;
  if (s == "candidate") return EventSet::Candidate;
  throw ParseError("unknown annotation set '" + std::string(s) + "'");
}

const Session& Corpus::session(const std::string& id) const {
  for (const auto& s : sessions)
    if (s.id == id) return s;
  throw UsageError("corpus has no session '" + id + "'");
}

std::vector<const Session*> Corpus::sessions_of(const std::vector<std::string>& ids) const {
  std::vector<const Session*> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(&session(id));
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

namespace {

constexpr double kDt = 1.0 / kSampleRate;

constexpr std::array<std::string_view, 7> kCandidateLabels = {
    "Avoid on-road pedestrian", "Avoid pedestrian near ego-lane", "Avoid on-road bicyclist",
    "Avoid bicyclist near ego-lane", "Avoid on-road motorcyclist", "Avoid parked vehicle",
    "Traffic rule violation"};

enum class Maneuver { LeftTurn, RightTurn, IntersectionPassing };

struct ScheduledEvent {
  double t0;
  bool candidate;
  Maneuver maneuver;
};

// Smooth 0 -> 1 -> 0 envelope over [0, width]: raised cosine.
double bump(double t, double width) {
  if (t <= 0.0 || t >= width) return 0.0;
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / width));
}

// Rise over `rise` seconds then exponential decay with time constant `tau`.
double rise_decay(double t, double rise, double tau) {
  if (t <= 0.0) return 0.0;
  if (t < rise) return 0.5 * (1.0 - std::cos(std::numbers::pi * t / rise));
  return std::exp(-(t - rise) / tau);
}

// Trapezoid: ramp up over `ramp`, hold `hold`, ramp down over `ramp`.
double trapezoid(double t, double ramp, double hold) {
  if (t <= 0.0) return 0.0;
  if (t < ramp) return t / ramp;
  if (t < ramp + hold) return 1.0;
  if (t < 2.0 * ramp + hold) return 1.0 - (t - ramp - hold) / ramp;
  return 0.0;
}

std::vector<double> poisson_times(Rng& rng, double rate_per_min, double t_begin, double t_end) {
  std::vector<double> times;
  if (rate_per_min <= 0.0 || t_end <= t_begin) return times;
  std::exponential_distribution<double> gap(rate_per_min / 60.0);
  for (double t = t_begin + gap(rng); t < t_end; t += gap(rng)) times.push_back(t);
  return times;
}

// Randomized parameters of one scheduled event. Speed effects enter as an
// acceleration push so the speed integrator stays coherent.
struct EventShape {
  double duration_s;  // annotated span starting at t0
  // candidate
  double brake_peak = 0, brake_hold = 0, decel = 0;
  double jerk_amp = 0, jerk_freq = 0;
  double physio_delay = 0, br_dip = 0, hr_rise = 0, eda_rise = 0;
  // maneuver
  double turn_angle = 0, turn_hold = 0, slow_to = 0, stop_brake = 0;
};

struct SessionSynth {
  Rng rng;
  Index frames;
  std::normal_distribution<double> n01{0.0, 1.0};
  std::uniform_real_distribution<double> u01{0.0, 1.0};

  double uniform(double lo, double hi) { return lo + (hi - lo) * u01(rng); }
  double normal() { return n01(rng); }
};

Session synthesize_session(const std::string& id, Index frames, std::uint64_t seed,
                           double event_rate, double maneuver_rate) {
  SessionSynth s{Rng(seed), frames};
  const double duration = static_cast<double>(frames) / kSampleRate;

  // Event schedule. Candidates first; maneuvers that would collide with a
  // candidate or another maneuver are dropped.
  std::vector<ScheduledEvent> events;
  for (double t : poisson_times(s.rng, event_rate, 3.0, duration - 10.0))
    events.push_back({t, true, Maneuver::LeftTurn});
  const std::size_t n_candidates = events.size();
  for (double t : poisson_times(s.rng, maneuver_rate, 3.0, duration - 14.0)) {
    bool clash = false;
    for (std::size_t i = 0; i < n_candidates; ++i)
      if (std::abs(events[i].t0 - t) < 14.0) clash = true;
    for (std::size_t i = n_candidates; i < events.size(); ++i)
      if (std::abs(events[i].t0 - t) < 12.0) clash = true;
    const auto kind = static_cast<Maneuver>(std::min<int>(2, static_cast<int>(s.u01(s.rng) * 3)));
    if (!clash) events.push_back({t, false, kind});
  }
  std::sort(events.begin(), events.end(),
            [](const ScheduledEvent& a, const ScheduledEvent& b) { return a.t0 < b.t0; });

  std::vector<EventShape> shapes;
  Session session;
  session.id = id;
  for (const auto& ev : events) {
    EventShape e{};
    if (ev.candidate) {
      e.brake_peak = s.uniform(2500.0, 4500.0);
      e.brake_hold = s.uniform(0.8, 1.5);
      e.decel = s.uniform(10.0, 18.0);
      e.jerk_amp = s.uniform(0.25, 0.35) * (s.u01(s.rng) < 0.5 ? -1.0 : 1.0);
      e.jerk_freq = s.uniform(0.9, 1.2);
      e.physio_delay = s.uniform(0.5, 2.0);
      e.br_dip = s.uniform(4.0, 6.0);
      e.hr_rise = s.uniform(12.0, 20.0);
      e.eda_rise = s.uniform(1.0, 2.0);
      e.duration_s = 8.0;
      const auto label = kCandidateLabels[std::min<std::size_t>(
          kCandidateLabels.size() - 1, static_cast<std::size_t>(s.u01(s.rng) * kCandidateLabels.size()))];
      session.annotations.push_back({ev.t0, std::min(duration, ev.t0 + e.duration_s),
                                     std::string(label), EventSet::Candidate});
    } else {
      std::string label;
      if (ev.maneuver == Maneuver::IntersectionPassing) {
        e.stop_brake = s.uniform(800.0, 1500.0);
        e.slow_to = s.uniform(0.0, 8.0);
        e.duration_s = 10.0;
        label = "Intersection passing";
      } else {
        const double sign = ev.maneuver == Maneuver::LeftTurn ? 1.0 : -1.0;
        e.turn_angle = sign * s.uniform(2.5, 4.0);
        e.turn_hold = s.uniform(1.5, 3.0);
        e.slow_to = s.uniform(12.0, 20.0);
        e.duration_s = 4.0 + 2.0 * 2.0 + e.turn_hold;
        label = ev.maneuver == Maneuver::LeftTurn ? "Left turn" : "Right turn";
      }
      session.annotations.push_back(
          {ev.t0, std::min(duration, ev.t0 + e.duration_s), label, EventSet::Maneuver});
    }
    shapes.push_back(e);
  }

  // Baseline processes.
  Mat sig = Mat::Zero(kChannelCount, frames);
  double v = s.uniform(30.0, 50.0);
  double v_ref = v;
  double next_ref_change = s.uniform(20.0, 40.0);
  double steer_wander = 0.0;
  double hr_drift = 0.0, br_drift = 0.0, eda_drift = 0.0;
  double accel_noise = 0.0, throttle_noise = 0.0;
  const double hr_base = s.uniform(66.0, 80.0);
  const double br_base = s.uniform(13.0, 17.0);
  const double eda_base = s.uniform(2.0, 6.0);
  double breath_phase = 0.0;
  double prev_angle = 0.0;

  for (Index f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) * kDt;
    if (t >= next_ref_change) {
      v_ref = std::clamp(v_ref + s.uniform(-12.0, 12.0), 20.0, 65.0);
      next_ref_change = t + s.uniform(20.0, 40.0);
    }

    // Event contributions at time t.
    double target_cap = 1e9, brake_extra = 0.0, push = 0.0, angle_extra = 0.0;
    double br_extra = 0.0, hr_extra = 0.0, eda_extra = 0.0;
    for (std::size_t k = 0; k < events.size(); ++k) {
      const double dt = t - events[k].t0;
      if (dt < -6.0 || dt > 60.0) continue;
      const EventShape& e = shapes[k];
      if (events[k].candidate) {
        const double brake_env = trapezoid(dt, 0.3, e.brake_hold);
        brake_extra += e.brake_peak * brake_env;
        push -= e.decel * brake_env;
        if (dt > 0.0 && dt < 1.2) angle_extra += e.jerk_amp * std::sin(2.0 * std::numbers::pi * e.jerk_freq * dt);
        const double p = dt - e.physio_delay;
        br_extra -= e.br_dip * bump(p, 4.0);
        hr_extra += e.hr_rise * rise_decay(p - 1.0, 2.0, 8.0);
        eda_extra += e.eda_rise * rise_decay(p - 1.0, 2.0, 10.0);
      } else if (e.stop_brake > 0.0) {
        // Intersection: brake to a crawl, wait, go.
        const double env = trapezoid(dt, 1.0, 2.5);
        brake_extra += e.stop_brake * env;
        if (dt > 0.0 && dt < 7.0) target_cap = std::min(target_cap, e.slow_to);
        hr_extra += 3.0 * bump(dt, 8.0);
      } else {
        // Turn: slow down ahead, steer through, straighten.
        if (dt > -3.0 && dt < e.duration_s - 2.0) target_cap = std::min(target_cap, e.slow_to);
        angle_extra += e.turn_angle * trapezoid(dt - 2.0, 2.0, e.turn_hold);
        hr_extra += 2.0 * bump(dt, e.duration_s);
      }
    }

    // Speed: first-order tracking plus AR(1) acceleration noise.
    accel_noise = 0.97 * accel_noise + 0.25 * s.normal();
    const double target = std::min(v_ref, target_cap);
    const double accel = 0.6 * (target - v) + accel_noise + push;  // km/h per s
    v = std::clamp(v + accel * kDt, 0.0, 120.0);

    throttle_noise = 0.95 * throttle_noise + 0.3 * s.normal();
    const double throttle =
        std::clamp(4.0 + 0.25 * v + 3.0 * std::max(accel, 0.0) + throttle_noise, 0.0, 90.0);
    const double brake = std::clamp(120.0 * std::max(-accel - 2.0, 0.0) + brake_extra, 0.0, 5000.0);

    steer_wander = 0.995 * steer_wander + 0.004 * s.normal();
    const double angle = std::clamp(steer_wander + angle_extra + 0.002 * s.normal(), -7.0, 7.0);
    const double steer_speed = f == 0 ? 0.0 : std::clamp((angle - prev_angle) / kDt, -2.0, 2.0);
    prev_angle = angle;
    const double yaw = std::clamp((v / 3.6) * std::tan(angle / 15.0) / 2.7, -1.0, 1.0);

    hr_drift = 0.999 * hr_drift + 0.12 * s.normal();
    br_drift = 0.999 * br_drift + 0.04 * s.normal();
    eda_drift = 0.9995 * eda_drift + 0.006 * s.normal();
    const double br = std::max(4.0, br_base + br_drift + br_extra + 0.2 * s.normal());
    breath_phase += 2.0 * std::numbers::pi * (br / 60.0) * kDt;
    const double hr = hr_base + hr_drift + hr_extra + 1.0 * std::sin(breath_phase) + 0.5 * s.normal();
    const double eda = std::max(0.1, eda_base + eda_drift + eda_extra + 0.02 * s.normal());

    sig(channel_index(Channel::Speed), f) = v;
    sig(channel_index(Channel::SteerSpeed), f) = steer_speed;
    sig(channel_index(Channel::SteerAngle), f) = angle;
    sig(channel_index(Channel::Throttle), f) = throttle;
    sig(channel_index(Channel::Brake), f) = brake;
    sig(channel_index(Channel::Yaw), f) = yaw;
    sig(channel_index(Channel::Hr), f) = hr;
    sig(channel_index(Channel::Br), f) = br;
    sig(channel_index(Channel::Eda), f) = eda;
  }
  session.signals = std::move(sig);
  return session;
}

void add_split(Corpus& corpus, std::vector<std::string>& ids, const std::string& prefix,
               double minutes, const CorpusConfig& config, Rng& seeder) {
  const Index total = static_cast<Index>(std::llround(minutes * 60.0 * kSampleRate));
  const Index chunk = static_cast<Index>(std::llround(config.session_min * 60.0 * kSampleRate));
  Index done = 0;
  int n = 0;
  while (done < total) {
    const Index frames = std::min(chunk, total - done);
    std::ostringstream id;
    id << prefix << '_' << std::setw(3) << std::setfill('0') << n++;
    corpus.sessions.push_back(
        synthesize_session(id.str(), frames, seeder(), config.event_rate, config.maneuver_rate));
    ids.push_back(id.str());
    done += frames;
  }
}

}  // namespace

Corpus generate_corpus(const CorpusConfig& config) {
  if (!(config.train_min > 0 && config.dev_min > 0 && config.test_min > 0))
    throw UsageError("split minutes must be positive");
  if (!(config.session_min > 0)) throw UsageError("session length must be positive");
  if (config.event_rate < 0 || config.maneuver_rate < 0) throw UsageError("event rates must be >= 0");
  Corpus corpus;
  Rng seeder(config.seed);
  add_split(corpus, corpus.split.train, "train", config.train_min, config, seeder);
  add_split(corpus, corpus.split.dev, "dev", config.dev_min, config, seeder);
  add_split(corpus, corpus.split.test, "test", config.test_min, config, seeder);
  return corpus;
}

// ---------------------------------------------------------------------------
// CSV I/O
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kSessionHeader = "frame,speed,steer_speed,steer_angle,throttle,brake,yaw,hr,br,eda";
constexpr std::string_view kAnnotationHeader = "start_s,end_s,label,set";

void append_double(std::string& out, double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

double parse_double(std::string_view cell, const std::string& where) {
  double x = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw ParseError(where + ": non-numeric cell '" + std::string(cell) + "'");
  if (!std::isfinite(x)) throw ParseError(where + ": non-finite value '" + std::string(cell) + "'");
  return x;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

void write_session_csv(const Session& session, const fs::path& path) {
  std::string out;
  out.reserve(static_cast<std::size_t>(session.frames()) * 120);
  out.append(kSessionHeader);
  out.push_back('\n');
  for (Index f = 0; f < session.frames(); ++f) {
    out.append(std::to_string(f));
    for (Index c = 0; c < kChannelCount; ++c) {
      out.push_back(',');
      append_double(out, session.signals(c, f));
    }
    out.push_back('\n');
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << out;
}

Session load_session(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open session file " + path.string());
  std::string line;
  if (!std::getline(is, line) || strip_cr(line) != kSessionHeader)
    throw ParseError(path.string() + ": header must be exactly '" + std::string(kSessionHeader) + "'");
  std::vector<double> values;
  Index row = 0;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row + 1);
    auto cells = split_csv(line);
    if (static_cast<Index>(cells.size()) != kChannelCount + 1)
      throw ParseError(where + ": expected " + std::to_string(kChannelCount + 1) + " columns, got " +
                       std::to_string(cells.size()));
    const double frame = parse_double(cells[0], where);
    if (frame != static_cast<double>(row))
      throw ParseError(where + ": frame index " + std::string(cells[0]) + " is not monotone (expected " +
                       std::to_string(row) + ")");
    for (Index c = 0; c < kChannelCount; ++c) values.push_back(parse_double(cells[c + 1], where));
    ++row;
  }
  Session s;
  s.id = path.stem().string();
  s.signals = Eigen::Map<const MatrixR<double>>(values.data(), row, kChannelCount).transpose();
  return s;
}

void write_annotations_csv(const std::vector<Annotation>& annotations, const fs::path& path) {
  std::string out(kAnnotationHeader);
  out.push_back('\n');
  for (const auto& a : annotations) {
    append_double(out, a.start_s);
    out.push_back(',');
    append_double(out, a.end_s);
    out.push_back(',');
    out.append(a.label);
    out.push_back(',');
    out.append(to_string(a.set));
    out.push_back('\n');
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << out;
}

std::vector<Annotation> load_annotations(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open annotation file " + path.string());
  std::string line;
  if (!std::getline(is, line) || strip_cr(line) != kAnnotationHeader)
    throw ParseError(path.string() + ": header must be exactly '" + std::string(kAnnotationHeader) + "'");
  std::vector<Annotation> out;
  int row = 0;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    ++row;
    if (line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    auto cells = split_csv(line);
    if (cells.size() != 4) throw ParseError(where + ": expected 4 columns");
    Annotation a;
    a.start_s = parse_double(cells[0], where);
    a.end_s = parse_double(cells[1], where);
    a.label = std::string(cells[2]);
    a.set = parse_event_set(cells[3]);
    if (!(a.start_s >= 0.0 && a.start_s < a.end_s))
      throw ParseError(where + ": annotation interval must satisfy 0 <= start < end");
    out.push_back(std::move(a));
  }
  return out;
}

void write_corpus(const Corpus& corpus, const fs::path& dir, const std::string& provenance) {
  fs::create_directories(dir / "sessions");
  fs::create_directories(dir / "annotations");
  for (const auto& s : corpus.sessions) {
    write_session_csv(s, dir / "sessions" / (s.id + ".csv"));
    write_annotations_csv(s.annotations, dir / "annotations" / (s.id + ".csv"));
  }
  nlohmann::ordered_json j;
  j["train"] = corpus.split.train;
  j["dev"] = corpus.split.dev;
  j["test"] = corpus.split.test;
  if (!provenance.empty()) j["provenance"] = provenance;
  std::ofstream os(dir / "split.json", std::ios::binary);
  os << j.dump(2) << '\n';
}

Corpus read_corpus(const fs::path& dir) {
  const fs::path split_path = dir / "split.json";
  std::ifstream is(split_path);
  if (!is) throw ParseError("missing " + split_path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(split_path.string() + ": " + e.what());
  }
  Corpus corpus;
  auto ids = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array())
      throw ParseError(split_path.string() + ": missing '" + key + "' list");
    return j[key].get<std::vector<std::string>>();
  };
  corpus.split.train = ids("train");
  corpus.split.dev = ids("dev");
  corpus.split.test = ids("test");
  for (const auto* list : {&corpus.split.train, &corpus.split.dev, &corpus.split.test})
    for (const auto& id : *list) {
      Session s = load_session(dir / "sessions" / (id + ".csv"));
      s.annotations = load_annotations(dir / "annotations" / (id + ".csv"));
      for (const auto& a : s.annotations)
        if (a.end_s > s.duration_s() + 1e-9)
          throw ParseError("annotation of " + id + " ends after the session");
      corpus.sessions.push_back(std::move(s));
    }
  return corpus;
}

// ---------------------------------------------------------------------------
// Normalization and windowing
// ---------------------------------------------------------------------------

Session znormalize(const Session& session) {
  if (session.frames() < 2) throw DimensionError("znormalize needs at least 2 frames");
  Session out = session;
  for (Index c = 0; c < kChannelCount; ++c) {
    auto row = out.signals.row(c);
    if (is_physiological(c)) {
      const double mean = row.mean();
      const double var = (row.array() - mean).square().mean();
      const double sd = std::sqrt(var);
      if (sd < 1e-8) {
        row.setZero();
      } else {
        row = (row.array() - mean) / sd;
      }
    } else {
      const auto& r = kCanRanges[static_cast<std::size_t>(c)];
      row = ((row.array() - r.lo) * (2.0 / r.span()) - 1.0).cwiseMax(-1.0).cwiseMin(1.0);
    }
  }
  return out;
}

EventSet label_interval(const std::vector<Annotation>& annotations, double start_s, double end_s) {
  EventSet best = EventSet::Normal;
  for (const auto& a : annotations) {
    if (std::max(a.start_s, start_s) < std::min(a.end_s, end_s)) {
      if (a.set == EventSet::Candidate) return EventSet::Candidate;
      if (a.set == EventSet::Maneuver) best = EventSet::Maneuver;
    }
  }
  return best;
}

std::vector<WindowPair> make_window_pairs(std::shared_ptr<const Session> session, double condition_s,
                                          double target_s, double hop_s) {
  if (!(hop_s > 0.0)) throw UsageError("hop must be positive");
  const Index cond = static_cast<Index>(std::llround(condition_s * kSampleRate));
  const Index target = static_cast<Index>(std::llround(target_s * kSampleRate));
  const Index hop = static_cast<Index>(std::llround(hop_s * kSampleRate));
  std::vector<WindowPair> pairs;
  if (session->frames() < cond + target) return pairs;
  const Index count = (session->frames() - cond - target) / hop + 1;
  pairs.reserve(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) {
    WindowPair p;
    p.session = session;
    p.condition_start = i * hop;
    p.condition_frames = cond;
    p.target_frames = target;
    const double ts = p.target_start_s();
    p.label = label_interval(session->annotations, ts, ts + target_s);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<WindowPair> split_pairs(const Corpus& corpus, const std::vector<std::string>& ids,
                                    double condition_s, double hop_s, bool normalize) {
  std::vector<WindowPair> out;
  for (const Session* s : corpus.sessions_of(ids)) {
    auto shared = std::make_shared<const Session>(normalize ? znormalize(*s) : *s);
    auto pairs = make_window_pairs(std::move(shared), condition_s, static_cast<double>(kTargetFrames) / kSampleRate, hop_s);
    out.insert(out.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
  }
  return out;
}

}  // namespace dagan
