#include "dagan/gan.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>
#include <mutex>
#include <utility>

namespace dagan {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs <= 0) throw UsageError("epochs must be > 0");
  if (batch_size <= 0) throw UsageError("batch_size must be > 0");
  if (!(lr > 0.0)) throw UsageError("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw UsageError("beta1 must lie in [0, 1)");
  if (!(g_lr_ratio > 0.0) || !(staged_g_lr_ratio > 0.0) || !(joint_lr_ratio > 0.0))
    throw UsageError("learning-rate ratios must be > 0");
  if (!(staged_instance_noise >= 0.0)) throw UsageError("instance noise must be >= 0");
  if (!(instance_noise >= 0.0)) throw UsageError("instance noise must be >= 0");
  if (stage_lstm_only < 0 || stage_joint < 0) throw UsageError("stage epochs must be >= 0");
  if (pairs_per_epoch < 0 || dev_pairs < 0) throw UsageError("pair caps must be >= 0");
}

namespace {

ParamBinder bind(Tape& t, ParamSet& ps, bool trainable) {
  return trainable ? ParamBinder(t, ps) : ParamBinder(t, std::as_const(ps));
}

std::vector<const WindowPair*> gather(const std::vector<WindowPair>& pairs,
                                      std::span<const std::size_t> idx) {
  std::vector<const WindowPair*> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(&pairs[i]);
  return out;
}

struct StepLosses {
  double d_loss;
  double g_loss;
};

// Adds N(0, sigma^2) to every entry; identity when sigma is zero.
Var with_instance_noise(Tape& t, Var x, double sigma, Rng& rng) {
  if (sigma <= 0.0) return x;
  std::normal_distribution<double> n01(0.0, 1.0);
  const Mat& v = t.value(x);
  Mat noise(v.rows(), v.cols());
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = sigma * n01(rng);
  return weighted_sum(t, x, 1.0, t.constant(std::move(noise)), 1.0);
}

StepLosses adversarial_step(GanModel& m, const ModelInputs& in, Rng& rng, const TrainConfig& cfg,
                            Adam& opt_g, Adam& opt_d) {
  const Index b = in.condition.rows();
  const double sigma = m.tag.arch == Architecture::FC ? 0.0 : cfg.instance_noise;
  StepLosses out{};
  {
    Tape t;
    Var cond = t.constant_ref(in.condition);
    Var real = with_instance_noise(t, t.constant_ref(in.target), sigma, rng);
    Var z = t.constant(sample_noise(m, b, rng));
    ParamBinder g(t, std::as_const(m.generator));
    Var fake = with_instance_noise(t, generate(m.tag, g, cond, z), sigma, rng);
    ParamBinder d = bind(t, m.discriminator, cfg.update_discriminator);
    auto logits = discriminate_logits(m.tag, d, cond, {real, fake});
    Var loss = weighted_sum(t, bce_logits(t, logits[0], 1.0), 1.0, bce_logits(t, logits[1], 0.0), 1.0);
    out.d_loss = t.value(loss)(0, 0);
    if (cfg.update_discriminator) {
      m.discriminator.zero_grad();
      t.backward(loss);
      m.discriminator.clip_grad_norm(cfg.clip_norm);
      opt_d.step(m.discriminator);
    }
  }
  {
    Tape t;
    Var cond = t.constant_ref(in.condition);
    Var z = t.constant(sample_noise(m, b, rng));
    ParamBinder g = bind(t, m.generator, cfg.update_generator);
    Var fake = with_instance_noise(t, generate(m.tag, g, cond, z), sigma, rng);
    ParamBinder d(t, std::as_const(m.discriminator));
    auto logits = discriminate_logits(m.tag, d, cond, {fake});
    Var loss = bce_logits(t, logits[0], 1.0);
    out.g_loss = t.value(loss)(0, 0);
    if (cfg.update_generator) {
      m.generator.zero_grad();
      t.backward(loss);
      m.generator.clip_grad_norm(cfg.clip_norm);
      opt_g.step(m.generator);
    }
  }
  return out;
}

// Evenly spaced subset of at most `max_pairs` indices.
std::vector<std::size_t> spread_indices(std::size_t n, Index max_pairs) {
  std::size_t k = max_pairs > 0 ? std::min(n, static_cast<std::size_t>(max_pairs)) : n;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i * n / k;
  return idx;
}

Rng pair_rng(std::uint64_t seed, std::size_t index, int draw) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(draw)};
  return Rng(seq);
}

}  // namespace

double dev_accuracy(const GanModel& model, const std::vector<WindowPair>& dev, Index max_pairs,
                    std::uint64_t noise_seed, Index batch_size) {
  if (dev.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto idx = spread_indices(dev.size(), max_pairs);
  Rng rng(noise_seed);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(batch_size));
    const auto batch = gather(dev, std::span(idx).subspan(start, end - start));
    const ModelInputs in = prepare_inputs(model.tag, batch);
    Tape t;
    Var cond = t.constant_ref(in.condition);
    Var real = t.constant_ref(in.target);
    ParamBinder g(t, model.generator);
    Var fake = generate(model.tag, g, cond, t.constant(sample_noise(model, in.condition.rows(), rng)));
    ParamBinder d(t, model.discriminator);
    auto s = discriminate(model.tag, d, cond, {real, fake});
    correct += static_cast<std::size_t>((t.value(s[0]).array() > 0.5).count());
    correct += static_cast<std::size_t>((t.value(s[1]).array() < 0.5).count());
  }
  return static_cast<double>(correct) / static_cast<double>(2 * idx.size());
}

TrainLog train(GanModel& model, const std::vector<WindowPair>& pairs,
               const std::vector<WindowPair>& dev, const TrainConfig& config,
               const EpochCallback& on_epoch) {
  config.validate();
  if (pairs.empty()) throw UsageError("train: no training pairs");
  Rng rng(config.seed);
  Adam opt_g(AdamConfig{config.lr * config.g_lr_ratio, config.beta1});
  Adam opt_d(AdamConfig{config.lr, config.beta1});
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t per_epoch =
      config.pairs_per_epoch > 0 ? std::min(order.size(), static_cast<std::size_t>(config.pairs_per_epoch))
                                 : order.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);

  TrainLog log;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double g_sum = 0.0, d_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < per_epoch; start += bs) {
      const std::size_t end = std::min(per_epoch, start + bs);
      const auto batch = gather(pairs, std::span(order).subspan(start, end - start));
      const ModelInputs in = prepare_inputs(model.tag, batch);
      StepLosses l{};
      try {
        l = adversarial_step(model, in, rng, config, opt_g, opt_d);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1) + ": " + e.what());
      }
      if (!std::isfinite(l.d_loss) || !std::isfinite(l.g_loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batches + 1));
      g_sum += l.g_loss;
      d_sum += l.d_loss;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.g_loss = g_sum / batches;
    rec.d_loss = d_sum / batches;
    rec.dev_d_acc = dev_accuracy(model, dev, config.dev_pairs, config.seed + 7919u * epoch,
                                 config.batch_size);
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

std::vector<std::string> import_donors(GanModel& target, const GanModel& cnn, const GanModel& lstm) {
  if (target.tag.arch != Architecture::CNN_LSTM) throw UsageError("import target must be cnn-lstm");
  if (cnn.tag.arch != Architecture::CNN) throw UsageError("CNN donor has architecture " +
                                                          std::string(to_string(cnn.tag.arch)));
  if (lstm.tag.arch != Architecture::LSTM)
    throw UsageError("LSTM donor has architecture " + std::string(to_string(lstm.tag.arch)));
  if (cnn.tag.modality != target.tag.modality || lstm.tag.modality != target.tag.modality)
    throw UsageError("donor modality does not match the cnn-lstm model");

  std::vector<std::string> imported;
  auto copy_from = [&](ParamSet& dst, const ParamSet& src) {
    for (auto& [id, p] : dst) {
      const bool is_cnn = id.find(".cnn.") != std::string::npos;
      if (is_cnn) {
        const Parameter& s = cnn.generator.contains(id) ? cnn.generator.at(id) : cnn.discriminator.at(id);
        if (s.shape != p.shape) throw UsageError("CNN donor tensor '" + id + "' has a different shape");
        p.value = s.value;
        imported.push_back(id);
        continue;
      }
      if (!src.contains(id)) continue;
      const Parameter& s = src.at(id);
      if (s.shape == p.shape) {
        p.value = s.value;
        imported.push_back(id);
      } else if (id == "g.head.w" && s.value.cols() == p.value.cols() && s.value.rows() > p.value.rows()) {
        p.value = s.value.topRows(p.value.rows());
        imported.push_back(id);
      }
    }
  };
  copy_from(target.generator, lstm.generator);
  copy_from(target.discriminator, lstm.discriminator);
  return imported;
}

GanModel train_staged(const GanModel& cnn, const GanModel& lstm, const std::vector<WindowPair>& pairs,
                      const std::vector<WindowPair>& dev, const TrainConfig& config, TrainLog& log,
                      const std::function<void(const GanModel&)>& after_frozen_stage,
                      const EpochCallback& on_epoch) {
  if (cnn.tag.modality != lstm.tag.modality)
    throw UsageError("donor models were trained on different modalities");
  GanModel model = build_cnn_lstm(cnn.tag.modality, config.seed);
  import_donors(model, cnn, lstm);

  int epoch_offset = static_cast<int>(log.epochs.size());
  auto run_stage = [&](int epochs, std::uint64_t seed, double lr_ratio, const std::string& phase) {
    if (epochs == 0) return;
    TrainConfig c = config;
    c.epochs = epochs;
    c.seed = seed;
    c.lr = config.lr * lr_ratio;
    c.instance_noise = config.staged_instance_noise;
    c.g_lr_ratio = config.staged_g_lr_ratio;
    train(model, pairs, dev, c, [&](const EpochRecord& r) {
      EpochRecord rec = r;
      rec.epoch += epoch_offset;
      rec.phase = phase;
      log.epochs.push_back(rec);
      if (on_epoch) on_epoch(rec);
    });
    epoch_offset += epochs;
  };

  model.generator.set_frozen("g.cnn.", true);
  model.discriminator.set_frozen("d.cnn.", true);
  run_stage(config.stage_lstm_only, config.seed, 1.0, "lstm-only");
  model.generator.set_frozen("g.cnn.", false);
  model.discriminator.set_frozen("d.cnn.", false);
  if (after_frozen_stage) after_frozen_stage(model);
  run_stage(config.stage_joint, config.seed + 1, config.joint_lr_ratio, "joint");
  return model;
}

std::vector<ScoreRecord> score(const GanModel& model, const std::vector<WindowPair>& pairs,
                               const ScoreConfig& config) {
  if (config.noise_draws < 1) throw UsageError("noise_draws must be >= 1");
  if (config.batch_size < 1) throw UsageError("batch_size must be >= 1");
  std::vector<ScoreRecord> records(pairs.size());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t n_batches = (pairs.size() + bs - 1) / bs;

  auto run_batch = [&](std::size_t bi) {
    const std::size_t start = bi * bs;
    const std::size_t end = std::min(pairs.size(), start + bs);
    std::vector<const WindowPair*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&pairs[i]);
    const ModelInputs in = prepare_inputs(model.tag, batch);
    const Index b = static_cast<Index>(batch.size());

    Tape t;
    Var cond = t.constant_ref(in.condition);
    std::vector<Var> candidates{t.constant_ref(in.target)};
    ParamBinder g(t, model.generator);
    for (int k = 0; k < config.noise_draws; ++k) {
      Mat z(b, model.noise_dim);
      for (Index i = 0; i < b; ++i) {
        Rng r = pair_rng(config.noise_seed, start + static_cast<std::size_t>(i), k);
        z.row(i) = sample_noise(model, 1, r);
      }
      candidates.push_back(generate(model.tag, g, cond, t.constant(std::move(z))));
    }
    ParamBinder d(t, model.discriminator);
    const auto s = discriminate(model.tag, d, cond, candidates);
    for (Index i = 0; i < b; ++i) {
      double fake = 0.0;
      for (int k = 0; k < config.noise_draws; ++k) fake += t.value(s[static_cast<std::size_t>(k + 1)])(i, 0);
      fake /= config.noise_draws;
      const WindowPair& p = *batch[static_cast<std::size_t>(i)];
      ScoreRecord& rec = records[start + static_cast<std::size_t>(i)];
      rec.session_id = p.session->id;
      rec.target_start_s = p.target_start_s();
      rec.s_real = t.value(s[0])(i, 0);
      rec.s_fake = fake;
      rec.m_anomaly = anomaly_metric(*rec.s_real, fake);
      rec.set = p.label;
    }
  };

  const int threads = std::max(1, std::min<int>(config.threads, static_cast<int>(n_batches)));
  if (threads <= 1) {
    for (std::size_t bi = 0; bi < n_batches; ++bi) run_batch(bi);
    return records;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t bi = next++; bi < n_batches; bi = next++) {
        try {
          run_batch(bi);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return records;
}

// ---------------------------------------------------------------------------
// Score and log files
// ---------------------------------------------------------------------------

namespace {

void append_double(std::string& out, double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  out.append(buf, res.ptr);
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_field(std::string_view cell, const std::string& where, const char* field) {
  double x = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), x);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(x))
    throw ParseError(where + ": field '" + field + "' is not a finite number: '" + std::string(cell) + "'");
  return x;
}

}  // namespace

void write_scores_csv(const std::vector<ScoreRecord>& records, const fs::path& path,
                      const std::vector<std::string>& provenance) {
  std::string out;
  for (const auto& line : provenance) out += "# " + line + "\n";
  out.append(kScoresHeader);
  out.push_back('\n');
  for (const auto& r : records) {
    out += r.session_id;
    out.push_back(',');
    append_double(out, r.target_start_s);
    out.push_back(',');
    if (r.s_real) append_double(out, *r.s_real);
    out.push_back(',');
    if (r.s_fake) append_double(out, *r.s_fake);
    out.push_back(',');
    append_double(out, r.m_anomaly);
    out.push_back(',');
    out.append(to_string(r.set));
    out.push_back('\n');
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << out;
}

std::vector<ScoreRecord> read_scores_csv(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open scores file " + path.string());
  std::string line;
  int row = 0;
  bool header = false;
  std::vector<ScoreRecord> out;
  while (std::getline(is, line)) {
    line = strip_cr(line);
    ++row;
    if (!header) {
      if (line.empty() || line[0] == '#') continue;
      if (line != kScoresHeader)
        throw ParseError(path.string() + " row " + std::to_string(row) + ": expected header '" +
                         std::string(kScoresHeader) + "', got '" + line + "'");
      header = true;
      continue;
    }
    if (line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    const auto cells = split_csv(line);
    if (cells.size() != 6)
      throw ParseError(where + ": expected 6 fields, got " + std::to_string(cells.size()));
    ScoreRecord r;
    if (cells[0].empty()) throw ParseError(where + ": field 'session_id' is empty");
    r.session_id = std::string(cells[0]);
    r.target_start_s = parse_field(cells[1], where, "target_start_s");
    if (!cells[2].empty()) r.s_real = parse_field(cells[2], where, "s_real");
    if (!cells[3].empty()) r.s_fake = parse_field(cells[3], where, "s_fake");
    r.m_anomaly = parse_field(cells[4], where, "m_anomaly");
    try {
      r.set = parse_event_set(cells[5]);
    } catch (const ParseError&) {
      throw ParseError(where + ": field 'set' must be normal, maneuver or candidate");
    }
    out.push_back(std::move(r));
  }
  if (!header)
    throw ParseError(path.string() + ": missing header '" + std::string(kScoresHeader) + "'");
  return out;
}

void write_train_log(const TrainLog& log, std::ostream& os, const std::vector<std::string>& provenance) {
  for (const auto& line : provenance) os << "# " << line << '\n';
  os << kTrainLogHeader << '\n';
  std::string phase;
  for (const auto& r : log.epochs) {
    if (r.phase != phase) {
      os << "# phase " << r.phase << '\n';
      phase = r.phase;
    }
    std::string line = std::to_string(r.epoch) + ",";
    append_double(line, r.g_loss);
    line.push_back(',');
    append_double(line, r.d_loss);
    line.push_back(',');
    append_double(line, r.dev_d_acc);
    os << line << '\n';
  }
}

// ---------------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kModelMagic = "DAGAN-MODEL 1";

void write_le_doubles(std::ostream& os, const Mat& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(m(i, j));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      char buf[8];
      std::memcpy(buf, &bits, 8);
      os.write(buf, 8);
    }
}

void read_le_doubles(std::istream& is, Mat& m, const std::string& id) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      char buf[8];
      if (!is.read(buf, 8)) throw ParseError("model file truncated in tensor '" + id + "'");
      std::uint64_t bits;
      std::memcpy(&bits, buf, 8);
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
      m(i, j) = std::bit_cast<double>(bits);
    }
}

}  // namespace

void save_model(const GanModel& model, const fs::path& path, const std::vector<std::string>& provenance) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << kModelMagic << '\n';
  os << "arch " << to_string(model.tag.arch) << '\n';
  os << "modality " << to_string(model.tag.modality) << '\n';
  os << "channels " << model.tag.channels() << '\n';
  os << "noise_dim " << model.noise_dim << '\n';
  os << "seed " << model.seed << '\n';
  if (model.tag.arch == Architecture::FC) os << "feature_io " << target_width(model.tag) << '\n';
  for (const auto& line : provenance) os << "# " << line << '\n';
  for (const ParamSet* ps : {&model.generator, &model.discriminator})
    for (const auto& [id, p] : *ps) {
      os << "tensor " << id << ' ' << p.shape.size();
      for (Index e : p.shape) os << ' ' << e;
      os << '\n';
      write_le_doubles(os, p.value);
      os << '\n';
    }
  os << "end\n";
}

GanModel load_model(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open model file " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kModelMagic)
    throw ParseError(path.string() + ": not a model file (expected '" + std::string(kModelMagic) + "')");
  std::optional<Architecture> arch;
  std::optional<Modality> modality;
  Index noise_dim = -1;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Parameter>> tensors;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "arch") {
      std::string v;
      ls >> v;
      arch = parse_architecture(v);
    } else if (key == "modality") {
      std::string v;
      ls >> v;
      modality = parse_modality(v);
    } else if (key == "noise_dim") {
      ls >> noise_dim;
    } else if (key == "seed") {
      ls >> seed;
    } else if (key == "channels" || key == "feature_io") {
      // derived from arch/modality
    } else if (key == "tensor") {
      std::string id;
      std::size_t ndim = 0;
      ls >> id >> ndim;
      Parameter p;
      for (std::size_t k = 0; k < ndim; ++k) {
        Index e = 0;
        ls >> e;
        p.shape.push_back(e);
      }
      if (!ls || ndim == 0) throw ParseError(path.string() + ": malformed tensor line '" + line + "'");
      Index cols = 1;
      for (std::size_t k = 1; k < ndim; ++k) cols *= p.shape[k];
      p.value.resize(p.shape[0], cols);
      read_le_doubles(is, p.value, id);
      is.get();  // newline after the block
      tensors.emplace_back(id, std::move(p));
    } else if (key == "end") {
      ended = true;
      break;
    } else {
      throw ParseError(path.string() + ": unknown header key '" + key + "'");
    }
  }
  if (!ended) throw ParseError(path.string() + ": missing 'end' marker");
  if (!arch || !modality || noise_dim <= 0)
    throw ParseError(path.string() + ": header lacks arch, modality or noise_dim");

  GanModel model = build_model({*arch, *modality}, seed);
  if (model.noise_dim != noise_dim) throw ParseError(path.string() + ": noise_dim does not match the architecture");
  std::size_t expected = model.generator.size() + model.discriminator.size();
  if (tensors.size() != expected)
    throw ParseError(path.string() + ": expected " + std::to_string(expected) + " tensors, found " +
                     std::to_string(tensors.size()));
  for (auto& [id, p] : tensors) {
    ParamSet& ps = id.rfind("g.", 0) == 0 ? model.generator : model.discriminator;
    if (!ps.contains(id)) throw ParseError(path.string() + ": unknown tensor '" + id + "'");
    Parameter& dst = ps.at(id);
    if (dst.shape != p.shape) throw ParseError(path.string() + ": tensor '" + id + "' has the wrong shape");
    dst.value = std::move(p.value);
  }
  return model;
}

}  // namespace dagan
