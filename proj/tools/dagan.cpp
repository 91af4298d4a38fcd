#include "dagan/eval.hpp"
#include "dagan/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace dagan;

namespace {

std::string quoted(const std::string& arg) {
  if (!arg.empty() && arg.find_first_of(" \t\"'\\$") == std::string::npos) return arg;
  std::string out = "'";
  for (char ch : arg) out += ch == '\'' ? std::string("'\\''") : std::string(1, ch);
  return out + "'";
}

std::string command_line(int argc, char** argv) {
  std::string s = "dagan";
  for (int i = 1; i < argc; ++i) s += " " + quoted(argv[i]);
  return s;
}

int scoring_threads() {
  const char* env = std::getenv("DAGAN_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw UsageError(std::string("DAGAN_THREADS must be a positive integer, got '") + env + "'");
  return static_cast<int>(n);
}

Corpus open_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory " + dir.string() + " does not exist");
  return read_corpus(dir);
}

struct GenArgs {
  fs::path out;
  CorpusConfig config;
  bool force = false;
};

struct TrainArgs {
  fs::path corpus, out, log, from_cnn, from_lstm;
  std::string model, modality = "both";
  TrainConfig config;
  Index pairs_per_epoch = -1;
};

struct ScoreArgs {
  fs::path model, corpus, out;
  std::string split = "test";
  ScoreConfig config;
};

struct BaselineArgs {
  fs::path corpus, out;
  std::string method, split = "test";
  BaselineConfig config;
};

struct EvalArgs {
  std::vector<fs::path> scores;
  fs::path corpus, out;
  Index top_k = kDefaultTopK;
  std::uint64_t seed = 0;
};

void run_gen(const GenArgs& a, const std::string& cmd) {
  if (fs::exists(a.out) && !fs::is_empty(a.out) && !a.force)
    throw UsageError(a.out.string() + " exists and is not empty (use --force to overwrite)");
  if (a.force && fs::exists(a.out)) {
    fs::remove_all(a.out / "sessions");
    fs::remove_all(a.out / "annotations");
  }
  const Corpus c = generate_corpus(a.config);
  write_corpus(c, a.out, cmd);
  std::size_t candidates = 0;
  for (const auto& s : c.sessions)
    for (const auto& ann : s.annotations) candidates += ann.set == EventSet::Candidate;
  std::cout << "wrote " << c.sessions.size() << " sessions (" << candidates << " candidate events) to "
            << a.out.string() << '\n';
}

void run_train(TrainArgs a, const std::vector<std::string>& prov) {
  const ArchitectureTag tag{parse_architecture(a.model), parse_modality(a.modality)};
  if ((!a.from_cnn.empty() || !a.from_lstm.empty()) && tag.arch != Architecture::CNN_LSTM)
    throw UsageError("--from-cnn/--from-lstm only apply to --model cnn-lstm");
  a.config.pairs_per_epoch = a.pairs_per_epoch >= 0 ? a.pairs_per_epoch : default_pairs_per_epoch(tag.arch);
  const Corpus corpus = open_corpus(a.corpus);

  std::optional<GanModel> cnn, lstm;
  Donors donors;
  if (!a.from_cnn.empty()) donors.cnn = &cnn.emplace(load_model(a.from_cnn));
  if (!a.from_lstm.empty()) donors.lstm = &lstm.emplace(load_model(a.from_lstm));

  auto out = train_model(corpus, tag, a.config, donors, [](const EpochRecord& r) {
    std::cerr << (r.phase.empty() ? "" : r.phase + " ") << "epoch " << r.epoch << "  g " << r.g_loss << "  d "
              << r.d_loss << "  dev_acc " << r.dev_d_acc << '\n';
  });
  save_model(out.model, a.out, prov);
  const fs::path log_path = a.log.empty() ? fs::path(a.out.string() + ".log") : a.log;
  std::ofstream log(log_path);
  if (!log) throw std::runtime_error("cannot write " + log_path.string());
  write_train_log(out.log, log, prov);
  std::cout << "wrote " << a.out.string() << " and " << log_path.string() << '\n';
}

void run_score(ScoreArgs a, const std::vector<std::string>& prov) {
  a.config.threads = scoring_threads();
  const GanModel model = load_model(a.model);
  const Corpus corpus = open_corpus(a.corpus);
  const auto records = score_split(model, corpus, a.split, a.config);
  write_scores_csv(records, a.out, prov);
  std::cout << "wrote " << records.size() << " scores to " << a.out.string() << '\n';
}

void run_baseline_cmd(const BaselineArgs& a, const std::vector<std::string>& prov) {
  const Corpus corpus = open_corpus(a.corpus);
  const auto records = run_baseline(corpus, parse_baseline_method(a.method), a.config, a.split);
  write_scores_csv(records, a.out, prov);
  std::cout << "wrote " << records.size() << " scores to " << a.out.string() << '\n';
}

void check_against_corpus(const std::vector<ScoreRecord>& records, const Corpus& corpus, const fs::path& file) {
  std::set<std::string> ids;
  for (const auto& s : corpus.sessions) ids.insert(s.id);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!ids.count(records[i].session_id))
      throw ParseError(file.string() + ": data row " + std::to_string(i + 1) + ": field session_id: unknown session '" +
                       records[i].session_id + "'");
}

void run_eval(const EvalArgs& a, const std::vector<std::string>& prov) {
  const Corpus corpus = open_corpus(a.corpus);
  std::vector<ModelReport> reports;
  std::set<std::string> names;
  for (const auto& file : a.scores) {
    const auto records = read_scores_csv(file);
    check_against_corpus(records, corpus, file);
    const std::string name = model_name_from_path(file);
    if (!names.insert(name).second) throw UsageError("two score files map to the model name '" + name + "'");
    reports.push_back(evaluate(name, records, a.top_k, a.seed));
    const auto& r = reports.back();
    std::cout << name << ": eer " << r.det.eer << "  auc " << r.det.auc << "  median gap " << r.gap.delta
              << "  top-" << a.top_k << " candidates " << r.overlap.model.candidate << " (random "
              << r.overlap.random.candidate << ")\n";
  }
  write_report(a.out, reports, prov);
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Autodiff tapes allocate many large short-lived blocks; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Driving anomaly detection with conditional GANs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Key-value file with default flag values ([gen], [train], ... sections)");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a seeded synthetic corpus");
  g->add_option("--out", gen.out, "Corpus directory")->required();
  g->add_option("--seed", gen.config.seed, "Data seed")->required();
  g->add_option("--train-min", gen.config.train_min, "Training minutes")->capture_default_str();
  g->add_option("--dev-min", gen.config.dev_min, "Development minutes")->capture_default_str();
  g->add_option("--test-min", gen.config.test_min, "Test minutes")->capture_default_str();
  g->add_option("--event-rate", gen.config.event_rate, "Candidate events per minute")->capture_default_str();
  g->add_option("--maneuver-rate", gen.config.maneuver_rate, "Maneuvers per minute")->capture_default_str();
  g->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a GAN model");
  t->add_option("--corpus", tr.corpus, "Corpus directory")->required();
  t->add_option("--model", tr.model, "Architecture")->required()->check(CLI::IsMember({"fc", "cnn", "lstm", "cnn-lstm"}));
  t->add_option("--modality", tr.modality, "Input channels")->check(CLI::IsMember({"physio", "can", "both"}))->capture_default_str();
  t->add_option("--seed", tr.config.seed, "Model seed")->required();
  t->add_option("--out", tr.out, "Model file")->required();
  t->add_option("--log", tr.log, "Training log (default: <out>.log)");
  t->add_option("--epochs", tr.config.epochs, "Epochs (donor epochs for cnn-lstm)")->capture_default_str();
  t->add_option("--lstm-only-epochs", tr.config.stage_lstm_only, "cnn-lstm epochs with CNN blocks frozen")->capture_default_str();
  t->add_option("--joint-epochs", tr.config.stage_joint, "cnn-lstm joint epochs")->capture_default_str();
  t->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  t->add_option("--lr", tr.config.lr)->capture_default_str();
  t->add_option("--pairs-per-epoch", tr.pairs_per_epoch, "Training pairs per epoch, 0 = all (default depends on model)");
  t->add_option("--from-cnn", tr.from_cnn, "Trained CNN donor for cnn-lstm")->check(CLI::ExistingFile);
  t->add_option("--from-lstm", tr.from_lstm, "Trained LSTM donor for cnn-lstm")->check(CLI::ExistingFile);

  ScoreArgs sc;
  auto* s = app.add_subcommand("score", "Score a split with a trained model");
  s->add_option("--model", sc.model, "Model file")->required()->check(CLI::ExistingFile);
  s->add_option("--corpus", sc.corpus, "Corpus directory")->required();
  s->add_option("--split", sc.split)->check(CLI::IsMember({"train", "dev", "test"}))->capture_default_str();
  s->add_option("--out", sc.out, "Scores CSV")->required();
  s->add_option("--noise-seed", sc.config.noise_seed, "Seed of the scoring noise")->capture_default_str();
  s->add_option("--noise-draws", sc.config.noise_draws, "Generated samples averaged per window")
      ->check(CLI::PositiveNumber)->capture_default_str();

  BaselineArgs bl;
  auto* b = app.add_subcommand("baseline", "Score a split with a baseline");
  b->add_option("--method", bl.method)->required()->check(CLI::IsMember({"fixed", "pca", "gmm", "beatgan"}));
  b->add_option("--corpus", bl.corpus, "Corpus directory")->required();
  b->add_option("--out", bl.out, "Scores CSV")->required();
  b->add_option("--split", bl.split)->check(CLI::IsMember({"train", "dev", "test"}))->capture_default_str();
  b->add_option("--seed", bl.config.seed, "Seed for GMM and BeatGAN")->capture_default_str();
  b->add_option("--gmm-components", bl.config.gmm.components)->check(CLI::Range(1, 16))->capture_default_str();
  b->add_flag("--gmm-full", "Full GMM covariances instead of diagonal")->each([&](const std::string&) {
    bl.config.gmm.covariance = CovarianceType::Full;
  });
  b->add_option("--epochs", bl.config.beatgan.epochs, "BeatGAN epochs")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "DET, median gaps and top-K overlap for score files");
  e->add_option("--scores", ev.scores, "Scores CSV files")->required()->delimiter(',')->check(CLI::ExistingFile);
  e->add_option("--corpus", ev.corpus, "Corpus directory")->required();
  e->add_option("--out", ev.out, "Report directory")->required();
  e->add_option("--top-k", ev.top_k)->check(CLI::PositiveNumber)->capture_default_str();
  e->add_option("--seed", ev.seed, "Seed of the random top-K row")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? 0 : 2;
  }

  const std::string cmd = command_line(argc, argv);
  try {
    if (*g) {
      run_gen(gen, cmd);
    } else if (*t) {
      run_train(tr, {"command: " + cmd, "seed: " + std::to_string(tr.config.seed)});
    } else if (*s) {
      run_score(sc, {"command: " + cmd, "noise_seed: " + std::to_string(sc.config.noise_seed)});
    } else if (*b) {
      run_baseline_cmd(bl, {"command: " + cmd, "seed: " + std::to_string(bl.config.seed)});
    } else if (*e) {
      run_eval(ev, {"command: " + cmd, "seed: " + std::to_string(ev.seed)});
    }
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
