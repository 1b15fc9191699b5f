#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/models/checkpoint.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::ingest,   Stage::balance,   Stage::train,
                                         Stage::evaluate, Stage::correlate, Stage::report};
  return stages;
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::ingest: return "ingest";
    case Stage::balance: return "balance";
    case Stage::train: return "train";
    case Stage::evaluate: return "evaluate";
    case Stage::correlate: return "correlate";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& text) {
  for (auto s : all_stages()) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + text + "'");
}

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Exclusive ownership of a run directory. A lock left by a dead process is reclaimed.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    for (int attempt = 0; attempt < 2; ++attempt) {
      const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
      if (fd >= 0) {
        const auto pid = std::to_string(::getpid());
        [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
        ::close(fd);
        return;
      }
      if (errno != EEXIST) throw RuntimeFailure("cannot create lock " + path_.string() + ": " + std::strerror(errno));
      if (!stale()) throw RuntimeFailure("run directory " + dir.string() + " is locked by another process");
      fs::remove(path_);
    }
    throw RuntimeFailure("cannot lock run directory " + dir.string());
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

  static bool held(const fs::path& dir) { return fs::exists(dir / ".lock") && !stale_at(dir / ".lock"); }

 private:
  bool stale() const { return stale_at(path_); }
  static bool stale_at(const fs::path& p) {
    std::ifstream in(p);
    long pid = 0;
    if (!(in >> pid) || pid <= 0) return true;
    return ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH;
  }

  fs::path path_;
};

struct RunState {
  std::string config_hash;
  std::vector<std::string> completed;
  json last_error = nullptr;

  bool done(Stage s) const {
    return std::find(completed.begin(), completed.end(), to_string(s)) != completed.end();
  }
  json to_json() const { return {{"config_hash", config_hash}, {"completed", completed}, {"last_error", last_error}}; }
  static RunState from_json(const json& j) {
    RunState s;
    s.config_hash = j.at("config_hash").get<std::string>();
    s.completed = j.at("completed").get<std::vector<std::string>>();
    s.last_error = j.value("last_error", json(nullptr));
    return s;
  }
};

class Pipeline {
 public:
  Pipeline(const ExperimentConfig& config, fs::path run_dir, std::ostream* log)
      : config_(config),
        run_dir_(std::move(run_dir)),
        log_(log),
        inventory_(load_inventory(config.inventory.empty() ? default_inventory_path() : config.inventory)) {}

  void run(Stage stage) {
    switch (stage) {
      case Stage::ingest: return ingest();
      case Stage::balance: return balance_stage();
      case Stage::train: return train_stage();
      case Stage::evaluate: return evaluate();
      case Stage::correlate: return correlate();
      case Stage::report: return report();
    }
  }

  const json& report_json() const { return report_; }

 private:
  void say(const std::string& msg) {
    if (log_) *log_ << "[" << config_.run_id << "] " << msg << std::endl;
  }

  fs::path corpus_dir(const std::string& tag) const { return run_dir_ / "corpora" / tag; }

  std::vector<std::string> ingested_tags() const {
    std::vector<std::string> tags = config_.finetune_corpora;
    for (const auto& t : config_.test_corpora) {
      if (std::find(tags.begin(), tags.end(), t) == tags.end()) tags.push_back(t);
    }
    return tags;
  }

  void ingest() {
    std::map<std::string, std::string> seen_utts;  // utterance -> corpus
    for (const auto& tag : ingested_tags()) {
      auto utts = parse_alignments(config_.corpora.at(tag), inventory_);
      if (utts.empty()) throw DataError("corpus '" + tag + "' has no utterances");
      std::vector<FrameRecord> frames;
      for (auto& u : utts) {
        if (u.corpus_tag != tag) {
          throw DataError("utterance " + u.utterance_id + " is tagged '" + u.corpus_tag + "' but listed under corpus '" +
                          tag + "'");
        }
        const auto [it, fresh] = seen_utts.emplace(u.utterance_id, tag);
        if (!fresh) throw DataError("utterance id " + u.utterance_id + " appears in corpora " + it->second + " and " + tag);
        auto f = extract_frames(u, inventory_);
        frames.insert(frames.end(), f.begin(), f.end());
      }
      std::vector<CorpusUsage> usage;
      if (std::count(config_.finetune_corpora.begin(), config_.finetune_corpora.end(), tag)) {
        usage = {CorpusUsage::train, CorpusUsage::validation};
      }
      if (std::count(config_.test_corpora.begin(), config_.test_corpora.end(), tag)) usage.push_back(CorpusUsage::test);
      auto manifest = make_manifest(tag, usage, frames.size());
      manifest.class_counts = class_counts(frames, inventory_.size());
      const auto dir = corpus_dir(tag);
      write_utterances_csv(dir / "utterances.csv", utts);
      write_frames_csv(dir / "frames.csv", frames, inventory_);
      write_manifest_json(dir / "manifest.json", manifest);
      say("ingested " + tag + ": " + std::to_string(utts.size()) + " utterances, " + std::to_string(frames.size()) +
          " frames");
    }
  }

  void balance_stage() {
    std::vector<FrameRecord> pool;
    for (const auto& tag : config_.finetune_corpora) {
      auto f = read_frames_csv(corpus_dir(tag) / "frames.csv", inventory_);
      pool.insert(pool.end(), f.begin(), f.end());
    }
    const auto balanced = balance(pool, config_.resolved_balancing(), inventory_);
    const auto split = split_train_validation(balanced, config_.train_ratio, config_.seeds().split);
    const auto dir = run_dir_ / "splits";
    write_frames_csv(dir / "train.csv", split.train, inventory_);
    write_frames_csv(dir / "validation.csv", split.validation, inventory_);
    for (const auto& [name, frames, usage] :
         {std::tuple{"train", &split.train, CorpusUsage::train},
          std::tuple{"validation", &split.validation, CorpusUsage::validation}}) {
      auto m = make_manifest(std::string("finetune-") + name, {usage}, frames->size());
      m.seed = config_.seeds().balance;
      m.class_counts = class_counts(*frames, inventory_.size());
      write_manifest_json(dir / (std::string(name) + ".manifest.json"), m);
    }
    say("balanced " + std::to_string(pool.size()) + " frames to " + std::to_string(balanced.size()) + " (" +
        std::to_string(split.train.size()) + " train, " + std::to_string(split.validation.size()) + " validation)");
  }

  std::map<std::string, fs::path> audio_paths(const std::vector<std::string>& tags) const {
    std::map<std::string, fs::path> out;
    for (const auto& tag : tags) {
      for (const auto& u : read_utterances_csv(corpus_dir(tag) / "utterances.csv")) out[u.utterance_id] = u.audio_path;
    }
    return out;
  }

  LabeledInputs inputs_for(const std::vector<FrameRecord>& frames, const std::map<std::string, fs::path>& audio,
                           const std::string& cache_name) const {
    const auto kind = config_.resolved_model().input_kind();
    const auto cache_path = run_dir_ / "features" / (cache_name + ".bin");
    LabeledInputs data;
    auto cached = FeatureCache::read(cache_path, kind, config_.features);
    if (cached && cached->matches(frames)) {
      data.inputs = std::move(cached->inputs);
    } else {
      FeatureCache cache;
      cache.kind = kind;
      cache.config = config_.features;
      cache.inputs = assemble_inputs(frames, audio, kind, config_.features);
      for (const auto& f : frames) {
        cache.utterance_ids.push_back(f.utterance_id);
        cache.centers_s.push_back(f.center_s);
      }
      cache.write(cache_path);
      data.inputs = std::move(cache.inputs);
    }
    for (const auto& f : frames) {
      data.labels.push_back(f.label);
      data.utterance_ids.push_back(f.utterance_id);
      data.centers_s.push_back(f.center_s);
    }
    return data;
  }

  void train_stage() {
    const auto audio = audio_paths(config_.finetune_corpora);
    const auto train_frames = read_frames_csv(run_dir_ / "splits" / "train.csv", inventory_);
    const auto val_frames = read_frames_csv(run_dir_ / "splits" / "validation.csv", inventory_);
    const auto train_set = inputs_for(train_frames, audio, "train");
    const auto val_set = inputs_for(val_frames, audio, "validation");
    say("features ready: " + std::to_string(train_set.size()) + " train, " + std::to_string(val_set.size()) +
        " validation windows");

    PhoneClassifier<float> model(config_.resolved_model());
    TrainOptions opts;
    opts.run_dir = run_dir_ / "checkpoints";
    opts.inventory_hash = inventory_.hash();
    opts.on_epoch = [this](const EpochMetrics& m) {
      say("epoch " + std::to_string(m.epoch) + ": loss " + csv::format_double(m.train_loss) + ", validation error " +
          csv::format_double(m.validation_phone_error_rate));
    };
    const auto result = train(model, train_set, val_set, config_.resolved_training(), opts);

    json epochs = json::array();
    for (const auto& m : result.epochs) epochs.push_back(m.to_json());
    auto best = result.best.to_json();
    best["path"] = fs::relative(result.best.path, run_dir_).generic_string();
    write_json(run_dir_ / "training.json", {{"epochs", epochs}, {"best", best}});
    say("best epoch " + std::to_string(result.best.epoch));
  }

  std::set<PhoneId> excluded_labels() const {
    if (config_.evaluation.include_silence) return {};
    return {inventory_.silence_index()};
  }

  void evaluate() {
    const auto training = read_json(run_dir_ / "training.json");
    const auto ckpt = run_dir_ / training.at("best").at("path").get<std::string>();
    const auto model = load_checkpoint<float>(ckpt, inventory_.hash());
    const auto groups = load_phone_groups(config_.evaluation.phone_groups.empty() ? default_phone_groups_path()
                                                                                  : config_.evaluation.phone_groups);
    const int batch = config_.resolved_training().effective_batch_size(model->config().encoder);

    for (const auto& tag : config_.test_corpora) {
      const auto frames = read_frames_csv(corpus_dir(tag) / "frames.csv", inventory_);
      const auto data = inputs_for(frames, audio_paths({tag}), "test-" + tag);
      const auto predicted = predict_all(*model, data.inputs, batch);

      PredictionSet preds;
      preds.n_classes = inventory_.size();
      for (std::size_t i = 0; i < frames.size(); ++i) {
        preds.records.push_back({frames[i].label, predicted[i], frames[i].speaker_id, frames[i].utterance_id});
      }
      const auto dir = run_dir_ / "eval" / tag;
      write_predictions_csv(dir / "predictions.csv", preds, inventory_);

      auto phones = phones_present(preds);
      for (auto p : excluded_labels()) phones.erase(p);
      if (phones.empty()) throw MetricError("test corpus '" + tag + "' has no phones to score");
      const auto ba = balanced_accuracy(preds, phones);
      BootstrapOptions bo;
      bo.n_resamples = config_.evaluation.n_resamples;
      bo.alpha = config_.evaluation.alpha;
      bo.unit = config_.evaluation.unit;
      bo.seed = config_.seeds().bootstrap;
      const auto ci = bootstrap_ci(preds, balanced_accuracy_metric(phones), bo);
      const auto cm = confusion_matrix(preds, inventory_);
      write_confusion_csv(dir / "confusion.csv", cm);

      json group_json = json::object();
      for (const auto& g : groups) {
        const auto sub = submatrix(cm, g);
        group_json[g.name] = to_json(sub);
        write_confusion_csv(dir / ("confusion_" + g.name + ".csv"), sub);
      }
      std::set<std::string> speakers;
      for (const auto& r : preds.records) speakers.insert(r.speaker_id);
      json per_speaker = json::object();
      for (const auto& [spk, acc] : speaker_balanced_accuracy(preds, excluded_labels())) per_speaker[spk] = acc;

      write_json(dir / "metrics.json", {{"n_frames", preds.records.size()},
                                        {"n_speakers", speakers.size()},
                                        {"balanced_accuracy", to_json(ba, inventory_)},
                                        {"micro_accuracy", micro_accuracy(preds)},
                                        {"ci", to_json(ci)},
                                        {"confusion", to_json(cm)},
                                        {"groups", group_json},
                                        {"speaker_balanced_accuracy", per_speaker}});
      say("evaluated " + tag + ": balanced accuracy " + csv::format_double(ba.value) + " [" +
          csv::format_double(ci.low) + ", " + csv::format_double(ci.high) + "]");
    }
  }

  void correlate() {
    const auto dir = run_dir_ / "correlation";
    if (!config_.ratings) {
      write_json(dir / "summary.json", nullptr);
      return;
    }
    const auto& rc = *config_.ratings;
    const auto tags = rc.corpora.empty() ? config_.test_corpora : rc.corpora;
    PredictionSet preds;
    preds.n_classes = inventory_.size();
    for (const auto& tag : tags) {
      auto p = read_predictions_csv(run_dir_ / "eval" / tag / "predictions.csv", inventory_);
      preds.records.insert(preds.records.end(), p.records.begin(), p.records.end());
    }
    const auto accuracies = speaker_balanced_accuracy(preds, excluded_labels());
    const auto scores = average_ratings(read_ratings_csv(rc.ratings));
    const auto cohorts = rc.cohorts.empty() ? std::map<std::string, std::string>{} : read_cohorts_csv(rc.cohorts);

    json summary = json::object();
    json few = json::array();
    for (const auto& s : scores) {
      if (s.few_raters()) few.push_back({{"speaker_id", s.speaker_id}, {"n_raters", s.n_raters}});
    }
    for (auto dim : {RatingDimension::severity, RatingDimension::intelligibility}) {
      const auto ex = scatter_export(scores, accuracies, dim, dir / to_string(dim), cohorts);
      json excl = json::array();
      for (const auto& e : ex.exclusions) excl.push_back({{"speaker_id", e.speaker_id}, {"reason", e.reason}});
      summary[to_string(dim)] = {{"n_rows", ex.rows.size()},
                                 {"fit", ex.fit ? ex.fit->to_json() : json(nullptr)},
                                 {"exclusions", excl}};
      if (ex.fit) say(to_string(dim) + ": r = " + csv::format_double(ex.fit->r));
    }
    summary["few_raters"] = few;
    write_json(dir / "summary.json", summary);
  }

  void report() {
    json corpora = json::object();
    for (const auto& tag : ingested_tags()) corpora[tag] = read_json(corpus_dir(tag) / "manifest.json");
    json splits = {{"train", read_json(run_dir_ / "splits" / "train.manifest.json")},
                   {"validation", read_json(run_dir_ / "splits" / "validation.manifest.json")}};
    json test = json::object();
    for (const auto& tag : config_.test_corpora) test[tag] = read_json(run_dir_ / "eval" / tag / "metrics.json");
    report_ = {{"schema_version", kReportSchemaVersion},
               {"run_id", config_.run_id},
               {"config", config_.to_json()},
               {"inventory", {{"symbols", inventory_.symbols()}, {"hash", inventory_.hash()}}},
               {"corpora", corpora},
               {"splits", splits},
               {"training", read_json(run_dir_ / "training.json")},
               {"test", test},
               {"correlation", read_json(run_dir_ / "correlation" / "summary.json")}};
    validate_report(report_);
    write_json(run_dir_ / "report.json", report_);
    say("report written to " + (run_dir_ / "report.json").string());
  }

  const ExperimentConfig& config_;
  fs::path run_dir_;
  std::ostream* log_;
  PhoneInventory inventory_;
  json report_;
};

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  // Configuration problems surface before anything is computed or written.
  config.check_resources();
  if (options.out_dir.empty()) throw ConfigError("no output directory given");

  RunOutcome outcome;
  outcome.run_dir = options.out_dir / config.run_id;
  const auto& dir = outcome.run_dir;
  const auto hash = config_hash(config);

  if (fs::exists(dir) && options.force) {
    if (RunLock::held(dir)) throw RuntimeFailure("run directory " + dir.string() + " is locked by another process");
    fs::remove_all(dir);
  }
  RunState state;
  if (fs::exists(dir / "state.json")) {
    try {
      state = RunState::from_json(read_json(dir / "state.json"));
    } catch (const json::exception& e) {
      throw DataError("corrupt run state in " + dir.string() + ": " + e.what());
    }
    if (state.config_hash != hash) {
      throw ConfigError("run '" + config.run_id + "' already exists in " + dir.string() +
                        " with a different configuration (use --force to overwrite)");
    }
    if (state.done(options.until)) {
      throw ConfigError("run '" + config.run_id + "' has already completed stage " + to_string(options.until) +
                        " (use --force to overwrite)");
    }
  } else if (fs::exists(dir) && !fs::is_empty(dir)) {
    throw ConfigError("run directory " + dir.string() + " exists without run state (use --force to overwrite)");
  }
  state.config_hash = hash;

  fs::create_directories(dir);
  RunLock lock(dir);
  write_json(dir / "config.json", config.to_json());
  write_json(dir / "state.json", state.to_json());

  Pipeline pipeline(config, dir, options.log);
  for (auto stage : all_stages()) {
    if (state.done(stage)) {
      outcome.skipped.push_back(stage);
    } else {
      try {
        pipeline.run(stage);
      } catch (const std::exception& e) {
        state.last_error = {{"stage", to_string(stage)}, {"message", e.what()}};
        write_json(dir / "state.json", state.to_json());
        throw;
      }
      state.completed.push_back(to_string(stage));
      state.last_error = nullptr;
      write_json(dir / "state.json", state.to_json());
      outcome.executed.push_back(stage);
    }
    if (stage == options.until) break;
  }
  if (state.done(Stage::report)) outcome.report = load_report(dir / "report.json");
  return outcome;
}

}  // namespace phonecls
