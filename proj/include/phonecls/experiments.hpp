#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonecls/corpus.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/features.hpp"
#include "phonecls/models/classifier.hpp"
#include "phonecls/training.hpp"

namespace phonecls {

// ---------------------------------------------------------------- config

struct EvaluationConfig {
  int n_resamples = 1000;
  double alpha = 0.05;
  ResamplingUnit unit = ResamplingUnit::frames;
  bool include_silence = false;
  std::filesystem::path phone_groups;  // empty = bundled groups
};

struct RatingsConfig {
  std::filesystem::path ratings;  // speaker_id, rater_id, severity, intelligibility
  std::filesystem::path cohorts;  // optional speaker_id, cohort
  std::vector<std::string> corpora;  // test corpora whose speakers are rated; empty = all
};

/// Stage seeds, all derived from one experiment seed.
struct StageSeeds {
  std::uint64_t balance = 0;
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t train = 0;
  std::uint64_t bootstrap = 0;

  static StageSeeds derive(std::uint64_t seed);
};

struct ExperimentConfig {
  std::string run_id;
  // Corpus store: tag -> alignment manifest (utterance_id, audio_path,
  // speaker_id, gender, corpus_tag, alignment_path).
  std::map<std::string, std::filesystem::path> corpora;
  std::vector<std::string> finetune_corpora;
  std::vector<std::string> test_corpora;
  std::filesystem::path inventory;  // empty = bundled French inventory
  ModelConfig model;
  bool trainable_encoder = true;
  MelConfig features;
  TrainingConfig training;
  BalancingPolicy balancing;
  double train_ratio = 0.9;
  EvaluationConfig evaluation;
  std::optional<RatingsConfig> ratings;
  std::uint64_t seed = 0;

  /// Parses a config; relative paths are resolved against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Resolved snapshot, including derived seeds; from_json(to_json()) round-trips.
  nlohmann::json to_json() const;

  StageSeeds seeds() const { return StageSeeds::derive(seed); }
  /// Model config with trainable_encoder and the init seed applied.
  ModelConfig resolved_model() const;
  TrainingConfig resolved_training() const;
  BalancingPolicy resolved_balancing() const;

  /// Structural checks (ConfigError).
  void validate() const;
  /// Everything a run needs exists: corpus manifests, inventory, groups,
  /// ratings, encoder backend (ConfigError). Runs no computation.
  void check_resources() const;
};

// ---------------------------------------------------------------- pipeline

enum class Stage { ingest, balance, train, evaluate, correlate, report };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& text);
const std::vector<Stage>& all_stages();

struct RunOptions {
  std::filesystem::path out_dir;  // the run lives in out_dir / run_id
  bool force = false;             // discard an existing run directory
  Stage until = Stage::report;    // last stage to execute
  std::ostream* log = nullptr;    // progress messages
};

struct RunOutcome {
  std::filesystem::path run_dir;
  std::vector<Stage> executed;
  std::vector<Stage> skipped;  // already complete from an earlier invocation
  std::optional<nlohmann::json> report;
};

/// Runs (or resumes) the pipeline up to options.until. The run directory is
/// locked for the duration; state.json records completed stages so a failed
/// run resumes where it stopped. A finished run, or a run directory created
/// from a different config, is refused unless forced.
RunOutcome run_experiment(const ExperimentConfig& config, const RunOptions& options);

// ---------------------------------------------------------------- report

inline constexpr int kReportSchemaVersion = 1;

/// Throws ValidationError listing every schema violation.
void validate_report(const nlohmann::json& report);
nlohmann::json load_report(const std::filesystem::path& path);

struct TableCell {
  double value = 0.0;
  double half_width = 0.0;
  double low = 0.0;
  double high = 0.0;
  bool best = false;
  bool significant = false;  // best and its interval overlaps no other row's
};

struct ComparisonTable {
  std::vector<std::string> columns;  // test corpora
  std::vector<std::string> run_ids;
  std::vector<std::vector<TableCell>> cells;  // [row][column]
};

/// Rows = reports, columns = test corpora. Throws TabulationError when the
/// reports do not share one set of test corpora.
ComparisonTable tabulate(const std::vector<nlohmann::json>& reports);
void write_table_csv(const std::filesystem::path& path, const ComparisonTable& table);
std::string format_table(const ComparisonTable& table);

// ---------------------------------------------------------------- grid

struct GridEntry {
  std::string run_id;
  nlohmann::json config;
};

/// Expands {"base": config, "factors": {"dotted.path": [values...]}} into the
/// cartesian product of factor values (factors in key order). Each run_id is
/// the base run_id plus one suffix per factor.
std::vector<GridEntry> expand_grid(const nlohmann::json& tmpl);

/// Sets a dotted path (object keys only) inside a JSON object, creating
/// intermediate objects.
void set_dotted(nlohmann::json& j, const std::string& path, const nlohmann::json& value);

// ---------------------------------------------------------------- synthetic data

struct SyntheticCorpusOptions {
  double minutes = 10.0;
  std::uint64_t seed = 7;
  int sample_rate_hz = 16000;
};

struct SyntheticCorpus {
  std::filesystem::path root;
  std::map<std::string, std::filesystem::path> manifests;  // tag -> alignment manifest
  std::filesystem::path ratings;
  std::filesystem::path cohorts;
  std::filesystem::path config;  // ready-to-run CNN experiment config
};

/// Deterministic corpus of tone-like phones: a read-speech fine-tuning corpus,
/// a healthy control test corpus and a degraded "patient" test corpus whose
/// ratings track the degradation. Writes WAVs, alignments, manifests,
/// ratings, cohorts and an experiment config under `out_dir`.
SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& out_dir, const SyntheticCorpusOptions& options,
                                          const PhoneInventory& inventory);

/// Linearly separable context-window inputs: each class is a fixed random
/// template plus small noise.
LabeledInputs make_separable_dataset(int per_class, int n_classes, Eigen::Index input_size, std::uint64_t seed,
                                     double noise = 0.1);

}  // namespace phonecls
