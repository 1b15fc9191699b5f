#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonecls/corpus.hpp"

namespace phonecls {

struct Prediction {
  PhoneId true_label = 0;
  PhoneId predicted_label = 0;
  std::string speaker_id;
  std::string utterance_id;
};

/// Aligned (true, predicted, speaker, utterance) records of one test run.
struct PredictionSet {
  int n_classes = PhoneInventory::kClassCount;
  std::vector<Prediction> records;

  /// Labels in [0, n_classes); throws MetricError otherwise.
  void validate() const;
  bool empty() const { return records.empty(); }
};

/// A (possibly resampled, possibly repeated) selection of rows of a record array.
struct PredictionView {
  std::span<const Prediction> records;
  std::span<const std::uint32_t> rows;  // empty = all records, in order

  std::size_t size() const { return rows.empty() ? records.size() : rows.size(); }
  const Prediction& operator[](std::size_t i) const { return rows.empty() ? records[i] : records[rows[i]]; }
};

PredictionView view_of(const PredictionSet& preds);

/// correct / total * 100 for every phone with at least one true occurrence.
std::map<PhoneId, double> per_phone_accuracy(const PredictionSet& preds);
std::map<PhoneId, double> per_phone_accuracy(const PredictionView& view);

struct BalancedAccuracyResult {
  double value = 0.0;  // percent
  std::map<PhoneId, double> per_phone;
  std::set<PhoneId> phones_included;
};

/// Unweighted mean of per-phone accuracies over `phones_included`. Throws
/// MetricError naming an included phone without true occurrences.
BalancedAccuracyResult balanced_accuracy(const PredictionSet& preds, const std::set<PhoneId>& phones_included);
/// Same, over every phone present in the set.
BalancedAccuracyResult balanced_accuracy(const PredictionSet& preds);
double balanced_accuracy_value(const PredictionView& view, const std::set<PhoneId>& phones_included);

/// Phones with at least one true occurrence.
std::set<PhoneId> phones_present(const PredictionSet& preds);
/// All inventory classes, silence excluded unless requested.
std::set<PhoneId> phone_classes(const PhoneInventory& inventory, bool include_silence = false);

/// Frame-level micro accuracy in percent.
double micro_accuracy(const PredictionSet& preds);

// ---------------------------------------------------------------- bootstrap

enum class ResamplingUnit { frames, speakers };
std::string to_string(ResamplingUnit unit);
ResamplingUnit parse_resampling_unit(const std::string& text);

struct BootstrapOptions {
  int n_resamples = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  ResamplingUnit unit = ResamplingUnit::frames;  // frames are stratified by true phone
  int max_retries = 100;  // total redraws allowed for resamples where the metric is undefined
};

struct BootstrapCI {
  double point = 0.0;
  double low = 0.0;
  double high = 0.0;
  double half_width = 0.0;
  int n_resamples = 0;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  ResamplingUnit unit = ResamplingUnit::frames;
};

/// Metric over a selection of records; throws MetricError when undefined on it.
using MetricFn = std::function<double(const PredictionView&)>;

MetricFn balanced_accuracy_metric(std::set<PhoneId> phones_included);

/// Percentile interval at level 1 - alpha. Resample i draws from a generator
/// seeded by (seed, i), so results do not depend on evaluation order.
BootstrapCI bootstrap_ci(const PredictionSet& preds, const MetricFn& metric, const BootstrapOptions& options);

/// Linear-interpolated quantile of sorted data (q in [0, 1]).
double quantile_sorted(const std::vector<double>& sorted, double q);

// ---------------------------------------------------------------- confusion

/// Rows are true phones, columns predicted phones. `percent` is row-normalised
/// (rows without samples are zero and flagged in `empty_rows`).
struct ConfusionMatrix {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  Eigen::MatrixXd counts;
  Eigen::MatrixXd percent;
  std::vector<bool> empty_rows;

  /// Builds a matrix from already-normalised percentages (counts left empty).
  static ConfusionMatrix from_percent(std::vector<std::string> rows, std::vector<std::string> cols,
                                      Eigen::MatrixXd percent);
  double at(const std::string& true_phone, const std::string& predicted_phone) const;
};

ConfusionMatrix confusion_matrix(const PredictionSet& preds, const PhoneInventory& inventory);

struct PhoneClassGroup {
  std::string name;  // "obstruents", "oral_nasal" or a custom name
  std::vector<std::string> members;
};

std::vector<PhoneClassGroup> load_phone_groups(const std::filesystem::path& path);
std::filesystem::path default_phone_groups_path();

enum class SubmatrixColumns { full, restricted };

/// Rows restricted to the group; columns full (default) or restricted.
ConfusionMatrix submatrix(const ConfusionMatrix& matrix, const PhoneClassGroup& group,
                          SubmatrixColumns columns = SubmatrixColumns::full);

struct ConfusionChange {
  std::string true_phone;
  std::string predicted_phone;
  double before = 0.0;
  double after = 0.0;
  double delta = 0.0;
};

struct MatrixComparison {
  Eigen::MatrixXd delta;  // b - a
  std::vector<ConfusionChange> ranked;  // off-diagonal, largest |delta| first
};

MatrixComparison compare_matrices(const ConfusionMatrix& a, const ConfusionMatrix& b);

// ---------------------------------------------------------------- serialization

nlohmann::json to_json(const BalancedAccuracyResult& r, const PhoneInventory& inventory);
nlohmann::json to_json(const BootstrapCI& ci);
BootstrapCI bootstrap_ci_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConfusionMatrix& m);
ConfusionMatrix confusion_matrix_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MatrixComparison& c, std::size_t top = 20);

/// Heatmap-ready CSV: first row "true\predicted" + column labels, one row per true phone.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m);
void write_predictions_csv(const std::filesystem::path& path, const PredictionSet& preds,
                           const PhoneInventory& inventory);
PredictionSet read_predictions_csv(const std::filesystem::path& path, const PhoneInventory& inventory);

}  // namespace phonecls
