#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonecls/evaluation.hpp"

namespace phonecls {

struct ExpertRating {
  std::string speaker_id;
  std::string rater_id;
  std::optional<double> severity;  // 0 (strong alterations) .. 10 (perfect speech)
  std::optional<double> intelligibility;
};

struct SpeakerScore {
  std::string speaker_id;
  std::optional<double> mean_severity;
  std::optional<double> mean_intelligibility;
  int n_raters = 0;

  /// Fewer raters than the usual expert panel of six.
  bool few_raters() const { return n_raters < 6; }
};

enum class RatingDimension { severity, intelligibility };
std::string to_string(RatingDimension d);
RatingDimension parse_rating_dimension(const std::string& text);

/// CSV with columns speaker_id, rater_id, severity, intelligibility; empty
/// score cells are allowed. Throws ValidationError for scores outside [0, 10].
std::vector<ExpertRating> read_ratings_csv(const std::filesystem::path& path);
void write_ratings_csv(const std::filesystem::path& path, const std::vector<ExpertRating>& ratings);

/// Per-speaker unweighted mean of each dimension over the raters that scored
/// it, ordered by speaker_id.
std::vector<SpeakerScore> average_ratings(const std::vector<ExpertRating>& ratings);

/// Phone-balanced accuracy (percent) per speaker, averaging only the phones
/// the speaker produced. Phones in `excluded` are ignored entirely.
std::map<std::string, double> speaker_balanced_accuracy(const PredictionSet& preds,
                                                        const std::set<PhoneId>& excluded = {});

/// Product-moment correlation; needs n >= 3 and non-zero variance in both.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line y = slope * x + intercept.
LineFit linear_fit(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct CorrelationResult {
  double r = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  int n_speakers = 0;

  nlohmann::json to_json() const;
  static CorrelationResult from_json(const nlohmann::json& j);
};

CorrelationResult correlate(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct ScatterRow {
  std::string speaker_id;
  double score = 0.0;
  double accuracy = 0.0;
  std::string cohort;
};

struct ScatterExclusion {
  std::string speaker_id;
  std::string reason;
};

struct ScatterExport {
  RatingDimension dimension = RatingDimension::severity;
  std::vector<ScatterRow> rows;  // ordered by speaker_id
  std::vector<ScatterExclusion> exclusions;
  std::optional<CorrelationResult> fit;  // present when at least three speakers overlap
};

/// Joins scores and accuracies by speaker. Speakers missing either value are
/// listed as exclusions. Throws ExportError when no speaker has both.
ScatterExport build_scatter(const std::vector<SpeakerScore>& scores, const std::map<std::string, double>& accuracies,
                            RatingDimension dimension, const std::map<std::string, std::string>& cohorts = {});

/// Writes {prefix}.csv (speaker_id, score, balanced_accuracy, cohort),
/// {prefix}.fit.json and {prefix}.exclusions.csv.
ScatterExport scatter_export(const std::vector<SpeakerScore>& scores, const std::map<std::string, double>& accuracies,
                             RatingDimension dimension, const std::filesystem::path& prefix,
                             const std::map<std::string, std::string>& cohorts = {});

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path);

/// speaker_id -> cohort tag (e.g. patient, control) from a two-column CSV.
std::map<std::string, std::string> read_cohorts_csv(const std::filesystem::path& path);

}  // namespace phonecls
