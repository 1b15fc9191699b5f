#include <algorithm>
#include <fstream>
#include <numeric>

#include "phonecls/errors.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

std::string to_string(RatingDimension d) { return d == RatingDimension::severity ? "severity" : "intelligibility"; }

RatingDimension parse_rating_dimension(const std::string& text) {
  if (text == "severity") return RatingDimension::severity;
  if (text == "intelligibility") return RatingDimension::intelligibility;
  throw ConfigError("unknown rating dimension '" + text + "' (expected severity or intelligibility)");
}

namespace {

void check_range(const std::optional<double>& v, const std::string& what, const std::string& where) {
  if (v && !(*v >= 0.0 && *v <= 10.0)) {
    throw ValidationError(where + ": " + what + " " + csv::format_double(*v) + " outside [0, 10]");
  }
}

std::optional<double> optional_score(const std::string& field, const std::string& src, std::size_t line) {
  if (field.empty()) return std::nullopt;
  return csv::to_double(field, src, line);
}

}  // namespace

std::vector<ExpertRating> read_ratings_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto src = path.string();
  const auto c_spk = table.column("speaker_id", src);
  const auto c_rater = table.column("rater_id", src);
  const auto c_sev = table.column("severity", src);
  const auto c_int = table.column("intelligibility", src);
  std::vector<ExpertRating> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = table.line_numbers[i];
    ExpertRating r{row[c_spk], row[c_rater], optional_score(row[c_sev], src, line),
                   optional_score(row[c_int], src, line)};
    if (r.speaker_id.empty()) throw ParseError(src, line, "empty speaker_id");
    const auto where = src + ":" + std::to_string(line);
    check_range(r.severity, "severity", where);
    check_range(r.intelligibility, "intelligibility", where);
    out.push_back(std::move(r));
  }
  return out;
}

void write_ratings_csv(const std::filesystem::path& path, const std::vector<ExpertRating>& ratings) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ExportError("cannot write " + path.string());
  csv::write_row(out, {"speaker_id", "rater_id", "severity", "intelligibility"});
  for (const auto& r : ratings) {
    csv::write_row(out, {r.speaker_id, r.rater_id, r.severity ? csv::format_double(*r.severity) : "",
                         r.intelligibility ? csv::format_double(*r.intelligibility) : ""});
  }
}

std::vector<SpeakerScore> average_ratings(const std::vector<ExpertRating>& ratings) {
  struct Acc {
    std::vector<double> sev, intel;
    std::set<std::string> raters;
  };
  // Sorted before summing so the mean does not depend on rater order.
  auto mean = [](std::vector<double> v) -> std::optional<double> {
    if (v.empty()) return std::nullopt;
    std::sort(v.begin(), v.end());
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  std::map<std::string, Acc> by_speaker;
  for (const auto& r : ratings) {
    const auto where = "rating of speaker " + r.speaker_id + " by " + r.rater_id;
    check_range(r.severity, "severity", where);
    check_range(r.intelligibility, "intelligibility", where);
    auto& a = by_speaker[r.speaker_id];
    a.raters.insert(r.rater_id);
    if (r.severity) a.sev.push_back(*r.severity);
    if (r.intelligibility) a.intel.push_back(*r.intelligibility);
  }
  std::vector<SpeakerScore> out;
  for (const auto& [speaker, a] : by_speaker) {
    SpeakerScore s;
    s.speaker_id = speaker;
    s.mean_severity = mean(a.sev);
    s.mean_intelligibility = mean(a.intel);
    s.n_raters = static_cast<int>(a.raters.size());
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, double> speaker_balanced_accuracy(const PredictionSet& preds, const std::set<PhoneId>& excluded) {
  preds.validate();
  std::map<std::string, std::map<PhoneId, std::pair<long, long>>> tallies;  // speaker -> phone -> (correct, total)
  for (const auto& r : preds.records) {
    if (excluded.count(r.true_label)) continue;
    auto& t = tallies[r.speaker_id][r.true_label];
    t.first += r.predicted_label == r.true_label;
    ++t.second;
  }
  std::map<std::string, double> out;
  for (const auto& [speaker, phones] : tallies) {
    double sum = 0.0;
    for (const auto& [phone, t] : phones) sum += 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second);
    out[speaker] = sum / static_cast<double>(phones.size());
  }
  return out;
}

std::map<std::string, std::string> read_cohorts_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto src = path.string();
  const auto c_spk = table.column("speaker_id", src);
  const auto c_cohort = table.column("cohort", src);
  std::map<std::string, std::string> out;
  for (const auto& row : table.rows) out[row[c_spk]] = row[c_cohort];
  return out;
}

}  // namespace phonecls
