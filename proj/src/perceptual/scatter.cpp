#include <fstream>

#include "phonecls/errors.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

ScatterExport build_scatter(const std::vector<SpeakerScore>& scores, const std::map<std::string, double>& accuracies,
                            RatingDimension dimension, const std::map<std::string, std::string>& cohorts) {
  ScatterExport out;
  out.dimension = dimension;
  std::map<std::string, std::optional<double>> score_of;
  for (const auto& s : scores) {
    score_of[s.speaker_id] = dimension == RatingDimension::severity ? s.mean_severity : s.mean_intelligibility;
  }

  std::set<std::string> speakers;
  for (const auto& [id, v] : score_of) speakers.insert(id);
  for (const auto& [id, v] : accuracies) speakers.insert(id);
  for (const auto& id : speakers) {
    const auto s = score_of.find(id);
    const auto a = accuracies.find(id);
    if (s == score_of.end()) {
      out.exclusions.push_back({id, "no ratings"});
    } else if (!s->second) {
      out.exclusions.push_back({id, "no " + to_string(dimension) + " rating"});
    } else if (a == accuracies.end()) {
      out.exclusions.push_back({id, "no accuracy"});
    } else {
      const auto c = cohorts.find(id);
      out.rows.push_back({id, *s->second, a->second, c == cohorts.end() ? std::string() : c->second});
    }
  }
  if (out.rows.empty()) throw ExportError("no speaker has both a " + to_string(dimension) + " score and an accuracy");

  if (out.rows.size() >= 3) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(out.rows.size()));
    Eigen::VectorXd y(x.size());
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      x[static_cast<Eigen::Index>(i)] = out.rows[i].score;
      y[static_cast<Eigen::Index>(i)] = out.rows[i].accuracy;
    }
    try {
      out.fit = correlate(x, y);
    } catch (const CorrelationError&) {
      // constant scores or accuracies: rows are still exported, without a fit
    } catch (const FitError&) {
    }
  }
  return out;
}

ScatterExport scatter_export(const std::vector<SpeakerScore>& scores, const std::map<std::string, double>& accuracies,
                             RatingDimension dimension, const std::filesystem::path& prefix,
                             const std::map<std::string, std::string>& cohorts) {
  auto out = build_scatter(scores, accuracies, dimension, cohorts);
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  const auto base = prefix.string();

  std::ofstream rows(base + ".csv");
  if (!rows) throw ExportError("cannot write " + base + ".csv");
  csv::write_row(rows, {"speaker_id", to_string(dimension), "balanced_accuracy", "cohort"});
  for (const auto& r : out.rows) {
    csv::write_row(rows, {r.speaker_id, csv::format_double(r.score), csv::format_double(r.accuracy), r.cohort});
  }

  std::ofstream fit(base + ".fit.json");
  if (!fit) throw ExportError("cannot write " + base + ".fit.json");
  nlohmann::json j = {{"dimension", to_string(dimension)}, {"n_rows", out.rows.size()}};
  j["fit"] = out.fit ? out.fit->to_json() : nlohmann::json(nullptr);
  fit << j.dump(2) << '\n';

  std::ofstream excl(base + ".exclusions.csv");
  if (!excl) throw ExportError("cannot write " + base + ".exclusions.csv");
  csv::write_row(excl, {"speaker_id", "reason"});
  for (const auto& e : out.exclusions) csv::write_row(excl, {e.speaker_id, e.reason});
  return out;
}

std::vector<ScatterRow> read_scatter_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const auto src = path.string();
  if (table.header.size() != 4) throw ParseError(src, 1, "expected 4 scatter columns");
  std::vector<ScatterRow> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = table.line_numbers[i];
    out.push_back({row[0], csv::to_double(row[1], src, line), csv::to_double(row[2], src, line), row[3]});
  }
  return out;
}

}  // namespace phonecls
