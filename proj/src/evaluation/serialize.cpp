#include <fstream>

#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

using nlohmann::json;

namespace {

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const json& rows, std::size_t n_rows, std::size_t n_cols) {
  if (!rows.is_array() || rows.size() != n_rows) throw ValidationError("matrix row count does not match labels");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols));
  for (std::size_t i = 0; i < n_rows; ++i) {
    if (!rows[i].is_array() || rows[i].size() != n_cols) {
      throw ValidationError("matrix column count does not match labels");
    }
    for (std::size_t j = 0; j < n_cols; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ExportError("cannot write " + path.string());
  return out;
}

}  // namespace

json to_json(const BalancedAccuracyResult& r, const PhoneInventory& inventory) {
  json per_phone = json::object();
  for (const auto& [p, v] : r.per_phone) per_phone[inventory.symbol(p)] = v;
  json included = json::array();
  for (PhoneId p : r.phones_included) included.push_back(inventory.symbol(p));
  return {{"value", r.value}, {"per_phone", per_phone}, {"phones_included", included}};
}

json to_json(const BootstrapCI& ci) {
  return {{"point", ci.point},           {"low", ci.low},     {"high", ci.high},
          {"half_width", ci.half_width}, {"alpha", ci.alpha}, {"n_resamples", ci.n_resamples},
          {"seed", ci.seed},             {"unit", to_string(ci.unit)}};
}

BootstrapCI bootstrap_ci_from_json(const json& j) {
  try {
    BootstrapCI ci;
    ci.point = j.at("point").get<double>();
    ci.low = j.at("low").get<double>();
    ci.high = j.at("high").get<double>();
    ci.half_width = j.at("half_width").get<double>();
    ci.alpha = j.at("alpha").get<double>();
    ci.n_resamples = j.at("n_resamples").get<int>();
    ci.seed = j.at("seed").get<std::uint64_t>();
    ci.unit = parse_resampling_unit(j.value("unit", std::string("frames")));
    return ci;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed confidence interval: ") + e.what());
  }
}

json to_json(const ConfusionMatrix& m) {
  json j = {{"row_labels", m.row_labels},
            {"col_labels", m.col_labels},
            {"percent", matrix_rows(m.percent)},
            {"empty_rows", m.empty_rows}};
  if (m.counts.size() > 0) j["counts"] = matrix_rows(m.counts);
  return j;
}

ConfusionMatrix confusion_matrix_from_json(const json& j) {
  try {
    ConfusionMatrix m;
    m.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    m.col_labels = j.at("col_labels").get<std::vector<std::string>>();
    m.percent = matrix_from_rows(j.at("percent"), m.row_labels.size(), m.col_labels.size());
    m.empty_rows = j.at("empty_rows").get<std::vector<bool>>();
    if (j.contains("counts")) m.counts = matrix_from_rows(j.at("counts"), m.row_labels.size(), m.col_labels.size());
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed confusion matrix: ") + e.what());
  }
}

json to_json(const MatrixComparison& c, std::size_t top) {
  json ranked = json::array();
  for (std::size_t k = 0; k < c.ranked.size() && k < top; ++k) {
    const auto& ch = c.ranked[k];
    ranked.push_back({{"true", ch.true_phone},
                      {"predicted", ch.predicted_phone},
                      {"before", ch.before},
                      {"after", ch.after},
                      {"delta", ch.delta}});
  }
  return {{"delta", matrix_rows(c.delta)}, {"ranked", ranked}};
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& m) {
  auto out = open_out(path);
  csv::Row header{"true\\predicted"};
  header.insert(header.end(), m.col_labels.begin(), m.col_labels.end());
  csv::write_row(out, header);
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    csv::Row row{m.row_labels[i]};
    for (Eigen::Index j = 0; j < m.percent.cols(); ++j) {
      row.push_back(csv::format_double(m.percent(static_cast<Eigen::Index>(i), j)));
    }
    csv::write_row(out, row);
  }
}

void write_predictions_csv(const std::filesystem::path& path, const PredictionSet& preds,
                           const PhoneInventory& inventory) {
  auto out = open_out(path);
  csv::write_row(out, {"utterance_id", "speaker_id", "true_label", "predicted_label", "true_phone", "predicted_phone"});
  for (const auto& r : preds.records) {
    csv::write_row(out, {r.utterance_id, r.speaker_id, std::to_string(r.true_label), std::to_string(r.predicted_label),
                         inventory.symbol(r.true_label), inventory.symbol(r.predicted_label)});
  }
}

PredictionSet read_predictions_csv(const std::filesystem::path& path, const PhoneInventory& inventory) {
  const auto table = csv::read(path);
  const auto src = path.string();
  const auto c_utt = table.column("utterance_id", src);
  const auto c_spk = table.column("speaker_id", src);
  const auto c_true = table.column("true_label", src);
  const auto c_pred = table.column("predicted_label", src);
  PredictionSet preds;
  preds.n_classes = inventory.size();
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto line = table.line_numbers[i];
    Prediction p;
    p.utterance_id = row[c_utt];
    p.speaker_id = row[c_spk];
    p.true_label = static_cast<PhoneId>(csv::to_long(row[c_true], src, line));
    p.predicted_label = static_cast<PhoneId>(csv::to_long(row[c_pred], src, line));
    if (p.true_label < 0 || p.true_label >= preds.n_classes || p.predicted_label < 0 ||
        p.predicted_label >= preds.n_classes) {
      throw ParseError(src, line, "label outside the inventory");
    }
    preds.records.push_back(std::move(p));
  }
  return preds;
}

}  // namespace phonecls
