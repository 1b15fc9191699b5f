#include <algorithm>
#include <cmath>
#include <fstream>

#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"

namespace phonecls {

namespace {

Eigen::MatrixXd row_normalize(const Eigen::MatrixXd& counts, std::vector<bool>& empty_rows) {
  Eigen::MatrixXd percent = Eigen::MatrixXd::Zero(counts.rows(), counts.cols());
  empty_rows.assign(static_cast<std::size_t>(counts.rows()), false);
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    const double total = counts.row(i).sum();
    if (total <= 0.0) {
      empty_rows[static_cast<std::size_t>(i)] = true;
      continue;
    }
    percent.row(i) = counts.row(i) * 100.0 / total;
  }
  return percent;
}

Eigen::Index label_index(const std::vector<std::string>& labels, const std::string& label) {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<Eigen::Index>(it - labels.begin());
}

}  // namespace

ConfusionMatrix ConfusionMatrix::from_percent(std::vector<std::string> rows, std::vector<std::string> cols,
                                              Eigen::MatrixXd percent) {
  if (percent.rows() != static_cast<Eigen::Index>(rows.size()) ||
      percent.cols() != static_cast<Eigen::Index>(cols.size())) {
    throw ContractError("confusion matrix shape does not match its labels");
  }
  ConfusionMatrix m;
  m.row_labels = std::move(rows);
  m.col_labels = std::move(cols);
  m.empty_rows.resize(m.row_labels.size());
  for (Eigen::Index i = 0; i < percent.rows(); ++i) {
    m.empty_rows[static_cast<std::size_t>(i)] = percent.row(i).isZero(0.0);
  }
  m.percent = std::move(percent);
  return m;
}

double ConfusionMatrix::at(const std::string& true_phone, const std::string& predicted_phone) const {
  const auto i = label_index(row_labels, true_phone);
  const auto j = label_index(col_labels, predicted_phone);
  if (i < 0 || j < 0) throw GroupError("no cell (" + true_phone + ", " + predicted_phone + ") in confusion matrix");
  return percent(i, j);
}

ConfusionMatrix confusion_matrix(const PredictionSet& preds, const PhoneInventory& inventory) {
  if (preds.empty()) throw MetricError("confusion matrix of an empty prediction set");
  preds.validate();
  const auto n = static_cast<Eigen::Index>(inventory.size());
  ConfusionMatrix m;
  m.row_labels = inventory.symbols();
  m.col_labels = inventory.symbols();
  m.counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& r : preds.records) {
    if (r.true_label >= n || r.predicted_label >= n) {
      throw MetricError("prediction label outside the inventory");
    }
    m.counts(r.true_label, r.predicted_label) += 1.0;
  }
  m.percent = row_normalize(m.counts, m.empty_rows);
  return m;
}

std::vector<PhoneClassGroup> load_phone_groups(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GroupError("cannot open phone group file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw GroupError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw GroupError(path.string() + ": expected an object of group name -> phone list");
  std::vector<PhoneClassGroup> groups;
  for (const auto& [name, members] : j.items()) {
    if (!members.is_array()) throw GroupError(path.string() + ": group '" + name + "' is not a list");
    PhoneClassGroup g{name, {}};
    for (const auto& m : members) {
      if (!m.is_string()) throw GroupError(path.string() + ": group '" + name + "' has a non-string member");
      g.members.push_back(m.get<std::string>());
    }
    if (g.members.empty()) throw GroupError(path.string() + ": group '" + name + "' is empty");
    groups.push_back(std::move(g));
  }
  return groups;
}

std::filesystem::path default_phone_groups_path() {
  return std::filesystem::path(PHONECLS_DATA_DIR) / "phone_groups.json";
}

ConfusionMatrix submatrix(const ConfusionMatrix& matrix, const PhoneClassGroup& group, SubmatrixColumns columns) {
  std::vector<Eigen::Index> rows, cols;
  for (const auto& member : group.members) {
    const auto i = label_index(matrix.row_labels, member);
    if (i < 0) throw GroupError("group '" + group.name + "': phone '" + member + "' is not a matrix row");
    rows.push_back(i);
    if (columns == SubmatrixColumns::restricted) {
      const auto j = label_index(matrix.col_labels, member);
      if (j < 0) throw GroupError("group '" + group.name + "': phone '" + member + "' is not a matrix column");
      cols.push_back(j);
    }
  }
  if (columns == SubmatrixColumns::full) {
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(matrix.col_labels.size()); ++j) cols.push_back(j);
  }

  ConfusionMatrix out;
  for (auto i : rows) {
    out.row_labels.push_back(matrix.row_labels[static_cast<std::size_t>(i)]);
    out.empty_rows.push_back(matrix.empty_rows[static_cast<std::size_t>(i)]);
  }
  for (auto j : cols) out.col_labels.push_back(matrix.col_labels[static_cast<std::size_t>(j)]);
  out.percent = matrix.percent(rows, cols);
  if (matrix.counts.size() > 0) out.counts = matrix.counts(rows, cols);
  return out;
}

MatrixComparison compare_matrices(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.row_labels != b.row_labels || a.col_labels != b.col_labels) {
    throw ContractError("cannot compare confusion matrices with different label sets");
  }
  MatrixComparison c;
  c.delta = b.percent - a.percent;
  for (Eigen::Index i = 0; i < c.delta.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.delta.cols(); ++j) {
      const auto& t = a.row_labels[static_cast<std::size_t>(i)];
      const auto& p = a.col_labels[static_cast<std::size_t>(j)];
      if (t == p) continue;
      c.ranked.push_back({t, p, a.percent(i, j), b.percent(i, j), c.delta(i, j)});
    }
  }
  std::stable_sort(c.ranked.begin(), c.ranked.end(), [](const ConfusionChange& x, const ConfusionChange& y) {
    return std::abs(x.delta) > std::abs(y.delta);
  });
  return c;
}

}  // namespace phonecls
