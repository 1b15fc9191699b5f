#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

using nlohmann::json;

namespace {

class SchemaCheck {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) problems_.push_back(what);
  }
  bool number(const json& j, const std::string& key, const std::string& where) {
    const bool ok = j.is_object() && j.contains(key) && j.at(key).is_number();
    require(ok, where + "." + key + " must be a number");
    return ok;
  }
  bool object(const json& j, const std::string& key, const std::string& where) {
    const bool ok = j.is_object() && j.contains(key) && j.at(key).is_object();
    require(ok, where + "." + key + " must be an object");
    return ok;
  }
  void raise() const {
    if (problems_.empty()) return;
    std::string msg = "report does not match schema version " + std::to_string(kReportSchemaVersion) + ":";
    for (const auto& p : problems_) msg += "\n  " + p;
    throw ValidationError(msg);
  }

 private:
  std::vector<std::string> problems_;
};

void check_matrix(SchemaCheck& check, const json& m, const std::string& where) {
  if (!m.is_object() || !m.contains("row_labels") || !m.contains("col_labels") || !m.contains("percent") ||
      !m.contains("empty_rows")) {
    check.require(false, where + " must have row_labels, col_labels, percent and empty_rows");
    return;
  }
  const auto& rows = m.at("percent");
  const auto n_rows = m.at("row_labels").size();
  const auto n_cols = m.at("col_labels").size();
  check.require(rows.is_array() && rows.size() == n_rows, where + ".percent row count != row_labels");
  if (!rows.is_array()) return;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check.require(rows[i].is_array() && rows[i].size() == n_cols, where + ".percent row " + std::to_string(i) + " width");
  }
}

void check_test_entry(SchemaCheck& check, const json& e, const std::string& where, bool full_columns) {
  if (check.object(e, "balanced_accuracy", where)) {
    const auto& ba = e.at("balanced_accuracy");
    if (check.number(ba, "value", where + ".balanced_accuracy")) {
      const double v = ba.at("value").get<double>();
      check.require(v >= 0.0 && v <= 100.0, where + ".balanced_accuracy.value outside [0, 100]");
    }
    check.object(ba, "per_phone", where + ".balanced_accuracy");
    check.require(ba.contains("phones_included") && ba.at("phones_included").is_array(),
                  where + ".balanced_accuracy.phones_included must be a list");
  }
  if (check.object(e, "ci", where)) {
    const auto& ci = e.at("ci");
    const auto w = where + ".ci";
    if (check.number(ci, "low", w) && check.number(ci, "high", w) && check.number(ci, "point", w) &&
        check.number(ci, "half_width", w)) {
      check.require(ci.at("low").get<double>() <= ci.at("point").get<double>() &&
                        ci.at("point").get<double>() <= ci.at("high").get<double>(),
                    w + " must satisfy low <= point <= high");
      check.require(ci.at("half_width").get<double>() >= 0.0, w + ".half_width must be >= 0");
    }
    check.number(ci, "alpha", w);
    check.number(ci, "n_resamples", w);
    check.number(ci, "seed", w);
  }
  check.number(e, "micro_accuracy", where);
  check.number(e, "n_frames", where);
  if (check.object(e, "confusion", where)) check_matrix(check, e.at("confusion"), where + ".confusion");
  if (check.object(e, "groups", where)) {
    check.require(!e.at("groups").empty(), where + ".groups is empty");
    for (const auto& [name, m] : e.at("groups").items()) {
      check_matrix(check, m, where + ".groups." + name);
      if (full_columns && m.is_object() && m.contains("col_labels") && e.contains("confusion")) {
        check.require(m.at("col_labels") == e.at("confusion").at("col_labels"),
                      where + ".groups." + name + " must keep every confusion column");
      }
    }
  }
}

}  // namespace

void validate_report(const json& report) {
  SchemaCheck check;
  if (!report.is_object()) {
    check.require(false, "report must be a JSON object");
    check.raise();
  }
  check.require(report.contains("schema_version") && report.at("schema_version") == kReportSchemaVersion,
                "schema_version must be " + std::to_string(kReportSchemaVersion));
  check.require(report.contains("run_id") && report.at("run_id").is_string(), "run_id must be a string");
  std::vector<std::string> test_corpora;
  if (check.object(report, "config", "report")) {
    const auto& c = report.at("config");
    if (c.contains("test_corpora") && c.at("test_corpora").is_array()) {
      for (const auto& t : c.at("test_corpora")) test_corpora.push_back(t.get<std::string>());
    } else {
      check.require(false, "report.config.test_corpora must be a list");
    }
    check.require(c.contains("run_id") && report.contains("run_id") && c.at("run_id") == report.at("run_id"),
                  "report.config.run_id must equal run_id");
  }
  if (check.object(report, "training", "report")) {
    const auto& t = report.at("training");
    check.require(t.contains("epochs") && t.at("epochs").is_array() && !t.at("epochs").empty(),
                  "report.training.epochs must be a non-empty list");
    if (check.object(t, "best", "report.training")) check.number(t.at("best"), "epoch", "report.training.best");
  }
  check.object(report, "inventory", "report");
  check.object(report, "corpora", "report");
  if (check.object(report, "test", "report")) {
    const auto& test = report.at("test");
    for (const auto& tag : test_corpora) {
      if (!test.contains(tag)) {
        check.require(false, "report.test has no entry for test corpus '" + tag + "'");
        continue;
      }
      check_test_entry(check, test.at(tag), "report.test." + tag, true);
    }
  }
  check.require(report.contains("correlation") && (report.at("correlation").is_null() || report.at("correlation").is_object()),
                "report.correlation must be null or an object");
  check.raise();
}

json load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open report " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

ComparisonTable tabulate(const std::vector<json>& reports) {
  if (reports.empty()) throw TabulationError("no reports to tabulate");
  ComparisonTable table;
  auto corpora_of = [](const json& r) {
    std::vector<std::string> tags;
    if (r.contains("config") && r.at("config").contains("test_corpora")) {
      tags = r.at("config").at("test_corpora").get<std::vector<std::string>>();
    } else if (r.contains("test")) {
      for (const auto& [tag, v] : r.at("test").items()) tags.push_back(tag);
    }
    return tags;
  };
  table.columns = corpora_of(reports.front());
  const std::set<std::string> expected(table.columns.begin(), table.columns.end());

  std::vector<std::string> mismatches;
  std::set<std::string> run_ids;
  for (const auto& r : reports) {
    const auto id = r.value("run_id", std::string("?"));
    if (!run_ids.insert(id).second) mismatches.push_back("run " + id + ": duplicate run_id");
    const auto tags = corpora_of(r);
    const std::set<std::string> got(tags.begin(), tags.end());
    for (const auto& t : expected) {
      if (!got.count(t)) mismatches.push_back("run " + id + ": missing test corpus " + t);
    }
    for (const auto& t : got) {
      if (!expected.count(t)) mismatches.push_back("run " + id + ": unexpected test corpus " + t);
    }
  }
  if (!mismatches.empty()) {
    std::string msg = "reports do not share one set of test corpora:";
    for (const auto& m : mismatches) msg += "\n  " + m;
    throw TabulationError(msg);
  }

  for (const auto& r : reports) {
    table.run_ids.push_back(r.at("run_id").get<std::string>());
    std::vector<TableCell> row;
    for (const auto& tag : table.columns) {
      try {
        const auto& e = r.at("test").at(tag);
        TableCell cell;
        cell.value = e.at("balanced_accuracy").at("value").get<double>();
        const auto& ci = e.at("ci");
        cell.low = ci.at("low").get<double>();
        cell.high = ci.at("high").get<double>();
        cell.half_width = ci.at("half_width").get<double>();
        row.push_back(cell);
      } catch (const json::exception& ex) {
        throw TabulationError("run " + table.run_ids.back() + ", corpus " + tag + ": " + ex.what());
      }
    }
    table.cells.push_back(std::move(row));
  }

  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    double best = -1.0;
    for (const auto& row : table.cells) best = std::max(best, row[c].value);
    std::vector<std::size_t> best_rows;
    for (std::size_t r = 0; r < table.cells.size(); ++r) {
      if (table.cells[r][c].value == best) {
        table.cells[r][c].best = true;
        best_rows.push_back(r);
      }
    }
    // Significant: a unique best whose interval lies strictly above every other row's.
    if (best_rows.size() == 1 && table.cells.size() > 1) {
      const auto& b = table.cells[best_rows[0]][c];
      bool separated = true;
      for (std::size_t r = 0; r < table.cells.size(); ++r) {
        if (r != best_rows[0] && !(b.low > table.cells[r][c].high)) separated = false;
      }
      table.cells[best_rows[0]][c].significant = separated;
    }
  }
  return table;
}

void write_table_csv(const std::filesystem::path& path, const ComparisonTable& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ExportError("cannot write " + path.string());
  csv::Row header{"run_id"};
  for (const auto& c : table.columns) {
    for (const char* suffix : {"", "_half_width", "_low", "_high", "_best", "_significant"}) header.push_back(c + suffix);
  }
  csv::write_row(out, header);
  for (std::size_t r = 0; r < table.run_ids.size(); ++r) {
    csv::Row row{table.run_ids[r]};
    for (const auto& cell : table.cells[r]) {
      row.push_back(csv::format_double(cell.value));
      row.push_back(csv::format_double(cell.half_width));
      row.push_back(csv::format_double(cell.low));
      row.push_back(csv::format_double(cell.high));
      row.push_back(cell.best ? "1" : "0");
      row.push_back(cell.significant ? "1" : "0");
    }
    csv::write_row(out, row);
  }
}

std::string format_table(const ComparisonTable& table) {
  auto fixed2 = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
  };
  std::vector<std::vector<std::string>> grid;
  grid.push_back({"run_id"});
  for (const auto& c : table.columns) grid.back().push_back(c);
  for (std::size_t r = 0; r < table.run_ids.size(); ++r) {
    std::vector<std::string> line{table.run_ids[r]};
    for (const auto& cell : table.cells[r]) {
      std::string text = fixed2(cell.value) + " +/- " + fixed2(cell.half_width);
      if (cell.best) text += " *";
      if (cell.significant) text += "!";
      line.push_back(text);
    }
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(grid.front().size(), 0);
  for (const auto& line : grid) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::ostringstream out;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    for (std::size_t i = 0; i < grid[l].size(); ++i) {
      out << (i ? " | " : "") << grid[l][i] << std::string(width[i] - grid[l][i].size(), ' ');
    }
    out << '\n';
    if (l == 0) {
      for (std::size_t i = 0; i < width.size(); ++i) out << (i ? "-+-" : "") << std::string(width[i], '-');
      out << '\n';
    }
  }
  out << "* best in column, ! confidence interval overlaps no other run\n";
  return out.str();
}

}  // namespace phonecls
