#include "phonecls/util/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "phonecls/errors.hpp"

namespace phonecls::csv {

std::size_t Table::column(std::string_view name, const std::string& source) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw ParseError(source, 1, "missing column '" + std::string(name) + "'");
}

Row split_line(std::string_view line) {
  Row fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

static std::string_view trim_eol(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
  // UTF-8 byte order mark
  if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") line.remove_prefix(3);
  return line;
}

Table parse(std::istream& in, const std::string& source, bool has_header) {
  Table table;
  std::string raw;
  std::size_t line_no = 0;
  bool header_pending = has_header;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim_eol(raw);
    if (line.empty()) continue;
    Row row = split_line(line);
    if (header_pending) {
      table.header = std::move(row);
      header_pending = false;
      continue;
    }
    if (!table.header.empty() && row.size() != table.header.size()) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(table.header.size()) + " fields, got " +
                           std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  return table;
}

Table read(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse(in, path.string(), has_header);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << escape(row[i]);
  }
  out << '\n';
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

double to_double(const std::string& field, const std::string& source, std::size_t line) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && *first == ' ') ++first;
  if (first < last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(source, line, "not a number: '" + field + "'");
  }
  return value;
}

long to_long(const std::string& field, const std::string& source, std::size_t line) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw ParseError(source, line, "not an integer: '" + field + "'");
  }
  return value;
}

}  // namespace phonecls::csv
