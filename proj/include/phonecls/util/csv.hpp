#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace phonecls::csv {

using Row = std::vector<std::string>;

// A parsed CSV file. `header` is empty when the file was read without one.
struct Table {
  Row header;
  std::vector<Row> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Column index by name; throws ParseError naming the source when absent.
  std::size_t column(std::string_view name, const std::string& source) const;
};

// RFC-4180 style field splitting (double-quote escaping, no embedded newlines).
Row split_line(std::string_view line);

Table read(const std::filesystem::path& path, bool has_header = true);
Table parse(std::istream& in, const std::string& source, bool has_header = true);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

// Shortest round-trippable decimal representation.
std::string format_double(double value);

double to_double(const std::string& field, const std::string& source, std::size_t line);
long to_long(const std::string& field, const std::string& source, std::size_t line);

}  // namespace phonecls::csv
