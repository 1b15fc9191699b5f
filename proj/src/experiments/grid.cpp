#include <cctype>
#include <set>

#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"

namespace phonecls {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : path) {
    if (ch == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("malformed factor path '" + path + "'");
  }
  return parts;
}

std::string slug(const json& value) {
  std::string text = value.is_string() ? value.get<std::string>() : value.dump();
  for (char& ch : text) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  }
  return text;
}

}  // namespace

void set_dotted(json& j, const std::string& path, const json& value) {
  json* node = &j;
  const auto parts = split_path(path);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("factor path '" + path + "' crosses a non-object value");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError("factor path '" + path + "' crosses a non-object value");
  (*node)[parts.back()] = value;
}

std::vector<GridEntry> expand_grid(const json& tmpl) {
  if (!tmpl.is_object() || !tmpl.contains("base") || !tmpl.at("base").is_object()) {
    throw ConfigError("grid template needs a 'base' config object");
  }
  const auto& base = tmpl.at("base");
  if (!base.contains("run_id") || !base.at("run_id").is_string()) throw ConfigError("grid base config needs a run_id");
  const json factors = tmpl.value("factors", json::object());
  if (!factors.is_object()) throw ConfigError("grid 'factors' must map paths to value lists");
  for (const auto& [path, values] : factors.items()) {
    if (!values.is_array() || values.empty()) throw ConfigError("grid factor '" + path + "' needs a non-empty value list");
    if (path == "run_id") throw ConfigError("run_id cannot be a grid factor");
  }

  std::vector<GridEntry> out{{base.at("run_id").get<std::string>(), base}};
  for (const auto& [path, values] : factors.items()) {
    const auto name = split_path(path).back();
    std::vector<GridEntry> next;
    for (const auto& entry : out) {
      for (const auto& v : values) {
        GridEntry e = entry;
        set_dotted(e.config, path, v);
        e.run_id += "-" + name + "." + slug(v);
        next.push_back(std::move(e));
      }
    }
    out = std::move(next);
  }

  std::set<std::string> ids;
  for (auto& e : out) {
    if (!ids.insert(e.run_id).second) throw ConfigError("grid produces duplicate run_id '" + e.run_id + "'");
    e.config["run_id"] = e.run_id;
  }
  return out;
}

}  // namespace phonecls
