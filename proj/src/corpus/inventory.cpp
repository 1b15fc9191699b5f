#include <fstream>
#include <set>
#include <sstream>

#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"

namespace phonecls {

std::string to_string(Gender gender) {
  switch (gender) {
    case Gender::female:
      return "F";
    case Gender::male:
      return "M";
    case Gender::unknown:
      break;
  }
  return "unknown";
}

Gender parse_gender(std::string_view text) {
  if (text == "F" || text == "f" || text == "female") return Gender::female;
  if (text == "M" || text == "m" || text == "male") return Gender::male;
  return Gender::unknown;
}

PhoneInventory::PhoneInventory(std::vector<std::string> phones, std::string silence,
                               std::map<std::string, std::string> merges)
    : symbols_(std::move(phones)), merges_(std::move(merges)) {
  if (static_cast<int>(symbols_.size()) != kPhoneCount) {
    throw InventoryError("inventory must list exactly " + std::to_string(kPhoneCount) +
                         " phones, found " + std::to_string(symbols_.size()));
  }
  if (silence.empty()) throw InventoryError("inventory has no silence symbol");
  symbols_.push_back(std::move(silence));
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) throw InventoryError("empty phone symbol");
    if (!index_.emplace(symbols_[i], static_cast<PhoneId>(i)).second) {
      throw InventoryError("duplicate symbol '" + symbols_[i] + "'");
    }
  }
  for (const auto& [raw, target] : merges_) {
    if (index_.count(raw)) {
      throw InventoryError("merge source '" + raw + "' is itself an inventory symbol");
    }
    if (!index_.count(target)) {
      throw InventoryError("merge target '" + target + "' is not an inventory symbol");
    }
  }
}

const std::string& PhoneInventory::symbol(PhoneId id) const {
  if (id < 0 || id >= size()) throw MappingError("phone index out of range: " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

std::optional<PhoneId> PhoneInventory::find(std::string_view symbol) const {
  const auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

PhoneId PhoneInventory::index_of(std::string_view symbol) const {
  if (auto id = find(symbol)) return *id;
  throw MappingError("unknown phone symbol '" + std::string(symbol) + "'");
}

const std::string& PhoneInventory::merge(std::string_view raw) const {
  if (auto id = find(raw)) return symbols_[static_cast<std::size_t>(*id)];
  const auto it = merges_.find(std::string(raw));
  if (it == merges_.end()) throw MappingError("unknown phone symbol '" + std::string(raw) + "'");
  return it->second;
}

std::string PhoneInventory::canonical() const {
  std::ostringstream out;
  for (const auto& s : symbols_) out << s << '\n';
  out << "--\n";
  for (const auto& [raw, target] : merges_) out << raw << ' ' << target << '\n';
  return out.str();
}

std::uint64_t PhoneInventory::hash() const {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

PhoneInventory load_inventory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open inventory " + path.string());
  std::vector<std::string> phones;
  std::optional<std::string> silence;
  std::map<std::string, std::string> merges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string keyword;
    if (!(fields >> keyword)) continue;
    std::vector<std::string> args;
    for (std::string arg; fields >> arg;) args.push_back(arg);
    if (keyword == "phone" && args.size() == 1) {
      phones.push_back(args[0]);
    } else if (keyword == "silence" && args.size() == 1) {
      if (silence) throw ParseError(path.string(), line_no, "second silence declaration");
      silence = args[0];
    } else if (keyword == "merge" && args.size() == 2) {
      if (!merges.emplace(args[0], args[1]).second) {
        throw ParseError(path.string(), line_no, "duplicate merge for '" + args[0] + "'");
      }
    } else {
      throw ParseError(path.string(), line_no, "malformed line '" + line + "'");
    }
  }
  if (!silence) throw InventoryError(path.string() + ": no silence symbol declared");
  return PhoneInventory(std::move(phones), std::move(*silence), std::move(merges));
}

std::filesystem::path default_inventory_path() {
  return std::filesystem::path(PHONECLS_DATA_DIR) / "french_inventory.txt";
}

}  // namespace phonecls
