#include <cstring>
#include <fstream>

#include "phonecls/models/checkpoint.hpp"

namespace phonecls {

namespace {
constexpr char kMagic[8] = {'P', 'H', 'C', 'K', 'P', 'T', '0', '1'};
}

namespace detail {

void write_checkpoint_header(std::ostream& out, const CheckpointHeader& header) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < header.tensor_names.size(); ++i) {
    tensors.push_back({{"name", header.tensor_names[i]},
                       {"rows", header.tensor_shapes[i].first},
                       {"cols", header.tensor_shapes[i].second}});
  }
  const nlohmann::json j = {{"model", header.model.to_json()},
                            {"inventory_hash", header.inventory_hash},
                            {"dtype", header.dtype},
                            {"tensors", tensors},
                            {"extra", header.extra}};
  const std::string text = j.dump();
  const std::uint64_t size = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&size), sizeof(size));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

CheckpointHeader read_checkpoint_header(std::istream& in, const std::filesystem::path& path) {
  char magic[8];
  std::uint64_t size = 0;
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  if (!in.read(reinterpret_cast<char*>(&size), sizeof(size)) || size > (1u << 26)) {
    throw CheckpointError(path.string() + ": corrupt header");
  }
  std::string text(size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(size))) throw CheckpointError(path.string() + ": truncated header");
  CheckpointHeader header;
  try {
    const auto j = nlohmann::json::parse(text);
    header.model = ModelConfig::from_json(j.at("model"));
    header.inventory_hash = j.at("inventory_hash").get<std::uint64_t>();
    header.dtype = j.at("dtype").get<std::string>();
    for (const auto& t : j.at("tensors")) {
      header.tensor_names.push_back(t.at("name").get<std::string>());
      header.tensor_shapes.emplace_back(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    }
    header.extra = j.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  return header;
}

}  // namespace detail

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  return detail::read_checkpoint_header(in, path);
}

}  // namespace phonecls
