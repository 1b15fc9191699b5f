#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <memory>
#include <type_traits>

#include "phonecls/models/classifier.hpp"

namespace phonecls {

/// Everything in a checkpoint file except the parameter data.
struct CheckpointHeader {
  ModelConfig model;
  std::uint64_t inventory_hash = 0;
  std::string dtype;  // "f32" | "f64"
  std::vector<std::string> tensor_names;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> tensor_shapes;
  nlohmann::json extra;  // free-form (training config snapshot, epoch, ...)
};

namespace detail {
void write_checkpoint_header(std::ostream& out, const CheckpointHeader& header);
CheckpointHeader read_checkpoint_header(std::istream& in, const std::filesystem::path& path);
}  // namespace detail

template <typename Scalar>
constexpr const char* dtype_name() {
  return std::is_same_v<Scalar, float> ? "f32" : "f64";
}

/// Binary checkpoint: magic, JSON header (model config, inventory hash,
/// tensor table, extra), then raw column-major tensor data.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, PhoneClassifier<Scalar>& model,
                     std::uint64_t inventory_hash, const nlohmann::json& extra = nlohmann::json::object()) {
  CheckpointHeader header;
  header.model = model.config();
  header.inventory_hash = inventory_hash;
  header.dtype = dtype_name<Scalar>();
  header.extra = extra;
  const auto params = model.all_parameters();
  for (const auto* p : params) {
    header.tensor_names.push_back(p->name);
    header.tensor_shapes.emplace_back(p->value.rows(), p->value.cols());
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    detail::write_checkpoint_header(out, header);
    for (const auto* p : params) {
      out.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(p->value.size())));
    }
    if (!out) throw CheckpointError("short write on checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

/// Rebuilds the model from the embedded config and fills its parameters.
/// When `expected_inventory_hash` is given, a mismatch is a CheckpointError.
template <typename Scalar>
std::unique_ptr<PhoneClassifier<Scalar>> load_checkpoint(const std::filesystem::path& path,
                                                         std::optional<std::uint64_t> expected_inventory_hash = {},
                                                         CheckpointHeader* header_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  auto header = detail::read_checkpoint_header(in, path);
  if (header.dtype != dtype_name<Scalar>()) throw CheckpointError(path.string() + ": dtype " + header.dtype);
  if (expected_inventory_hash && *expected_inventory_hash != header.inventory_hash) {
    throw CheckpointError(path.string() + ": checkpoint was trained on a different phone inventory");
  }
  auto model = std::make_unique<PhoneClassifier<Scalar>>(header.model);
  const auto params = model->all_parameters();
  if (params.size() != header.tensor_names.size()) throw CheckpointError(path.string() + ": tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    if (p->name != header.tensor_names[i] || p->value.rows() != header.tensor_shapes[i].first ||
        p->value.cols() != header.tensor_shapes[i].second) {
      throw CheckpointError(path.string() + ": tensor '" + header.tensor_names[i] + "' does not fit the model");
    }
    if (!in.read(reinterpret_cast<char*>(p->value.data()),
                 static_cast<std::streamsize>(sizeof(Scalar) * static_cast<std::size_t>(p->value.size())))) {
      throw CheckpointError(path.string() + ": truncated tensor data");
    }
  }
  if (header_out) *header_out = std::move(header);
  return model;
}

}  // namespace phonecls
