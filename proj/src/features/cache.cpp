#include <cstring>
#include <fstream>

#include "json.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/features.hpp"

namespace phonecls {

namespace {

constexpr char kMagic[8] = {'P', 'H', 'F', 'E', 'A', 'T', '0', '1'};

std::string header_json(InputKind kind, const MelConfig& c) {
  nlohmann::json j = {{"kind", to_string(kind)},
                      {"sample_rate_hz", c.sample_rate_hz},
                      {"frame_length_s", c.frame_length_s},
                      {"frame_hop_s", c.frame_hop_s},
                      {"n_mels", c.n_mels},
                      {"context_frames", c.context_frames},
                      {"f_min_hz", c.f_min_hz},
                      {"f_max_hz", c.f_max_hz},
                      {"normalize", c.normalize}};
  return j.dump();
}

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
bool get(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

}  // namespace

void FeatureCache::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature cache " + path.string());
  const std::string header = header_json(kind, config);
  out.write(kMagic, sizeof(kMagic));
  put(out, static_cast<std::uint64_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put(out, static_cast<std::uint64_t>(utterance_ids.size()));
  put(out, static_cast<std::uint64_t>(inputs.rows()));
  for (std::size_t i = 0; i < utterance_ids.size(); ++i) {
    put(out, static_cast<std::uint32_t>(utterance_ids[i].size()));
    out.write(utterance_ids[i].data(), static_cast<std::streamsize>(utterance_ids[i].size()));
    put(out, centers_s[i]);
    out.write(reinterpret_cast<const char*>(inputs.col(static_cast<Eigen::Index>(i)).data()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<std::size_t>(inputs.rows())));
  }
}

std::optional<FeatureCache> FeatureCache::read(const std::filesystem::path& path, InputKind kind,
                                               const MelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) return std::nullopt;
  std::uint64_t header_size = 0;
  if (!get(in, header_size) || header_size > (1u << 20)) return std::nullopt;
  std::string header(header_size, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_size))) return std::nullopt;
  if (header != header_json(kind, config)) return std::nullopt;
  std::uint64_t n = 0, rows = 0;
  if (!get(in, n) || !get(in, rows)) return std::nullopt;
  if (rows != static_cast<std::uint64_t>(input_size(kind, config))) return std::nullopt;

  FeatureCache cache;
  cache.kind = kind;
  cache.config = config;
  cache.inputs.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(n));
  cache.utterance_ids.reserve(n);
  cache.centers_s.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint32_t len = 0;
    if (!get(in, len)) return std::nullopt;
    std::string id(len, '\0');
    double center = 0.0;
    if (!in.read(id.data(), len) || !get(in, center)) return std::nullopt;
    if (!in.read(reinterpret_cast<char*>(cache.inputs.col(static_cast<Eigen::Index>(i)).data()),
                 static_cast<std::streamsize>(sizeof(float) * rows))) {
      return std::nullopt;
    }
    cache.utterance_ids.push_back(std::move(id));
    cache.centers_s.push_back(center);
  }
  return cache;
}

bool FeatureCache::matches(const std::vector<FrameRecord>& frames) const {
  if (frames.size() != utterance_ids.size()) return false;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].utterance_id != utterance_ids[i] || frames[i].center_s != centers_s[i]) return false;
  }
  return true;
}

}  // namespace phonecls
