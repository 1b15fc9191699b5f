#include <fstream>

#include "json.hpp"
#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

void write_frames_csv(const std::filesystem::path& path, const std::vector<FrameRecord>& frames,
                      const PhoneInventory& inventory) {
  auto out = open_out(path);
  csv::write_row(out, {"utterance_id", "center_s", "label", "phone", "speaker_id", "gender"});
  for (const auto& f : frames) {
    csv::write_row(out, {f.utterance_id, csv::format_double(f.center_s), std::to_string(f.label),
                         inventory.symbol(f.label), f.speaker_id, to_string(f.gender)});
  }
}

std::vector<FrameRecord> read_frames_csv(const std::filesystem::path& path,
                                         const PhoneInventory& inventory) {
  const auto table = csv::read(path);
  const std::string source = path.string();
  const auto c_id = table.column("utterance_id", source);
  const auto c_center = table.column("center_s", source);
  const auto c_label = table.column("label", source);
  const auto c_phone = table.column("phone", source);
  const auto c_speaker = table.column("speaker_id", source);
  const auto c_gender = table.column("gender", source);
  std::vector<FrameRecord> frames;
  frames.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    FrameRecord f;
    f.utterance_id = row[c_id];
    f.center_s = csv::to_double(row[c_center], source, line);
    f.label = static_cast<PhoneId>(csv::to_long(row[c_label], source, line));
    if (f.label < 0 || f.label >= inventory.size() || inventory.symbol(f.label) != row[c_phone]) {
      throw ParseError(source, line, "label/phone mismatch against inventory");
    }
    f.speaker_id = row[c_speaker];
    f.gender = parse_gender(row[c_gender]);
    frames.push_back(std::move(f));
  }
  return frames;
}

void write_frames_jsonl(const std::filesystem::path& path, const std::vector<FrameRecord>& frames,
                        const PhoneInventory& inventory) {
  auto out = open_out(path);
  for (const auto& f : frames) {
    json j = {{"utterance_id", f.utterance_id}, {"center_s", f.center_s}, {"label", f.label},
              {"phone", inventory.symbol(f.label)}, {"speaker_id", f.speaker_id},
              {"gender", to_string(f.gender)}};
    out << j.dump() << '\n';
  }
}

void write_utterances_csv(const std::filesystem::path& path,
                          const std::vector<UtteranceRecord>& utterances) {
  auto out = open_out(path);
  csv::write_row(out, {"utterance_id", "audio_path", "speaker_id", "gender", "corpus_tag"});
  for (const auto& u : utterances) {
    csv::write_row(out, {u.utterance_id, std::filesystem::absolute(u.audio_path).string(),
                         u.speaker_id, to_string(u.gender), u.corpus_tag});
  }
}

std::vector<UtteranceRecord> read_utterances_csv(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::string source = path.string();
  const auto c_id = table.column("utterance_id", source);
  const auto c_audio = table.column("audio_path", source);
  const auto c_speaker = table.column("speaker_id", source);
  const auto c_gender = table.column("gender", source);
  const auto c_tag = table.column("corpus_tag", source);
  std::vector<UtteranceRecord> out;
  for (const auto& row : table.rows) {
    UtteranceRecord u;
    u.utterance_id = row[c_id];
    u.audio_path = row[c_audio];
    u.speaker_id = row[c_speaker];
    u.gender = parse_gender(row[c_gender]);
    u.corpus_tag = row[c_tag];
    out.push_back(std::move(u));
  }
  return out;
}

void write_manifest_json(const std::filesystem::path& path, const CorpusManifest& m) {
  json usage = json::array();
  for (auto u : m.usage) usage.push_back(to_string(u));
  json j = {{"corpus_tag", m.corpus_tag},
            {"usage", usage},
            {"frame_count", m.frame_count},
            {"frame_length_s", m.frame_length_s},
            {"duration_hours", m.duration_hours},
            {"class_counts", m.class_counts}};
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

CorpusManifest read_manifest_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  CorpusManifest m;
  m.corpus_tag = j.at("corpus_tag").get<std::string>();
  for (const auto& u : j.at("usage")) m.usage.push_back(parse_usage(u.get<std::string>()));
  m.frame_count = j.at("frame_count").get<std::size_t>();
  m.frame_length_s = j.at("frame_length_s").get<double>();
  m.duration_hours = j.at("duration_hours").get<double>();
  m.class_counts = j.value("class_counts", std::vector<std::size_t>{});
  if (!j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

}  // namespace phonecls
