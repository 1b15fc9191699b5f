#include <cctype>
#include <fstream>

#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

namespace {

bool looks_numeric(const std::string& field) {
  return !field.empty() && (std::isdigit(static_cast<unsigned char>(field[0])) ||
                            field[0] == '.' || field[0] == '-' || field[0] == '+');
}

}  // namespace

void validate_segments(const std::string& utterance_id,
                       const std::vector<AlignmentSegment>& segments) {
  double previous_end = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (!(seg.start_s >= 0.0) || !(seg.start_s < seg.end_s)) {
      throw AlignmentError(utterance_id + ": segment " + std::to_string(i) + " has invalid bounds [" +
                           csv::format_double(seg.start_s) + ", " + csv::format_double(seg.end_s) +
                           ")");
    }
    if (i > 0 && seg.start_s < previous_end) {
      throw AlignmentError(utterance_id + ": segment " + std::to_string(i) +
                           " overlaps or precedes the previous segment");
    }
    previous_end = seg.end_s;
  }
}

std::vector<AlignmentSegment> read_alignment_file(const std::filesystem::path& path,
                                                  const PhoneInventory& inventory,
                                                  const std::string& utterance_id) {
  auto table = csv::read(path, /*has_header=*/false);
  std::vector<AlignmentSegment> segments;
  segments.reserve(table.rows.size());
  const std::string source = path.string();
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = table.line_numbers[r];
    if (r == 0 && !row.empty() && !looks_numeric(row[0])) continue;  // header
    if (row.size() != 3) throw ParseError(source, line, "expected start_s,end_s,phone");
    AlignmentSegment seg;
    seg.start_s = csv::to_double(row[0], source, line);
    seg.end_s = csv::to_double(row[1], source, line);
    seg.raw_phone = row[2];
    try {
      seg.phone = inventory.merge(seg.raw_phone);
    } catch (const MappingError& e) {
      throw MappingError(utterance_id + " (" + source + ":" + std::to_string(line) + "): " + e.what());
    }
    segments.push_back(std::move(seg));
  }
  validate_segments(utterance_id, segments);
  return segments;
}

std::vector<UtteranceRecord> parse_alignments(const std::filesystem::path& manifest_path,
                                              const PhoneInventory& inventory) {
  const auto table = csv::read(manifest_path);
  const std::string source = manifest_path.string();
  const auto c_id = table.column("utterance_id", source);
  const auto c_audio = table.column("audio_path", source);
  const auto c_speaker = table.column("speaker_id", source);
  const auto c_gender = table.column("gender", source);
  const auto c_tag = table.column("corpus_tag", source);
  const auto c_align = table.column("alignment_path", source);
  const auto base = manifest_path.parent_path();

  std::vector<UtteranceRecord> utterances;
  utterances.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    UtteranceRecord utt;
    utt.utterance_id = row[c_id];
    if (utt.utterance_id.empty()) throw ParseError(source, table.line_numbers[r], "empty utterance_id");
    utt.audio_path = base / row[c_audio];
    utt.speaker_id = row[c_speaker];
    if (utt.speaker_id.empty()) throw ParseError(source, table.line_numbers[r], "empty speaker_id");
    utt.gender = parse_gender(row[c_gender]);
    utt.corpus_tag = row[c_tag];
    const auto alignment_path = base / row[c_align];
    if (!std::filesystem::exists(alignment_path)) {
      throw DataError(utt.utterance_id + ": alignment file not found: " + alignment_path.string());
    }
    utt.segments = read_alignment_file(alignment_path, inventory, utt.utterance_id);
    utterances.push_back(std::move(utt));
  }
  return utterances;
}

}  // namespace phonecls
