#include <algorithm>

#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"

namespace phonecls {

namespace {
// Grid points within this distance of a boundary are treated as lying on it.
constexpr double kBoundaryTolerance = 1e-9;
}  // namespace

bool frame_order(const FrameRecord& a, const FrameRecord& b) {
  if (a.utterance_id != b.utterance_id) return a.utterance_id < b.utterance_id;
  return a.center_s < b.center_s;
}

std::vector<FrameRecord> extract_frames(const UtteranceRecord& utterance,
                                        const PhoneInventory& inventory, double hop_s) {
  if (!(hop_s > 0.0)) throw ContractError("extract_frames: hop must be positive");
  std::vector<FrameRecord> frames;
  const auto& segments = utterance.segments;
  if (segments.empty()) return frames;

  const double origin = segments.front().start_s;
  const double last_end = segments.back().end_s;
  std::size_t seg = 0;
  for (long k = 0;; ++k) {
    // Recomputed from the origin each step so no rounding accumulates.
    const double center = origin + static_cast<double>(k) * hop_s;
    const double probe = center + kBoundaryTolerance;
    if (probe >= last_end) break;
    while (seg < segments.size() && segments[seg].end_s <= probe) ++seg;
    if (seg == segments.size()) break;
    if (probe < segments[seg].start_s) continue;  // gap between segments
    FrameRecord frame;
    frame.utterance_id = utterance.utterance_id;
    frame.center_s = center;
    frame.label = inventory.index_of(segments[seg].phone);
    frame.speaker_id = utterance.speaker_id;
    frame.gender = utterance.gender;
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<std::size_t> class_counts(const std::vector<FrameRecord>& frames, int n_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (const auto& f : frames) {
    if (f.label < 0 || f.label >= n_classes) {
      throw MappingError("label out of range: " + std::to_string(f.label));
    }
    ++counts[static_cast<std::size_t>(f.label)];
  }
  return counts;
}

std::string to_string(CorpusUsage usage) {
  switch (usage) {
    case CorpusUsage::train:
      return "train";
    case CorpusUsage::validation:
      return "validation";
    case CorpusUsage::test:
      break;
  }
  return "test";
}

CorpusUsage parse_usage(std::string_view text) {
  if (text == "train") return CorpusUsage::train;
  if (text == "validation") return CorpusUsage::validation;
  if (text == "test") return CorpusUsage::test;
  throw ConfigError("unknown corpus usage '" + std::string(text) + "'");
}

CorpusManifest make_manifest(std::string corpus_tag, std::vector<CorpusUsage> usage,
                             std::size_t frame_count, double frame_length_s) {
  CorpusManifest m;
  m.corpus_tag = std::move(corpus_tag);
  m.usage = std::move(usage);
  m.frame_count = frame_count;
  m.frame_length_s = frame_length_s;
  m.duration_hours = static_cast<double>(frame_count) * frame_length_s / 3600.0;
  return m;
}

}  // namespace phonecls
