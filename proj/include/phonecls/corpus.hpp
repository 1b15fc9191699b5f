#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace phonecls {

using PhoneId = int;

enum class Gender { female, male, unknown };

std::string to_string(Gender gender);
Gender parse_gender(std::string_view text);

/// The closed label set: 31 phones plus one silence symbol, together with the
/// merge rules that fold raw aligner symbols (e.g. the true-mid vowel pairs)
/// into archi-phones. Phones occupy indices 0..30 in file order; silence is 31.
class PhoneInventory {
 public:
  static constexpr int kPhoneCount = 31;
  static constexpr int kClassCount = kPhoneCount + 1;

  PhoneInventory(std::vector<std::string> phones, std::string silence,
                 std::map<std::string, std::string> merges);

  int size() const { return static_cast<int>(symbols_.size()); }
  PhoneId silence_index() const { return kPhoneCount; }
  const std::string& silence_symbol() const { return symbols_.back(); }
  const std::string& symbol(PhoneId id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::map<std::string, std::string>& merges() const { return merges_; }

  /// Index of an inventory symbol (no merging). std::nullopt when unknown.
  std::optional<PhoneId> find(std::string_view symbol) const;
  /// Index of an inventory symbol; throws MappingError when unknown.
  PhoneId index_of(std::string_view symbol) const;

  /// Archi-phone map: raw aligner symbol -> inventory symbol. Identity on
  /// inventory symbols; throws MappingError for anything else.
  const std::string& merge(std::string_view raw) const;
  /// merge() followed by index_of().
  PhoneId lookup(std::string_view raw) const { return index_of(merge(raw)); }

  /// Stable textual form; hashed into checkpoints so a model cannot be loaded
  /// against a different label set.
  std::string canonical() const;
  std::uint64_t hash() const;

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, std::string> merges_;
  std::map<std::string, PhoneId, std::less<>> index_;
};

PhoneInventory load_inventory(const std::filesystem::path& path);
/// The bundled French inventory shipped under data/.
std::filesystem::path default_inventory_path();

struct AlignmentSegment {
  double start_s = 0.0;
  double end_s = 0.0;
  std::string raw_phone;  // as written by the aligner
  std::string phone;      // after archi-phone merging
};

struct UtteranceRecord {
  std::string utterance_id;
  std::filesystem::path audio_path;
  std::string speaker_id;
  Gender gender = Gender::unknown;
  std::string corpus_tag;
  std::vector<AlignmentSegment> segments;
};

struct FrameRecord {
  std::string utterance_id;
  double center_s = 0.0;
  PhoneId label = 0;
  std::string speaker_id;
  Gender gender = Gender::unknown;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Canonical record order: (utterance_id, center_s).
bool frame_order(const FrameRecord& a, const FrameRecord& b);

/// Reads one `start_s,end_s,phone` alignment file and validates ordering.
std::vector<AlignmentSegment> read_alignment_file(const std::filesystem::path& path,
                                                  const PhoneInventory& inventory,
                                                  const std::string& utterance_id);

/// Checks 0 <= start < end, time order and non-overlap. Throws AlignmentError
/// naming the utterance.
void validate_segments(const std::string& utterance_id,
                       const std::vector<AlignmentSegment>& segments);

/// Reads a manifest CSV (utterance_id, audio_path, speaker_id, gender,
/// corpus_tag, alignment_path). Relative paths resolve against the manifest's
/// directory.
std::vector<UtteranceRecord> parse_alignments(const std::filesystem::path& manifest_path,
                                              const PhoneInventory& inventory);

inline constexpr double kDefaultHopSeconds = 0.010;

/// One frame per grid point (anchored at the first segment start, spaced by
/// hop_s) whose center falls in a segment under half-open [start, end).
std::vector<FrameRecord> extract_frames(const UtteranceRecord& utterance,
                                        const PhoneInventory& inventory,
                                        double hop_s = kDefaultHopSeconds);

struct BalancingPolicy {
  bool balance_phones = true;
  bool balance_gender = false;
  std::uint64_t seed = 0;
  std::optional<std::size_t> target_count;
  // When false, silence neither sets nor requires the per-class minimum; it is
  // still capped at the common count.
  bool include_silence = true;
};

std::vector<FrameRecord> balance(const std::vector<FrameRecord>& frames,
                                 const BalancingPolicy& policy,
                                 const PhoneInventory& inventory);

struct TrainValidationSplit {
  std::vector<FrameRecord> train;
  std::vector<FrameRecord> validation;
};

/// Per-class split so both halves keep the class histogram shape.
TrainValidationSplit split_train_validation(const std::vector<FrameRecord>& frames,
                                            double ratio, std::uint64_t seed);

/// Histogram of labels over the full inventory.
std::vector<std::size_t> class_counts(const std::vector<FrameRecord>& frames, int n_classes);

enum class CorpusUsage { train, validation, test };
std::string to_string(CorpusUsage usage);
CorpusUsage parse_usage(std::string_view text);

inline constexpr double kFrameLengthSeconds = 0.127;

struct CorpusManifest {
  std::string corpus_tag;
  std::vector<CorpusUsage> usage;
  std::size_t frame_count = 0;
  double frame_length_s = kFrameLengthSeconds;
  double duration_hours = 0.0;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> class_counts;
};

/// Fills duration_hours = frame_count * frame_length_s / 3600.
CorpusManifest make_manifest(std::string corpus_tag, std::vector<CorpusUsage> usage,
                             std::size_t frame_count,
                             double frame_length_s = kFrameLengthSeconds);

// Frame dataset files.
void write_frames_csv(const std::filesystem::path& path, const std::vector<FrameRecord>& frames,
                      const PhoneInventory& inventory);
std::vector<FrameRecord> read_frames_csv(const std::filesystem::path& path,
                                         const PhoneInventory& inventory);
void write_frames_jsonl(const std::filesystem::path& path, const std::vector<FrameRecord>& frames,
                        const PhoneInventory& inventory);
void write_utterances_csv(const std::filesystem::path& path,
                          const std::vector<UtteranceRecord>& utterances);
/// Segments are not stored; only the utterance metadata needed to find audio.
std::vector<UtteranceRecord> read_utterances_csv(const std::filesystem::path& path);
void write_manifest_json(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest_json(const std::filesystem::path& path);

}  // namespace phonecls
