#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phonecls/corpus.hpp"

namespace phonecls {

// ---------------------------------------------------------------- audio

struct AudioData {
  int sample_rate_hz = 0;
  int channels = 0;
  Eigen::VectorXd samples;  // mono, in [-1, 1]
};

/// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit or IEEE float), downmixing to mono.
AudioData read_wav(const std::filesystem::path& path);
/// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const Eigen::VectorXd& samples,
               int sample_rate_hz);

/// Band-limited (Hann-windowed sinc) resampling. Output length is
/// round(n * to / from).
Eigen::VectorXd resample(const Eigen::VectorXd& samples, int from_hz, int to_hz);

/// read_wav + resample + clamp to [-1, 1].
Eigen::VectorXd load_waveform(const std::filesystem::path& path, int target_rate_hz);

// ---------------------------------------------------------------- log-mel

struct MelConfig {
  int sample_rate_hz = 16000;
  double frame_length_s = 0.020;
  double frame_hop_s = 0.010;
  int n_mels = 40;
  int context_frames = 11;
  double f_min_hz = 0.0;
  double f_max_hz = 8000.0;
  // Per-utterance mean/variance normalization of the static features.
  bool normalize = false;

  void validate() const;
  int frame_length_samples() const;
  int hop_samples() const;
  int fft_size() const;
  int feature_width() const { return 3 * n_mels; }
  /// Time covered by one context window: (context - 1) * hop + frame length.
  double context_span_s() const;

  friend bool operator==(const MelConfig&, const MelConfig&) = default;
};

inline constexpr double kLogFloor = 1e-10;

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters on the mel scale; n_mels x (fft_size / 2 + 1).
Eigen::MatrixXd mel_filterbank(const MelConfig& config);

/// Log mel energies, one row per 20 ms Hamming-windowed frame:
/// n_frames = 1 + floor((len - frame_len) / hop).
Eigen::MatrixXd mel_frames(const Eigen::VectorXd& samples, const MelConfig& config);

/// Regression delta over +-window frames with edge replication.
Eigen::MatrixXd delta(const Eigen::MatrixXd& feats, int window = 2);

/// [statics | first derivative | second derivative].
Eigen::MatrixXd append_deltas(const Eigen::MatrixXd& feats);

void normalize_mean_variance(Eigen::MatrixXd& feats);

/// log-mel + deltas (+ optional normalization) for a whole signal.
Eigen::MatrixXd compute_features(const Eigen::VectorXd& samples, const MelConfig& config);

// ---------------------------------------------------------------- windows

struct FeatureWindow {
  Eigen::MatrixXd values;  // context_frames x (3 * n_mels)
  int center_frame_index = 0;
};

/// context_frames rows centred on center_frame; rows outside [0, n) are zero.
FeatureWindow context_window(const Eigen::MatrixXd& feats, int center_frame,
                             int context_frames = 11);

/// Feature frame whose centre is nearest to `center_s`, clamped to [0, n_frames).
int frame_index_for_time(double center_s, const MelConfig& config, int n_frames);

inline constexpr double kWaveformWindowSeconds = 0.127;

struct WaveformWindow {
  Eigen::VectorXd samples;
  double center_s = 0.0;
};

int waveform_window_length(int sample_rate_hz);

/// Fixed-length slice centred on center_s, symmetric zero padding at the edges.
WaveformWindow waveform_window(const Eigen::VectorXd& samples, double center_s,
                               int sample_rate_hz);

// ---------------------------------------------------------------- model inputs

enum class InputKind { context, waveform };

std::string to_string(InputKind kind);

/// Flattened input length per sample (11*120 or the waveform window length).
int input_size(InputKind kind, const MelConfig& config);

/// Column-per-frame input matrix. Frame i's context window is stored
/// row-major (frame-major) in column i. Each utterance's audio is read once.
Eigen::MatrixXf assemble_inputs(const std::vector<FrameRecord>& frames,
                                const std::map<std::string, std::filesystem::path>& audio_paths,
                                InputKind kind, const MelConfig& config);

// ---------------------------------------------------------------- cache

/// On-disk feature cache keyed by (utterance_id, center_s). The header stores
/// the MelConfig and input kind; a mismatching header invalidates the file.
struct FeatureCache {
  InputKind kind = InputKind::context;
  MelConfig config;
  std::vector<std::string> utterance_ids;
  std::vector<double> centers_s;
  Eigen::MatrixXf inputs;  // input_size x n

  void write(const std::filesystem::path& path) const;
  /// std::nullopt when the file is missing or was produced under another configuration.
  static std::optional<FeatureCache> read(const std::filesystem::path& path, InputKind kind,
                                          const MelConfig& config);
  /// True when the cache rows line up with `frames` one-to-one.
  bool matches(const std::vector<FrameRecord>& frames) const;
};

}  // namespace phonecls
