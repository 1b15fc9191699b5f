#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "phonecls/errors.hpp"
#include "phonecls/features.hpp"

namespace phonecls {

FeatureWindow context_window(const Eigen::MatrixXd& feats, int center_frame, int context_frames) {
  const auto n = static_cast<int>(feats.rows());
  if (center_frame < 0 || center_frame >= n) {
    throw WindowError("center frame " + std::to_string(center_frame) + " outside [0, " +
                      std::to_string(n) + ")");
  }
  const int half = context_frames / 2;
  FeatureWindow window;
  window.center_frame_index = center_frame;
  window.values = Eigen::MatrixXd::Zero(context_frames, feats.cols());
  for (int r = 0; r < context_frames; ++r) {
    const int src = center_frame - half + r;
    if (src >= 0 && src < n) window.values.row(r) = feats.row(src);
  }
  return window;
}

int frame_index_for_time(double center_s, const MelConfig& config, int n_frames) {
  const double rate = config.sample_rate_hz;
  const double first_center = config.frame_length_samples() / 2.0 / rate;
  const double hop = config.hop_samples() / rate;
  const auto k = static_cast<int>(std::lround((center_s - first_center) / hop));
  return std::clamp(k, 0, n_frames - 1);
}

int waveform_window_length(int sample_rate_hz) {
  return static_cast<int>(std::lround(kWaveformWindowSeconds * sample_rate_hz));
}

WaveformWindow waveform_window(const Eigen::VectorXd& samples, double center_s, int sample_rate_hz) {
  const double duration = static_cast<double>(samples.size()) / sample_rate_hz;
  if (!(center_s >= 0.0)) throw WindowError("window center must be non-negative");
  if (center_s > duration) {
    throw WindowError("window center " + std::to_string(center_s) + " s beyond signal end (" +
                      std::to_string(duration) + " s)");
  }
  const int length = waveform_window_length(sample_rate_hz);
  const auto center = static_cast<Eigen::Index>(std::llround(center_s * sample_rate_hz));
  const Eigen::Index start = center - length / 2;
  WaveformWindow window;
  window.center_s = center_s;
  window.samples = Eigen::VectorXd::Zero(length);
  const Eigen::Index lo = std::max<Eigen::Index>(0, start);
  const Eigen::Index hi = std::min<Eigen::Index>(samples.size(), start + length);
  if (hi > lo) window.samples.segment(lo - start, hi - lo) = samples.segment(lo, hi - lo);
  return window;
}

std::string to_string(InputKind kind) { return kind == InputKind::context ? "context" : "waveform"; }

int input_size(InputKind kind, const MelConfig& config) {
  if (kind == InputKind::context) return config.context_frames * config.feature_width();
  return waveform_window_length(config.sample_rate_hz);
}

Eigen::MatrixXf assemble_inputs(const std::vector<FrameRecord>& frames,
                                const std::map<std::string, std::filesystem::path>& audio_paths,
                                InputKind kind, const MelConfig& config) {
  config.validate();
  const int rows = input_size(kind, config);
  Eigen::MatrixXf inputs(rows, static_cast<Eigen::Index>(frames.size()));

  std::unordered_map<std::string, std::vector<std::size_t>> by_utterance;
  std::vector<std::string> order;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    auto [it, fresh] = by_utterance.try_emplace(frames[i].utterance_id);
    if (fresh) order.push_back(frames[i].utterance_id);
    it->second.push_back(i);
  }
  for (const auto& utt : order) {
    const auto path = audio_paths.find(utt);
    if (path == audio_paths.end()) throw DataError("no audio recorded for utterance " + utt);
    const Eigen::VectorXd signal = load_waveform(path->second, config.sample_rate_hz);
    if (kind == InputKind::context) {
      const Eigen::MatrixXd feats = compute_features(signal, config);
      for (auto i : by_utterance[utt]) {
        const int center = frame_index_for_time(frames[i].center_s, config, static_cast<int>(feats.rows()));
        const auto window = context_window(feats, center, config.context_frames);
        // row-major flattening: frame-major, feature-minor
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = window.values;
        inputs.col(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size()).cast<float>();
      }
    } else {
      for (auto i : by_utterance[utt]) {
        inputs.col(static_cast<Eigen::Index>(i)) =
            waveform_window(signal, frames[i].center_s, config.sample_rate_hz).samples.cast<float>();
      }
    }
  }
  return inputs;
}

}  // namespace phonecls
