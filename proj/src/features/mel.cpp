#include <cmath>
#include <complex>
#include <unsupported/Eigen/FFT>

#include "phonecls/errors.hpp"
#include "phonecls/features.hpp"

namespace phonecls {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void MelConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("sample_rate_hz must be positive");
  if (n_mels <= 0) throw ConfigError("n_mels must be positive");
  if (context_frames <= 0 || context_frames % 2 == 0) throw ConfigError("context_frames must be odd");
  if (!(frame_hop_s > 0.0) || !(frame_length_s > frame_hop_s)) {
    throw ConfigError("frame length must exceed a positive frame hop");
  }
  if (!(f_max_hz > f_min_hz) || f_min_hz < 0.0 || f_max_hz > sample_rate_hz / 2.0 + 1e-9) {
    throw ConfigError("mel band must satisfy 0 <= f_min < f_max <= Nyquist");
  }
}

int MelConfig::frame_length_samples() const {
  return static_cast<int>(std::lround(frame_length_s * sample_rate_hz));
}

int MelConfig::hop_samples() const { return static_cast<int>(std::lround(frame_hop_s * sample_rate_hz)); }

int MelConfig::fft_size() const {
  int n = 1;
  while (n < frame_length_samples()) n <<= 1;
  return n;
}

double MelConfig::context_span_s() const {
  return (context_frames - 1) * frame_hop_s + frame_length_s;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Eigen::MatrixXd mel_filterbank(const MelConfig& config) {
  const int n_fft = config.fft_size();
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(config.f_min_hz);
  const double mel_hi = hz_to_mel(config.f_max_hz);
  Eigen::VectorXd edges(config.n_mels + 2);
  for (int m = 0; m < config.n_mels + 2; ++m) {
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (config.n_mels + 1));
  }
  Eigen::MatrixXd bank = Eigen::MatrixXd::Zero(config.n_mels, n_bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate_hz / n_fft;
      const double rise = (f - lo) / (mid - lo);
      const double fall = (hi - f) / (hi - mid);
      bank(m, k) = std::max(0.0, std::min(rise, fall));
    }
  }
  return bank;
}

Eigen::MatrixXd mel_frames(const Eigen::VectorXd& samples, const MelConfig& config) {
  config.validate();
  const int frame_len = config.frame_length_samples();
  const int hop = config.hop_samples();
  if (samples.size() < frame_len) {
    throw FeatureError("signal of " + std::to_string(samples.size()) +
                       " samples is shorter than one frame (" + std::to_string(frame_len) + ")");
  }
  const int n_frames = 1 + static_cast<int>((samples.size() - frame_len) / hop);
  const int n_fft = config.fft_size();
  const int n_bins = n_fft / 2 + 1;

  Eigen::VectorXd window(frame_len);
  for (int n = 0; n < frame_len; ++n) window[n] = 0.54 - 0.46 * std::cos(2.0 * kPi * n / (frame_len - 1));
  const Eigen::MatrixXd bank = mel_filterbank(config);

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(n_fft), 0.0);
  std::vector<std::complex<double>> spectrum;
  Eigen::MatrixXd power(n_bins, n_frames);
  for (int t = 0; t < n_frames; ++t) {
    const auto start = static_cast<Eigen::Index>(t) * hop;
    for (int n = 0; n < frame_len; ++n) frame[static_cast<std::size_t>(n)] = samples[start + n] * window[n];
    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) power(k, t) = std::norm(spectrum[static_cast<std::size_t>(k)]);
  }
  Eigen::MatrixXd energies = (bank * power).transpose();
  return energies.array().max(kLogFloor).log().matrix();
}

Eigen::MatrixXd delta(const Eigen::MatrixXd& feats, int window) {
  const auto n = feats.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, feats.cols());
  if (n == 0) return out;
  double norm = 0.0;
  for (int k = 1; k <= window; ++k) norm += 2.0 * k * k;
  auto clamp_row = [n](Eigen::Index r) { return std::clamp<Eigen::Index>(r, 0, n - 1); };
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int k = 1; k <= window; ++k) {
      out.row(t) += k * (feats.row(clamp_row(t + k)) - feats.row(clamp_row(t - k)));
    }
  }
  return out / norm;
}

Eigen::MatrixXd append_deltas(const Eigen::MatrixXd& feats) {
  const Eigen::MatrixXd d1 = delta(feats);
  const Eigen::MatrixXd d2 = delta(d1);
  Eigen::MatrixXd out(feats.rows(), feats.cols() * 3);
  out << feats, d1, d2;
  return out;
}

void normalize_mean_variance(Eigen::MatrixXd& feats) {
  if (feats.rows() == 0) return;
  const Eigen::RowVectorXd mean = feats.colwise().mean();
  feats.rowwise() -= mean;
  const Eigen::RowVectorXd sd =
      (feats.array().square().colwise().sum() / static_cast<double>(feats.rows())).sqrt().max(1e-8);
  feats.array().rowwise() /= sd.array();
}

Eigen::MatrixXd compute_features(const Eigen::VectorXd& samples, const MelConfig& config) {
  Eigen::MatrixXd statics = mel_frames(samples, config);
  if (config.normalize) normalize_mean_variance(statics);
  return append_deltas(statics);
}

}  // namespace phonecls
