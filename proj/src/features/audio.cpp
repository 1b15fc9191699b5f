#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "phonecls/errors.hpp"
#include "phonecls/features.hpp"

namespace phonecls {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

double decode_sample(const unsigned char* p, int format, int bits) {
  if (format == 3) {
    if (bits == 32) {
      float f;
      const std::uint32_t u = le32(p);
      std::memcpy(&f, &u, 4);
      return f;
    }
    std::uint64_t u = static_cast<std::uint64_t>(le32(p)) | (static_cast<std::uint64_t>(le32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(le16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v |= ~0xFFFFFF;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(le32(p)) / 2147483648.0;
  }
}

}  // namespace

AudioData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw AudioError("cannot open audio file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw AudioError(path.string() + ": not a RIFF/WAVE file");
  }

  int format = 0, channels = 0, rate = 0, bits = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16 && body + 16 <= bytes.size()) {
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = static_cast<int>(le32(bytes.data() + body + 4));
      bits = le16(bytes.data() + body + 14);
      if (format == 0xFFFE && size >= 26 && body + 26 <= bytes.size()) {
        format = le16(bytes.data() + body + 24);  // sub-format GUID prefix
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min(size, bytes.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (!data || channels <= 0 || rate <= 0) throw AudioError(path.string() + ": missing fmt or data chunk");
  const bool supported = (format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
                         (format == 3 && (bits == 32 || bits == 64));
  if (!supported) {
    throw AudioError(path.string() + ": unsupported encoding (format " + std::to_string(format) +
                     ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t stride = static_cast<std::size_t>(bits / 8);
  const std::size_t frame_bytes = stride * static_cast<std::size_t>(channels);
  const std::size_t n = data_size / frame_bytes;
  AudioData audio;
  audio.sample_rate_hz = rate;
  audio.channels = channels;
  audio.samples.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int c = 0; c < channels; ++c) {
      sum += decode_sample(data + i * frame_bytes + static_cast<std::size_t>(c) * stride, format, bits);
    }
    audio.samples[static_cast<Eigen::Index>(i)] = sum / channels;
  }
  return audio;
}

void write_wav(const std::filesystem::path& path, const Eigen::VectorXd& samples, int sample_rate_hz) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw AudioError("cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
  };
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate_hz));
  put32(static_cast<std::uint32_t>(sample_rate_hz * 2));
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    const double clipped = std::clamp(samples[i], -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(clipped * 32767.0))));
  }
}

Eigen::VectorXd resample(const Eigen::VectorXd& samples, int from_hz, int to_hz) {
  if (from_hz <= 0 || to_hz <= 0) throw AudioError("sample rates must be positive");
  if (from_hz == to_hz) return samples;
  const double ratio = static_cast<double>(to_hz) / from_hz;
  const auto n_in = samples.size();
  const auto n_out = static_cast<Eigen::Index>(std::llround(static_cast<double>(n_in) * ratio));
  const double cutoff = std::min(1.0, ratio);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;
  constexpr double kPi = 3.14159265358979323846;

  Eigen::VectorXd out(n_out);
  for (Eigen::Index i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const auto first = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(std::ceil(t - half_width)));
    const auto last = std::min<Eigen::Index>(n_in - 1, static_cast<Eigen::Index>(std::floor(t + half_width)));
    double acc = 0.0;
    for (Eigen::Index k = first; k <= last; ++k) {
      const double x = t - static_cast<double>(k);
      const double arg = cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(kPi * arg) / (kPi * arg);
      const double window = 0.5 + 0.5 * std::cos(kPi * x / half_width);
      acc += samples[k] * cutoff * sinc * window;
    }
    out[i] = acc;
  }
  return out;
}

Eigen::VectorXd load_waveform(const std::filesystem::path& path, int target_rate_hz) {
  auto audio = read_wav(path);
  Eigen::VectorXd out = resample(audio.samples, audio.sample_rate_hz, target_rate_hz);
  return out.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace phonecls
