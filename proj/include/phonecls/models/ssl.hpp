#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "phonecls/models/encoder.hpp"

namespace phonecls {

/// Configuration-level reference to a pretrained speech encoder.
struct SslBackendHandle {
  std::string backend_id = "reference:3k-large";
  int hidden_layers = 24;  // light 6, base 12, large 24
  bool trainable = false;
  int embedding_dim = 1024;
  int layer_index = -1;  // -1 = final hidden layer
  int sample_rate_hz = 16000;

  void validate() const;
  /// Backend scheme: the backend_id prefix before ':'.
  std::string scheme() const;
  nlohmann::json to_json() const;
  static SslBackendHandle from_json(const nlohmann::json& j);
};

/// Convolutional front-end geometry shared by wav2vec2-style encoders: seven
/// strided 1-D convolutions whose receptive field is 400 samples (25 ms at
/// 16 kHz) with a 320-sample (20 ms) stride.
struct FrontEndGeometry {
  static constexpr int kLayers = 7;
  static constexpr int kKernels[kLayers] = {10, 3, 3, 3, 3, 2, 2};
  static constexpr int kStrides[kLayers] = {5, 2, 2, 2, 2, 2, 2};

  /// Frames emitted for an input of `samples` samples (0 when too short).
  static int frame_count(int samples);
  static int receptive_field();
  static int total_stride();
};

/// Plugin contract for pretrained speech encoders.
template <typename Scalar>
class SslBackend {
 public:
  virtual ~SslBackend() = default;

  virtual int expected_input_length() const = 0;
  virtual int frame_count() const = 0;
  virtual int embedding_dim() const = 0;
  virtual int hidden_layers() const = 0;

  /// Frame embeddings of hidden layer `layer` (0 = input projection,
  /// hidden_layers() = final), flattened frame-major: (frames * dim) x N.
  virtual nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& waveforms, int layer) const = 0;
  virtual nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& waveforms, int layer) = 0;
  virtual void backward(const nn::Matrix<Scalar>& grad) = 0;

  virtual bool supports_training() const = 0;
  virtual std::vector<nn::Parameter<Scalar>*> parameters() = 0;
  /// Parameters that fine-tuning may update.
  virtual std::vector<nn::Parameter<Scalar>*> tunable_parameters() = 0;
};

template <typename Scalar>
using SslBackendFactory = std::function<std::unique_ptr<SslBackend<Scalar>>(const SslBackendHandle&)>;

template <typename Scalar>
std::map<std::string, SslBackendFactory<Scalar>>& ssl_backend_registry();

template <typename Scalar>
void register_ssl_backend(const std::string& scheme, SslBackendFactory<Scalar> factory) {
  ssl_backend_registry<Scalar>()[scheme] = std::move(factory);
}

template <typename Scalar>
bool ssl_backend_available(const SslBackendHandle& handle) {
  return ssl_backend_registry<Scalar>().count(handle.scheme()) > 0;
}

/// Resolves a handle through the registry; BackendError when no backend serves it.
template <typename Scalar>
std::unique_ptr<SslBackend<Scalar>> load_ssl_backend(const SslBackendHandle& handle) {
  handle.validate();
  auto& registry = ssl_backend_registry<Scalar>();
  const auto it = registry.find(handle.scheme());
  if (it == registry.end()) throw BackendError("no SSL backend registered for '" + handle.backend_id + "'");
  auto backend = it->second(handle);
  if (!backend) throw BackendError("SSL backend '" + handle.backend_id + "' failed to load");
  if (backend->hidden_layers() != handle.hidden_layers || backend->embedding_dim() != handle.embedding_dim) {
    throw BackendError("SSL backend '" + handle.backend_id + "' does not match the requested size");
  }
  return backend;
}

/// Deterministic stand-in encoder with the wav2vec2 front-end geometry: a
/// frozen strided conv front end, a per-frame input projection and
/// `hidden_layers` residual tanh layers. Weights are seeded from backend_id,
/// so each id behaves like a distinct pretrained checkpoint. Used for tests
/// and desk-scale runs in place of real pretrained weights.
template <typename Scalar>
class ReferenceSslBackend final : public SslBackend<Scalar> {
 public:
  static constexpr int kFrontEndChannels = 32;

  explicit ReferenceSslBackend(const SslBackendHandle& handle) : handle_(handle) {
    std::uint64_t seed = 0xcbf29ce484222325ULL;
    for (unsigned char c : handle.backend_id) seed = (seed ^ c) * 0x100000001b3ULL;
    Rng rng(seed);
    input_length_ = static_cast<int>(std::lround(0.127 * handle.sample_rate_hz));
    frames_ = FrontEndGeometry::frame_count(input_length_);
    if (frames_ <= 0) throw BackendError("input window too short for the conv front end");
    int in_channels = 1;
    for (int i = 0; i < FrontEndGeometry::kLayers; ++i) {
      const int fan_in = in_channels * FrontEndGeometry::kKernels[i];
      nn::Parameter<Scalar> w{"backend.frontend" + std::to_string(i) + ".weight",
                              nn::Matrix<Scalar>(fan_in, kFrontEndChannels), {}};
      nn::init_uniform(w.value, fan_in, rng);
      w.value *= Scalar(std::sqrt(3.0));  // keep activations O(1) through seven layers
      w.zero_grad();
      front_.push_back(std::move(w));
      in_channels = kFrontEndChannels;
    }
    projection_ = nn::Dense<Scalar>("backend.projection", kFrontEndChannels, handle.embedding_dim, rng);
    for (int l = 0; l < handle.hidden_layers; ++l) {
      layers_.emplace_back("backend.layer" + std::to_string(l + 1), handle.embedding_dim,
                           handle.embedding_dim, rng);
    }
  }

  int expected_input_length() const override { return input_length_; }
  int frame_count() const override { return frames_; }
  int embedding_dim() const override { return handle_.embedding_dim; }
  int hidden_layers() const override { return handle_.hidden_layers; }
  bool supports_training() const override { return true; }

  nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& waveforms, int layer) const override {
    nn::Matrix<Scalar> h = projection_.apply(front_end(waveforms));
    for (int l = 0; l < layer; ++l) {
      h += (layers_[static_cast<std::size_t>(l)].apply(h)).array().tanh().matrix();
    }
    return fold(h, waveforms.cols());
  }

  nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& waveforms, int layer) override {
    used_layers_ = layer;
    nn::Matrix<Scalar> h = projection_.forward(front_end(waveforms));
    activations_.assign(static_cast<std::size_t>(layer), nn::Matrix<Scalar>());
    for (int l = 0; l < layer; ++l) {
      nn::Matrix<Scalar> t = layers_[static_cast<std::size_t>(l)].forward(h).array().tanh().matrix();
      h += t;
      activations_[static_cast<std::size_t>(l)] = std::move(t);
    }
    return fold(h, waveforms.cols());
  }

  void backward(const nn::Matrix<Scalar>& grad) override {
    nn::Matrix<Scalar> g = Eigen::Map<const nn::Matrix<Scalar>>(grad.data(), handle_.embedding_dim,
                                                                grad.size() / handle_.embedding_dim);
    for (int l = used_layers_; l-- > 0;) {
      const auto& t = activations_[static_cast<std::size_t>(l)];
      const nn::Matrix<Scalar> pre = g.array() * (Scalar(1) - t.array().square());
      g += layers_[static_cast<std::size_t>(l)].backward(pre);
    }
    projection_.backward(g);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() override {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& w : front_) out.push_back(&w);
    for (auto* p : tunable_parameters()) out.push_back(p);
    return out;
  }

  std::vector<nn::Parameter<Scalar>*> tunable_parameters() override {
    std::vector<nn::Parameter<Scalar>*> out{&projection_.weight(), &projection_.bias()};
    for (auto& l : layers_) {
      out.push_back(&l.weight());
      out.push_back(&l.bias());
    }
    return out;
  }

 private:
  static Scalar gelu(Scalar x) {
    const double v = static_cast<double>(x);
    return static_cast<Scalar>(0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v))));
  }

  // waveforms (L x N) -> per-frame features (channels x (N * frames)), each
  // frame standardised across channels.
  nn::Matrix<Scalar> front_end(const nn::Matrix<Scalar>& waveforms) const {
    if (waveforms.rows() != input_length_) {
      throw ContractError("SSL backend expects " + std::to_string(input_length_) + " samples, got " +
                          std::to_string(waveforms.rows()));
    }
    nn::Matrix<Scalar> out(kFrontEndChannels, waveforms.cols() * frames_);
    for (Eigen::Index s = 0; s < waveforms.cols(); ++s) {
      nn::Matrix<Scalar> x = waveforms.col(s);  // length x channels
      for (int i = 0; i < FrontEndGeometry::kLayers; ++i) {
        const int k = FrontEndGeometry::kKernels[i];
        const int stride = FrontEndGeometry::kStrides[i];
        const Eigen::Index len = (x.rows() - k) / stride + 1;
        nn::Matrix<Scalar> patches(len, x.cols() * k);
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          for (int j = 0; j < k; ++j) {
            for (Eigen::Index t = 0; t < len; ++t) patches(t, c * k + j) = x(t * stride + j, c);
          }
        }
        x = (patches * front_[static_cast<std::size_t>(i)].value).unaryExpr(&gelu);
      }
      for (int f = 0; f < frames_; ++f) {
        nn::Vector<Scalar> v = x.row(f).transpose();
        const Scalar mean = v.mean();
        v.array() -= mean;
        const Scalar sd = std::sqrt(v.squaredNorm() / Scalar(v.size()) + Scalar(1e-5));
        out.col(s * frames_ + f) = v / sd;
      }
    }
    return out;
  }

  // dim x (N * frames) -> (frames * dim) x N; the column-major layouts coincide.
  nn::Matrix<Scalar> fold(const nn::Matrix<Scalar>& h, Eigen::Index batch) const {
    return Eigen::Map<const nn::Matrix<Scalar>>(h.data(), h.rows() * frames_, batch);
  }

  SslBackendHandle handle_;
  int input_length_ = 0;
  int frames_ = 0;
  std::vector<nn::Parameter<Scalar>> front_;
  nn::Dense<Scalar> projection_;
  std::vector<nn::Dense<Scalar>> layers_;
  std::vector<nn::Matrix<Scalar>> activations_;
  int used_layers_ = 0;
};

template <typename Scalar>
std::map<std::string, SslBackendFactory<Scalar>>& ssl_backend_registry() {
  static std::map<std::string, SslBackendFactory<Scalar>> registry{
      {"reference", [](const SslBackendHandle& h) -> std::unique_ptr<SslBackend<Scalar>> {
         return std::make_unique<ReferenceSslBackend<Scalar>>(h);
       }}};
  return registry;
}

/// Encoder adapter over a backend: flattened final-layer (or selected layer)
/// frame embeddings. Parameters never change while the handle is frozen.
template <typename Scalar>
class SslEncoder final : public Encoder<Scalar> {
 public:
  explicit SslEncoder(const SslBackendHandle& handle)
      : handle_(handle), backend_(load_ssl_backend<Scalar>(handle)) {
    layer_ = handle.layer_index < 0 ? backend_->hidden_layers() : handle.layer_index;
    if (layer_ > backend_->hidden_layers()) throw ConfigError("layer_index beyond the backend depth");
  }

  EncoderKind kind() const override { return EncoderKind::ssl; }
  Eigen::Index input_size() const override { return backend_->expected_input_length(); }
  Eigen::Index output_dim() const override {
    return static_cast<Eigen::Index>(backend_->frame_count()) * backend_->embedding_dim();
  }
  bool trainable() const override { return handle_.trainable && backend_->supports_training(); }

  nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& inputs) const override {
    this->check_input(inputs);
    return backend_->apply(inputs, layer_);
  }

  nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& inputs) override {
    this->check_input(inputs);
    return trainable() ? backend_->forward(inputs, layer_) : backend_->apply(inputs, layer_);
  }

  void backward(const nn::Matrix<Scalar>& grad_output) override {
    if (trainable()) backend_->backward(grad_output);
  }

  std::vector<nn::Parameter<Scalar>*> parameters() override { return backend_->parameters(); }
  std::vector<nn::Parameter<Scalar>*> trainable_parameters() override {
    return trainable() ? backend_->tunable_parameters() : std::vector<nn::Parameter<Scalar>*>{};
  }

  nlohmann::json config_json() const override { return handle_.to_json(); }
  const SslBackend<Scalar>& backend() const { return *backend_; }

 private:
  SslBackendHandle handle_;
  std::unique_ptr<SslBackend<Scalar>> backend_;
  int layer_ = 0;
};

}  // namespace phonecls
