#pragma once

#include <memory>

#include "phonecls/features.hpp"
#include "phonecls/models/cnn.hpp"
#include "phonecls/models/head.hpp"
#include "phonecls/models/ssl.hpp"

namespace phonecls {

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

struct ModelConfig {
  EncoderKind encoder = EncoderKind::cnn;
  CnnEncoderConfig cnn;
  SslBackendHandle ssl;
  ClassifierHeadConfig head;
  std::uint64_t init_seed = 0;

  InputKind input_kind() const {
    return encoder == EncoderKind::cnn ? InputKind::context : InputKind::waveform;
  }
  bool encoder_trainable() const { return encoder == EncoderKind::cnn ? cnn.trainable : ssl.trainable; }

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Encoder + classifier head: input windows (one per column) -> logits.
template <typename Scalar>
class PhoneClassifier {
 public:
  explicit PhoneClassifier(const ModelConfig& config) : config_(config) {
    Rng rng(derive_seed(config.init_seed, 0));
    if (config.encoder == EncoderKind::cnn) {
      encoder_ = std::make_unique<CnnEncoder<Scalar>>(config.cnn, rng);
    } else {
      encoder_ = std::make_unique<SslEncoder<Scalar>>(config.ssl);
    }
    Rng head_rng(derive_seed(config.init_seed, 1));
    head_ = ClassifierHead<Scalar>(encoder_->output_dim(), config.head, head_rng);
  }

  const ModelConfig& config() const { return config_; }
  Encoder<Scalar>& encoder() { return *encoder_; }
  const Encoder<Scalar>& encoder() const { return *encoder_; }
  ClassifierHead<Scalar>& head() { return head_; }
  const ClassifierHead<Scalar>& head() const { return head_; }
  Eigen::Index input_size() const { return encoder_->input_size(); }

  /// Inference-mode logits, n_classes x N.
  nn::Matrix<Scalar> logits(const nn::Matrix<Scalar>& inputs) const { return head_.apply(encoder_->apply(inputs)); }

  nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& inputs) {
    encoder_ran_forward_ = encoder_->trainable();
    const nn::Matrix<Scalar> embeddings = encoder_ran_forward_ ? encoder_->forward(inputs) : encoder_->apply(inputs);
    return head_.forward(embeddings);
  }

  void backward(const nn::Matrix<Scalar>& grad_logits) {
    const nn::Matrix<Scalar> g = head_.backward(grad_logits);
    if (encoder_ran_forward_) encoder_->backward(g);
  }

  std::vector<nn::Parameter<Scalar>*> head_parameters() { return head_.parameters(); }
  std::vector<nn::Parameter<Scalar>*> encoder_parameters() { return encoder_->parameters(); }
  std::vector<nn::Parameter<Scalar>*> all_parameters() {
    auto out = encoder_parameters();
    for (auto* p : head_parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : all_parameters()) p->zero_grad();
  }

 private:
  ModelConfig config_;
  std::unique_ptr<Encoder<Scalar>> encoder_;
  ClassifierHead<Scalar> head_;
  bool encoder_ran_forward_ = false;
};

/// Row-major (frame-major) flattening of a context window into one input column.
template <typename Scalar>
nn::Vector<Scalar> flatten_window(const FeatureWindow& window) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = window.values;
  return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size()).cast<Scalar>();
}

template <typename Scalar>
nn::Vector<Scalar> cnn_forward(const CnnEncoder<Scalar>& encoder, const FeatureWindow& window,
                               const CnnEncoderConfig& config) {
  if (window.values.rows() != config.input_height || window.values.cols() != config.input_width) {
    throw ContractError("feature window is " + std::to_string(window.values.rows()) + "x" +
                        std::to_string(window.values.cols()) + ", expected " +
                        std::to_string(config.input_height) + "x" + std::to_string(config.input_width));
  }
  return encoder.apply(flatten_window<Scalar>(window));
}

template <typename Scalar>
nn::Vector<Scalar> ssl_forward(const SslEncoder<Scalar>& encoder, const WaveformWindow& window) {
  return encoder.apply(window.samples.cast<Scalar>());
}

template <typename Scalar>
nn::Vector<Scalar> classifier_forward(const ClassifierHead<Scalar>& head, const nn::Vector<Scalar>& embedding) {
  return head.apply(embedding);
}

/// Argmax with lowest-index tie-break; PredictionError on NaN.
template <typename Derived>
int predict_phone(const Eigen::MatrixBase<Derived>& logits) {
  if (logits.size() == 0) throw PredictionError("empty logit vector");
  int best = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    if (std::isnan(static_cast<double>(logits(i)))) throw PredictionError("NaN logit at index " + std::to_string(i));
    if (logits(i) > logits(best)) best = static_cast<int>(i);
  }
  return best;
}

/// predict_phone over each column.
template <typename Scalar>
std::vector<int> predict_phones(const nn::Matrix<Scalar>& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index j = 0; j < logits.cols(); ++j) out[static_cast<std::size_t>(j)] = predict_phone(logits.col(j));
  return out;
}

}  // namespace phonecls
