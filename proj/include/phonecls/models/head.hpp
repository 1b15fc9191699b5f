#pragma once

#include "phonecls/models/layers.hpp"
#include "json.hpp"

namespace phonecls {

struct ClassifierHeadConfig {
  std::vector<int> hidden_dims{1024, 1024, 1024};
  int n_classes = 32;

  void validate() const;
  nlohmann::json to_json() const;
  static ClassifierHeadConfig from_json(const nlohmann::json& j);
};

/// Fully connected ReLU stack ending in an n_classes-wide linear layer.
template <typename Scalar>
class ClassifierHead {
 public:
  ClassifierHead() = default;
  ClassifierHead(Eigen::Index in_dim, const ClassifierHeadConfig& config, Rng& rng) {
    config.validate();
    Eigen::Index width = in_dim;
    for (std::size_t i = 0; i < config.hidden_dims.size(); ++i) {
      layers_.emplace_back("head.fc" + std::to_string(i + 1), width, config.hidden_dims[i], rng);
      width = config.hidden_dims[i];
    }
    layers_.emplace_back("head.out", width, config.n_classes, rng);
    relus_.resize(config.hidden_dims.size());
  }

  Eigen::Index in_dim() const { return layers_.front().in_dim(); }
  Eigen::Index n_classes() const { return layers_.back().out_dim(); }

  nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& embeddings) const {
    check(embeddings);
    nn::Matrix<Scalar> x = embeddings;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = nn::Relu<Scalar>::apply(layers_[i].apply(x));
    return layers_.back().apply(x);
  }

  nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& embeddings) {
    check(embeddings);
    nn::Matrix<Scalar> x = embeddings;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i) x = relus_[i].forward(layers_[i].forward(x));
    return layers_.back().forward(x);
  }

  /// Returns the gradient with respect to the embeddings.
  nn::Matrix<Scalar> backward(const nn::Matrix<Scalar>& grad_logits) {
    nn::Matrix<Scalar> g = layers_.back().backward(grad_logits);
    for (std::size_t i = layers_.size() - 1; i-- > 0;) g = layers_[i].backward(relus_[i].backward(g));
    return g;
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& l : layers_) {
      out.push_back(&l.weight());
      out.push_back(&l.bias());
    }
    return out;
  }

  nn::Dense<Scalar>& output_layer() { return layers_.back(); }
  const nn::Dense<Scalar>& output_layer() const { return layers_.back(); }

 private:
  void check(const nn::Matrix<Scalar>& embeddings) const {
    if (embeddings.rows() != in_dim()) {
      throw ContractError("classifier head expects embeddings of width " + std::to_string(in_dim()) +
                          ", got " + std::to_string(embeddings.rows()));
    }
  }

  std::vector<nn::Dense<Scalar>> layers_;
  std::vector<nn::Relu<Scalar>> relus_;
};

}  // namespace phonecls
