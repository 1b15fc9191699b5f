#pragma once

#include <memory>
#include <vector>

#include "json.hpp"
#include "phonecls/models/layers.hpp"

namespace phonecls {

enum class EncoderKind { cnn, ssl };

/// Anything that maps a column batch of flattened input windows to a column
/// batch of flattened embeddings.
template <typename Scalar>
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual EncoderKind kind() const = 0;
  virtual Eigen::Index input_size() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual bool trainable() const = 0;

  /// Inference; does not touch cached activations.
  virtual nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& inputs) const = 0;
  /// Training forward; caches what backward() needs.
  virtual nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& inputs) = 0;
  /// Accumulates parameter gradients. Only valid after forward().
  virtual void backward(const nn::Matrix<Scalar>& grad_output) = 0;

  /// Every parameter tensor (checkpointing, invariance checks).
  virtual std::vector<nn::Parameter<Scalar>*> parameters() = 0;
  /// The subset an optimizer may update; empty when frozen.
  virtual std::vector<nn::Parameter<Scalar>*> trainable_parameters() = 0;

  virtual nlohmann::json config_json() const = 0;

 protected:
  void check_input(const nn::Matrix<Scalar>& inputs) const {
    if (inputs.rows() != input_size()) {
      throw ContractError("encoder expects inputs of length " + std::to_string(input_size()) +
                          ", got " + std::to_string(inputs.rows()));
    }
  }
};

}  // namespace phonecls
