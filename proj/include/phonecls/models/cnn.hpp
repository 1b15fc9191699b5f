#pragma once

#include "phonecls/models/encoder.hpp"

namespace phonecls {

struct ConvStage {
  int out_channels = 64;
  int kernel = 3;
  int pool = 2;
};

/// Two conv + ReLU + max-pool stages over an 11 x 120 feature window.
struct CnnEncoderConfig {
  int input_height = 11;
  int input_width = 120;
  std::vector<ConvStage> stages{{64, 3, 2}, {128, 3, 2}};
  bool trainable = true;

  void validate() const;
  /// Flattened embedding length after both stages.
  Eigen::Index output_dim() const;

  nlohmann::json to_json() const;
  static CnnEncoderConfig from_json(const nlohmann::json& j);
};

template <typename Scalar>
class CnnEncoder final : public Encoder<Scalar> {
 public:
  CnnEncoder(const CnnEncoderConfig& config, Rng& rng) : config_(config) {
    config.validate();
    nn::MapShape shape{config.input_height, config.input_width, 1};
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
      const auto& st = config.stages[i];
      convs_.emplace_back("encoder.conv" + std::to_string(i + 1), shape, st.out_channels, st.kernel, rng);
      shape = convs_.back().output_shape();
      pools_.emplace_back(shape, st.pool);
      shape = pools_.back().output_shape();
    }
    relus_.resize(convs_.size());
    final_shape_ = shape;
  }

  EncoderKind kind() const override { return EncoderKind::cnn; }
  Eigen::Index input_size() const override {
    return static_cast<Eigen::Index>(config_.input_height) * config_.input_width;
  }
  Eigen::Index output_dim() const override { return final_shape_.size(); }
  bool trainable() const override { return config_.trainable; }
  const nn::MapShape& final_shape() const { return final_shape_; }

  nn::Matrix<Scalar> apply(const nn::Matrix<Scalar>& inputs) const override {
    this->check_input(inputs);
    nn::Matrix<Scalar> x = to_maps(inputs);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = pools_[i].apply(nn::Relu<Scalar>::apply(convs_[i].apply(x)));
    }
    return flatten(x, inputs.cols());
  }

  nn::Matrix<Scalar> forward(const nn::Matrix<Scalar>& inputs) override {
    this->check_input(inputs);
    nn::Matrix<Scalar> x = to_maps(inputs);
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      x = pools_[i].forward(relus_[i].forward(convs_[i].forward(x)));
    }
    return flatten(x, inputs.cols());
  }

  void backward(const nn::Matrix<Scalar>& grad_output) override {
    nn::Matrix<Scalar> g = unflatten(grad_output);
    for (std::size_t i = convs_.size(); i-- > 0;) {
      g = convs_[i].backward(relus_[i].backward(pools_[i].backward(g)));
    }
  }

  std::vector<nn::Parameter<Scalar>*> parameters() override {
    std::vector<nn::Parameter<Scalar>*> out;
    for (auto& c : convs_) {
      out.push_back(&c.weight());
      out.push_back(&c.bias());
    }
    return out;
  }

  std::vector<nn::Parameter<Scalar>*> trainable_parameters() override {
    return config_.trainable ? parameters() : std::vector<nn::Parameter<Scalar>*>{};
  }

  nlohmann::json config_json() const override { return config_.to_json(); }

 private:
  // Column-per-sample (row-major window) -> stacked single-channel maps.
  static nn::Matrix<Scalar> to_maps(const nn::Matrix<Scalar>& inputs) {
    return Eigen::Map<const nn::Matrix<Scalar>>(inputs.data(), inputs.size(), 1);
  }

  // Stacked maps -> column per sample, channel-major then spatial.
  nn::Matrix<Scalar> flatten(const nn::Matrix<Scalar>& maps, Eigen::Index batch) const {
    const Eigen::Index sp = final_shape_.spatial();
    nn::Matrix<Scalar> out(final_shape_.size(), batch);
    for (Eigen::Index s = 0; s < batch; ++s) {
      Eigen::Map<nn::Matrix<Scalar>>(out.col(s).data(), sp, final_shape_.channels) =
          maps.middleRows(s * sp, sp);
    }
    return out;
  }

  nn::Matrix<Scalar> unflatten(const nn::Matrix<Scalar>& flat) const {
    const Eigen::Index sp = final_shape_.spatial();
    nn::Matrix<Scalar> maps(flat.cols() * sp, final_shape_.channels);
    for (Eigen::Index s = 0; s < flat.cols(); ++s) {
      maps.middleRows(s * sp, sp) =
          Eigen::Map<const nn::Matrix<Scalar>>(flat.col(s).data(), sp, final_shape_.channels);
    }
    return maps;
  }

  CnnEncoderConfig config_;
  std::vector<nn::Conv2d<Scalar>> convs_;
  std::vector<nn::Relu<Scalar>> relus_;
  std::vector<nn::MaxPool2d<Scalar>> pools_;
  nn::MapShape final_shape_;
};

}  // namespace phonecls
