#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "phonecls/errors.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
template <typename Scalar>
void init_uniform(Matrix<Scalar>& m, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      m(i, j) = static_cast<Scalar>((2.0 * uniform_unit(rng) - 1.0) * bound);
    }
  }
}

// ------------------------------------------------------------------ Dense

/// y = W x + b over column batches; W is out x in.
template <typename Scalar>
class Dense {
 public:
  Dense() = default;
  Dense(std::string name, Eigen::Index in, Eigen::Index out, Rng& rng)
      : weight_{name + ".weight", Matrix<Scalar>(out, in), {}},
        bias_{name + ".bias", Matrix<Scalar>(out, 1), {}} {
    init_uniform(weight_.value, in, rng);
    init_uniform(bias_.value, in, rng);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  Eigen::Index in_dim() const { return weight_.value.cols(); }
  Eigen::Index out_dim() const { return weight_.value.rows(); }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    if (x.rows() != in_dim()) {
      throw ContractError(weight_.name + ": input width " + std::to_string(x.rows()) +
                          " != " + std::to_string(in_dim()));
    }
    return (weight_.value * x).colwise() + bias_.value.col(0);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    input_ = x;
    return apply(x);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    weight_.grad.noalias() += dy * input_.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    return weight_.value.transpose() * dy;
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }
  const Parameter<Scalar>& weight() const { return weight_; }
  const Parameter<Scalar>& bias() const { return bias_; }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Matrix<Scalar> input_;
};

// ------------------------------------------------------------------ ReLU

template <typename Scalar>
class Relu {
 public:
  static Matrix<Scalar> apply(const Matrix<Scalar>& x) { return x.cwiseMax(Scalar(0)); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    output_ = apply(x);
    return output_;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    return (output_.array() > Scalar(0)).select(dy, Scalar(0));
  }

 private:
  Matrix<Scalar> output_;
};

// ------------------------------------------------------------------ feature maps

/// Batch of 2-D feature maps stacked sample-major: rows are
/// (sample, y, x) with x fastest, columns are channels.
struct MapShape {
  Eigen::Index height = 0;
  Eigen::Index width = 0;
  Eigen::Index channels = 0;

  Eigen::Index spatial() const { return height * width; }
  Eigen::Index size() const { return spatial() * channels; }
};

/// Valid (unpadded), stride-1 square-kernel convolution via im2col.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, MapShape in, Eigen::Index out_channels, Eigen::Index kernel, Rng& rng)
      : in_(in), kernel_(kernel) {
    if (kernel <= 0 || kernel > in.height || kernel > in.width) {
      throw ConfigError(name + ": kernel " + std::to_string(kernel) + " does not fit " +
                        std::to_string(in.height) + "x" + std::to_string(in.width) + " input");
    }
    out_ = {in.height - kernel + 1, in.width - kernel + 1, out_channels};
    const Eigen::Index fan_in = in.channels * kernel * kernel;
    weight_ = {name + ".weight", Matrix<Scalar>(fan_in, out_channels), {}};
    bias_ = {name + ".bias", Matrix<Scalar>(1, out_channels), {}};
    init_uniform(weight_.value, fan_in, rng);
    init_uniform(bias_.value, fan_in, rng);
    weight_.zero_grad();
    bias_.zero_grad();
  }

  const MapShape& input_shape() const { return in_; }
  const MapShape& output_shape() const { return out_; }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    const Matrix<Scalar> patches = im2col(x);
    return (patches * weight_.value).rowwise() + bias_.value.row(0);
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    patches_ = im2col(x);
    return (patches_ * weight_.value).rowwise() + bias_.value.row(0);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    weight_.grad.noalias() += patches_.transpose() * dy;
    bias_.grad.row(0) += dy.colwise().sum();
    const Matrix<Scalar> dpatches = dy * weight_.value.transpose();
    return col2im(dpatches);
  }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  Eigen::Index batch_of(const Matrix<Scalar>& x) const {
    if (x.cols() != in_.channels || x.rows() % in_.spatial() != 0) {
      throw ContractError(weight_.name + ": input map shape mismatch");
    }
    return x.rows() / in_.spatial();
  }

  // Row (sample, oy, ox); column (channel, ky, kx).
  Matrix<Scalar> im2col(const Matrix<Scalar>& x) const {
    const Eigen::Index n = batch_of(x);
    Matrix<Scalar> patches(n * out_.spatial(), in_.channels * kernel_ * kernel_);
    for (Eigen::Index c = 0; c < in_.channels; ++c) {
      for (Eigen::Index ky = 0; ky < kernel_; ++ky) {
        for (Eigen::Index kx = 0; kx < kernel_; ++kx) {
          const Eigen::Index col = (c * kernel_ + ky) * kernel_ + kx;
          for (Eigen::Index s = 0; s < n; ++s) {
            for (Eigen::Index oy = 0; oy < out_.height; ++oy) {
              const Eigen::Index src = s * in_.spatial() + (oy + ky) * in_.width + kx;
              const Eigen::Index dst = s * out_.spatial() + oy * out_.width;
              patches.col(col).segment(dst, out_.width) = x.col(c).segment(src, out_.width);
            }
          }
        }
      }
    }
    return patches;
  }

  Matrix<Scalar> col2im(const Matrix<Scalar>& dpatches) const {
    const Eigen::Index n = dpatches.rows() / out_.spatial();
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(n * in_.spatial(), in_.channels);
    for (Eigen::Index c = 0; c < in_.channels; ++c) {
      for (Eigen::Index ky = 0; ky < kernel_; ++ky) {
        for (Eigen::Index kx = 0; kx < kernel_; ++kx) {
          const Eigen::Index col = (c * kernel_ + ky) * kernel_ + kx;
          for (Eigen::Index s = 0; s < n; ++s) {
            for (Eigen::Index oy = 0; oy < out_.height; ++oy) {
              const Eigen::Index dst = s * in_.spatial() + (oy + ky) * in_.width + kx;
              const Eigen::Index src = s * out_.spatial() + oy * out_.width;
              dx.col(c).segment(dst, out_.width) += dpatches.col(col).segment(src, out_.width);
            }
          }
        }
      }
    }
    return dx;
  }

  MapShape in_;
  MapShape out_;
  Eigen::Index kernel_ = 0;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Matrix<Scalar> patches_;
};

/// Non-overlapping max pooling (window = stride = pool); trailing rows and
/// columns that do not fill a window are dropped. Ties pick the first element.
template <typename Scalar>
class MaxPool2d {
 public:
  MaxPool2d() = default;
  MaxPool2d(MapShape in, Eigen::Index pool) : in_(in), pool_(pool) {
    if (pool <= 0 || pool > in.height || pool > in.width) {
      throw ConfigError("max pool " + std::to_string(pool) + " does not fit its input map");
    }
    out_ = {in.height / pool, in.width / pool, in.channels};
  }

  const MapShape& output_shape() const { return out_; }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const { return pool(x, nullptr); }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    input_rows_ = x.rows();
    return pool(x, &argmax_);
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(input_rows_, in_.channels);
    for (Eigen::Index c = 0; c < dy.cols(); ++c) {
      for (Eigen::Index r = 0; r < dy.rows(); ++r) dx(argmax_(r, c), c) += dy(r, c);
    }
    return dx;
  }

 private:
  Matrix<Scalar> pool(const Matrix<Scalar>& x, Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>* argmax) const {
    const Eigen::Index n = x.rows() / in_.spatial();
    Matrix<Scalar> y(n * out_.spatial(), in_.channels);
    if (argmax) argmax->resize(y.rows(), y.cols());
    for (Eigen::Index c = 0; c < in_.channels; ++c) {
      for (Eigen::Index s = 0; s < n; ++s) {
        for (Eigen::Index oy = 0; oy < out_.height; ++oy) {
          for (Eigen::Index ox = 0; ox < out_.width; ++ox) {
            Eigen::Index best = s * in_.spatial() + (oy * pool_) * in_.width + ox * pool_;
            for (Eigen::Index py = 0; py < pool_; ++py) {
              for (Eigen::Index px = 0; px < pool_; ++px) {
                const Eigen::Index idx = s * in_.spatial() + (oy * pool_ + py) * in_.width + ox * pool_ + px;
                if (x(idx, c) > x(best, c)) best = idx;
              }
            }
            const Eigen::Index out_row = s * out_.spatial() + oy * out_.width + ox;
            y(out_row, c) = x(best, c);
            if (argmax) (*argmax)(out_row, c) = best;
          }
        }
      }
    }
    return y;
  }

  MapShape in_;
  MapShape out_;
  Eigen::Index pool_ = 1;
  Eigen::Index input_rows_ = 0;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax_;
};

// ------------------------------------------------------------------ losses

/// Column-wise softmax, shifted by the column max.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  Matrix<Scalar> shifted = logits.rowwise() - logits.colwise().maxCoeff();
  Matrix<Scalar> e = shifted.array().exp();
  return e.array().rowwise() / e.colwise().sum().array();
}

/// Mean cross-entropy over columns; writes d(loss)/d(logits) into `grad` and
/// each column's loss into `per_sample` when given.
template <typename Scalar>
double cross_entropy(const Matrix<Scalar>& logits, const std::vector<int>& labels,
                     Matrix<Scalar>* grad = nullptr, std::vector<double>* per_sample = nullptr) {
  const Eigen::Index n = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ContractError("label count != batch size");
  double loss = 0.0;
  if (grad) grad->resize(logits.rows(), n);
  if (per_sample) per_sample->resize(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const double maxv = static_cast<double>(logits.col(j).maxCoeff());
    const double lse =
        maxv + std::log((logits.col(j).template cast<double>().array() - maxv).exp().sum());
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= logits.rows()) throw ContractError("label outside logit range");
    const double sample_loss = lse - static_cast<double>(logits(y, j));
    loss += sample_loss;
    if (per_sample) (*per_sample)[static_cast<std::size_t>(j)] = sample_loss;
    if (grad) {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double p = std::exp(static_cast<double>(logits(i, j)) - lse);
        (*grad)(i, j) = static_cast<Scalar>((p - (i == y ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return loss / static_cast<double>(n);
}

}  // namespace phonecls::nn
