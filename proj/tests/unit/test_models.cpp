#include <cmath>

#include "doctest.h"
#include "phonecls/errors.hpp"
#include "phonecls/models/checkpoint.hpp"
#include "unit/helpers.hpp"

using namespace phonecls;

namespace {

ModelConfig small_cnn(std::uint64_t seed = 1) {
  ModelConfig c;
  c.cnn.stages = {{3, 3, 2}, {4, 3, 2}};
  c.head.hidden_dims = {16, 12};
  c.init_seed = seed;
  return c;
}

template <typename Scalar>
nn::Matrix<Scalar> random_inputs(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  nn::Matrix<Scalar> x(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) x(i, j) = static_cast<Scalar>(standard_normal(rng));
  }
  return x;
}

}  // namespace

TEST_CASE("default CNN embedding is 3584 wide") {
  CnnEncoderConfig config;
  CHECK(config.output_dim() == 3584);
  Rng rng(0);
  CnnEncoder<float> enc(config, rng);
  CHECK(enc.output_dim() == 3584);
  CHECK(enc.input_size() == 1320);
  CHECK(enc.final_shape().height == 1);
  CHECK(enc.final_shape().width == 28);
  CHECK(enc.final_shape().channels == 128);
}

TEST_CASE("full classifier maps one window to 32 logits") {
  PhoneClassifier<float> model(ModelConfig{});
  CHECK(model.input_size() == 1320);
  const auto logits = model.logits(random_inputs<float>(1320, 3, 2));
  CHECK(logits.rows() == 32);
  CHECK(logits.cols() == 3);
  CHECK(model.head().in_dim() == 3584);
}

TEST_CASE("zero windows share one embedding") {
  Rng rng(4);
  CnnEncoderConfig config;
  CnnEncoder<double> enc(config, rng);
  FeatureWindow zero;
  zero.values = Eigen::MatrixXd::Zero(11, 120);
  const auto a = cnn_forward(enc, zero, config);
  const auto b = cnn_forward(enc, zero, config);
  CHECK(a == b);
  // Zero input propagates only the biases: every spatial cell of a channel agrees
  // (up to GEMM summation order).
  const auto sp = enc.final_shape().spatial();
  for (Eigen::Index ch = 0; ch < enc.final_shape().channels; ++ch) {
    CHECK((a.segment(ch * sp, sp).array() - a[ch * sp]).abs().maxCoeff() < 1e-12);
  }
  FeatureWindow wrong;
  wrong.values = Eigen::MatrixXd::Zero(11, 100);
  CHECK_THROWS_AS(cnn_forward(enc, wrong, config), ContractError);
}

TEST_CASE("batched inference equals per-window inference") {
  PhoneClassifier<double> model(small_cnn());
  const auto x = random_inputs<double>(1320, 4, 3);
  const auto batch = model.logits(x);
  for (Eigen::Index j = 0; j < 4; ++j) {
    const nn::Matrix<double> single = model.logits(x.col(j));
    CHECK((single.col(0) - batch.col(j)).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(model.logits(x) == batch);
}

TEST_CASE("flattening is frame-major") {
  FeatureWindow w;
  w.values = Eigen::MatrixXd(11, 120);
  for (int r = 0; r < 11; ++r) {
    for (int c = 0; c < 120; ++c) w.values(r, c) = r * 1000 + c;
  }
  const auto v = flatten_window<double>(w);
  CHECK(v.size() == 1320);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[120] == 1000.0);
  CHECK(v[1319] == 10119.0);
}

TEST_CASE("zero output layer gives a uniform softmax") {
  PhoneClassifier<double> model(small_cnn());
  auto& out = model.head().output_layer();
  out.weight().value.setZero();
  out.bias().value.setZero();
  const auto probs = nn::softmax(model.logits(random_inputs<double>(1320, 2, 5)));
  CHECK(probs.rows() == 32);
  for (Eigen::Index i = 0; i < probs.size(); ++i) CHECK(probs(i) == doctest::Approx(1.0 / 32.0));
  const nn::Vector<double> zero = nn::Vector<double>::Zero(model.head().in_dim());
  const auto l = classifier_forward(model.head(), zero);
  CHECK(l.size() == 32);
  CHECK(l.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("softmax is shift invariant") {
  Eigen::MatrixXd logits = Eigen::MatrixXd::Random(32, 3);
  const Eigen::MatrixXd shifted = logits.array() + 17.5;
  CHECK((nn::softmax(logits) - nn::softmax(shifted)).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((nn::softmax(logits).colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-15);
}

TEST_CASE("head rejects a wrong embedding width") {
  PhoneClassifier<double> model(small_cnn());
  const nn::Vector<double> bad = nn::Vector<double>::Zero(model.head().in_dim() + 1);
  CHECK_THROWS_AS(classifier_forward(model.head(), bad), ContractError);
  CHECK_THROWS_AS(model.logits(nn::Matrix<double>::Zero(1000, 1)), ContractError);
}

TEST_CASE("predict_phone takes the argmax with lowest-index ties") {
  Eigen::VectorXd l = Eigen::VectorXd::Zero(32);
  l[0] = 10.0;
  CHECK(predict_phone(l) == 0);
  l.setZero();
  l[3] = 2.0;
  l[7] = 2.0;
  CHECK(predict_phone(l) == 3);
  CHECK(predict_phone(Eigen::VectorXd::Zero(32)) == 0);
  l[5] = std::nan("");
  CHECK_THROWS_AS(predict_phone(l), PredictionError);
  Eigen::MatrixXd m(2, 2);
  m << 1, 0, 0, 1;
  CHECK(predict_phones<double>(m) == std::vector<int>{0, 1});
}

TEST_CASE("inference is deterministic across identical models") {
  PhoneClassifier<float> a(small_cnn(9)), b(small_cnn(9)), c(small_cnn(10));
  const auto x = random_inputs<float>(1320, 2, 1);
  CHECK(a.logits(x) == b.logits(x));
  CHECK(a.logits(x) != c.logits(x));
}

TEST_CASE("analytic gradients match central differences") {
  PhoneClassifier<double> model(small_cnn(3));
  const auto x = random_inputs<double>(1320, 5, 8);
  const std::vector<int> labels{0, 5, 31, 7, 5};
  model.zero_grad();
  nn::Matrix<double> grad;
  nn::cross_entropy(model.forward(x), labels, &grad);
  model.backward(grad);

  const double h = 1e-6;
  double worst = 0.0;
  for (auto* p : model.all_parameters()) {
    const Eigen::Index step = std::max<Eigen::Index>(1, p->value.size() / 15);
    for (Eigen::Index k = 0; k < p->value.size(); k += step) {
      double& w = p->value.data()[k];
      const double saved = w;
      w = saved + h;
      const double up = nn::cross_entropy(model.logits(x), labels);
      w = saved - h;
      const double down = nn::cross_entropy(model.logits(x), labels);
      w = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = p->grad.data()[k];
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      worst = std::max(worst, std::abs(numeric - analytic) / scale);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("cross-entropy of uniform logits is log 32") {
  const Eigen::MatrixXd logits = Eigen::MatrixXd::Zero(32, 4);
  std::vector<double> per;
  CHECK(nn::cross_entropy<double>(logits, {0, 1, 2, 3}, nullptr, &per) == doctest::Approx(std::log(32.0)));
  CHECK(per.size() == 4);
  CHECK_THROWS_AS(nn::cross_entropy<double>(logits, {0, 1, 2}), ContractError);
  CHECK_THROWS_AS(nn::cross_entropy<double>(logits, {0, 1, 2, 32}), ContractError);
}

TEST_CASE("reference SSL backend emits 6 x dim per window") {
  SslBackendHandle handle;
  handle.backend_id = "reference:base";
  handle.hidden_layers = 6;
  handle.embedding_dim = 64;
  SslEncoder<float> enc(handle);
  CHECK(enc.input_size() == 2032);
  CHECK(enc.backend().frame_count() == 6);
  CHECK(enc.output_dim() == 6 * 64);
  WaveformWindow zero;
  zero.samples = Eigen::VectorXd::Zero(2032);
  const auto a = ssl_forward(enc, zero);
  CHECK(a.size() == 384);
  CHECK(a == ssl_forward(SslEncoder<float>(handle), zero));
  WaveformWindow short_window;
  short_window.samples = Eigen::VectorXd::Zero(2000);
  CHECK_THROWS_AS(ssl_forward(enc, short_window), ContractError);
}

TEST_CASE("large SSL backend flattens to 6 x 1024") {
  SslBackendHandle handle;
  CHECK(handle.hidden_layers == 24);
  SslEncoder<float> enc(handle);
  CHECK(enc.output_dim() == 6 * 1024);
  PhoneClassifier<float> model([&] {
    ModelConfig c;
    c.encoder = EncoderKind::ssl;
    c.ssl = handle;
    return c;
  }());
  CHECK(model.head().in_dim() == 6144);
  CHECK(model.config().encoder_trainable() == false);
}

TEST_CASE("unknown SSL backends are rejected") {
  SslBackendHandle handle;
  handle.backend_id = "hub:nowhere";
  CHECK_FALSE(ssl_backend_available<float>(handle));
  CHECK_THROWS_AS(SslEncoder<float>{handle}, BackendError);
  handle.hidden_layers = 7;
  CHECK_THROWS_AS(handle.validate(), ConfigError);
}

TEST_CASE("frozen SSL encoder exposes no trainable parameters") {
  SslBackendHandle handle;
  handle.hidden_layers = 6;
  handle.embedding_dim = 32;
  SslEncoder<float> frozen(handle);
  CHECK_FALSE(frozen.trainable());
  CHECK(frozen.trainable_parameters().empty());
  handle.trainable = true;
  SslEncoder<float> tuned(handle);
  CHECK(tuned.trainable());
  CHECK_FALSE(tuned.trainable_parameters().empty());
}

TEST_CASE("model config survives JSON") {
  auto c = small_cnn(42);
  c.encoder = EncoderKind::ssl;
  c.ssl.layer_index = 3;
  const auto back = ModelConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.init_seed == 42);
  CHECK(back.ssl.layer_index == 3);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto dir = testing::scratch("checkpoint");
  PhoneClassifier<float> model(small_cnn(6));
  save_checkpoint(dir / "m.ckpt", model, 1234, {{"epoch", 3}});
  CheckpointHeader header;
  const auto back = load_checkpoint<float>(dir / "m.ckpt", 1234, &header);
  CHECK(header.extra.at("epoch") == 3);
  const auto a = model.all_parameters();
  const auto b = back->all_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  const auto x = random_inputs<float>(1320, 2, 4);
  CHECK(model.logits(x) == back->logits(x));
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.ckpt", 999), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint<double>(dir / "m.ckpt"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "missing.ckpt"), CheckpointError);
  testing::write_file(dir / "junk.ckpt", "garbage");
  CHECK_THROWS_AS(load_checkpoint<float>(dir / "junk.ckpt"), CheckpointError);
}
