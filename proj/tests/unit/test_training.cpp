#include <cmath>
#include <fstream>

#include "doctest.h"
#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/models/checkpoint.hpp"
#include "phonecls/training.hpp"
#include "unit/helpers.hpp"

using namespace phonecls;

namespace {

ModelConfig small_cnn(std::uint64_t seed = 1) {
  ModelConfig c;
  c.cnn.stages = {{4, 3, 2}, {8, 3, 2}};
  c.head.hidden_dims = {64};
  c.init_seed = seed;
  return c;
}

std::vector<Eigen::MatrixXf> snapshot(const std::vector<nn::Parameter<float>*>& params) {
  std::vector<Eigen::MatrixXf> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

bool same(const std::vector<Eigen::MatrixXf>& a, const std::vector<nn::Parameter<float>*>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]->value) return false;
  }
  return true;
}

// Model whose output layer always favours `phone`.
void make_constant(PhoneClassifier<float>& model, int phone) {
  auto& out = model.head().output_layer();
  out.weight().value.setZero();
  out.bias().value.setZero();
  out.bias().value(phone) = 1.0f;
}

// One separable draw split into train and validation columns per class.
std::pair<LabeledInputs, LabeledInputs> separable_split(int train_per_class, int val_per_class, Eigen::Index input_size,
                                                        std::uint64_t seed) {
  const int per_class = train_per_class + val_per_class;
  const auto all = make_separable_dataset(per_class, 32, input_size, seed);
  LabeledInputs parts[2];
  for (int part = 0; part < 2; ++part) {
    std::vector<Eigen::Index> cols;
    for (int k = 0; k < 32; ++k) {
      const int lo = part == 0 ? 0 : train_per_class;
      const int hi = part == 0 ? train_per_class : per_class;
      for (int s = lo; s < hi; ++s) cols.push_back(static_cast<Eigen::Index>(k) * per_class + s);
    }
    parts[part].inputs = all.inputs(Eigen::all, cols);
    for (auto c : cols) {
      const auto i = static_cast<std::size_t>(c);
      parts[part].labels.push_back(all.labels[i]);
      parts[part].utterance_ids.push_back(all.utterance_ids[i]);
      parts[part].centers_s.push_back(all.centers_s[i]);
    }
  }
  return {parts[0], parts[1]};
}

}  // namespace

TEST_CASE("optimizer defaults follow the reference implementations") {
  TrainingConfig c;
  CHECK(c.epochs == 15);
  CHECK(c.head_optimizer.kind == "adadelta");
  CHECK(c.head_optimizer.lr == 0.9);
  CHECK(c.head_optimizer.resolved_eps() == 1e-6);
  CHECK(c.encoder_optimizer.kind == "adam");
  CHECK(c.encoder_optimizer.lr == 1e-4);
  CHECK(c.encoder_optimizer.resolved_eps() == 1e-8);
  CHECK(c.effective_batch_size(EncoderKind::cnn) == 256);
  CHECK(c.effective_batch_size(EncoderKind::ssl) == 32);
  c.batch_size = 8;
  CHECK(c.effective_batch_size(EncoderKind::ssl) == 8);
  const auto back = TrainingConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
}

TEST_CASE("training config rejects bad values") {
  TrainingConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.head_optimizer.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.head_optimizer.kind = "sgd";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainingConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("adam matches a hand-computed first step") {
  nn::Parameter<float> p{"w", Eigen::MatrixXf::Constant(1, 1, 1.0f), Eigen::MatrixXf::Constant(1, 1, 0.5f)};
  auto opt = make_optimizer(OptimizerConfig::adam(0.1), {&p});
  opt->step();
  // Bias-corrected first step moves by lr * g / (|g| + eps).
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-6));
}

TEST_CASE("adadelta matches a hand-computed first step") {
  nn::Parameter<float> p{"w", Eigen::MatrixXf::Constant(1, 1, 1.0f), Eigen::MatrixXf::Constant(1, 1, 2.0f)};
  auto opt = make_optimizer(OptimizerConfig::adadelta(1.0), {&p});
  opt->step();
  const double sq = 0.1 * 4.0;
  const double delta = std::sqrt(1e-6) / std::sqrt(sq + 1e-6) * 2.0;
  CHECK(p.value(0, 0) == doctest::Approx(1.0 - delta).epsilon(1e-5));
}

TEST_CASE("two epochs select the argmin epoch") {
  auto [train_set, val_set] = separable_split(2, 1, 1320, 1);
  PhoneClassifier<float> model(small_cnn());
  TrainingConfig config;
  config.epochs = 2;
  config.batch_size = 16;
  const auto result = train(model, train_set, val_set, config);
  REQUIRE(result.epochs.size() == 2);
  CHECK(result.epochs[0].epoch == 1);
  CHECK(result.epochs[1].epoch == 2);
  const auto best = select_best_epoch(result.epochs);
  CHECK(result.best.epoch == result.epochs[best].epoch);
  CHECK(result.best.validation_phone_error_rate == result.epochs[best].validation_phone_error_rate);
  // The restored parameters reproduce the selected epoch's validation error.
  CHECK(validate(model, val_set).phone_error_rate == result.best.validation_phone_error_rate);
}

TEST_CASE("select_best_epoch breaks ties toward the earliest epoch") {
  std::vector<EpochMetrics> e(4);
  for (int i = 0; i < 4; ++i) e[static_cast<std::size_t>(i)].epoch = i + 1;
  e[0].validation_phone_error_rate = 0.5;
  e[1].validation_phone_error_rate = 0.2;
  e[2].validation_phone_error_rate = 0.2;
  e[3].validation_phone_error_rate = 0.3;
  CHECK(select_best_epoch(e) == 1);
  CHECK_THROWS_AS(select_best_epoch({}), ContractError);
}

TEST_CASE("zero learning rate leaves parameters and loss unchanged") {
  auto [train_set, val_set] = separable_split(2, 1, 1320, 3);
  PhoneClassifier<float> model(small_cnn());
  const auto before = snapshot(model.all_parameters());
  TrainingConfig config;
  config.epochs = 3;
  config.batch_size = 16;
  config.head_optimizer = OptimizerConfig::adadelta(0.0);
  const auto result = train(model, train_set, val_set, config);
  CHECK(same(before, model.all_parameters()));
  CHECK(result.epochs[0].train_loss == result.epochs[1].train_loss);
  CHECK(result.epochs[1].train_loss == result.epochs[2].train_loss);
  CHECK(result.epochs[0].validation_phone_error_rate == result.epochs[2].validation_phone_error_rate);
}

TEST_CASE("separable frames are memorised") {
  auto [train_set, val_set] = separable_split(10, 2, 1320, 5);
  PhoneClassifier<float> model(small_cnn());
  TrainingConfig config;
  config.epochs = 20;
  config.batch_size = 32;
  const auto result = train(model, train_set, val_set, config);
  double best_acc = 0.0;
  for (const auto& e : result.epochs) best_acc = std::max(best_acc, e.train_accuracy);
  CHECK(best_acc >= 0.95);
  CHECK(result.epochs.back().train_loss < result.epochs.front().train_loss);
}

TEST_CASE("validate counts errors") {
  PhoneClassifier<float> model(small_cnn(2));
  auto data = make_separable_dataset(1, 32, 1320, 7);

  SUBCASE("perfect predictor") {
    data.labels = predict_all(model, data.inputs);
    CHECK(validate(model, data).phone_error_rate == 0.0);
    CHECK(validate(model, data).balanced_accuracy == 100.0);
  }
  SUBCASE("constant predictor on a balanced set") {
    make_constant(model, 4);
    const auto r = validate(model, data);
    CHECK(r.phone_error_rate == doctest::Approx(31.0 / 32.0));
    for (auto p : r.predictions) CHECK(p == 4);
  }
}

TEST_CASE("random predictor errs at about 31/32") {
  PhoneClassifier<float> model(small_cnn(2));
  auto data = make_separable_dataset(100, 32, 1320, 8);
  Rng rng(99);
  for (auto& y : data.labels) y = static_cast<int>(uniform_index(rng, 32));
  const double err = validate(model, data, 512).phone_error_rate;
  // Labels are independent of the inputs: error ~ Binomial(3200, 31/32) / 3200.
  const double p = 31.0 / 32.0;
  const double sd = std::sqrt(p * (1 - p) / 3200.0);
  CHECK(std::abs(err - p) < 4 * sd);
}

TEST_CASE("a non-finite loss aborts with its epoch and batch") {
  auto [train_set, val_set] = separable_split(1, 1, 1320, 9);
  train_set.inputs(0, 3) = std::numeric_limits<float>::quiet_NaN();
  PhoneClassifier<float> model(small_cnn());
  TrainingConfig config;
  config.epochs = 2;
  config.batch_size = 8;
  try {
    train(model, train_set, val_set, config);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() == 1);
    CHECK(e.batch() >= 0);
    CHECK(e.batch() < 4);
    CHECK(std::string(e.what()).find("epoch 1, batch") != std::string::npos);
  }
}

TEST_CASE("contract checks on the data") {
  PhoneClassifier<float> model(small_cnn());
  auto good = make_separable_dataset(1, 32, 1320, 11);
  TrainingConfig config;
  config.epochs = 1;
  LabeledInputs empty;
  empty.inputs.resize(1320, 0);
  CHECK_THROWS_AS(train(model, empty, good, config), ContractError);
  auto bad_label = good;
  bad_label.labels[0] = 40;
  CHECK_THROWS_AS(train(model, bad_label, good, config), ContractError);
  auto wrong_size = make_separable_dataset(1, 32, 100, 11);
  CHECK_THROWS_AS(train(model, wrong_size, good, config), ContractError);

  auto a = good;
  a.utterance_ids.assign(a.size(), "u");
  a.centers_s.clear();
  for (std::size_t i = 0; i < a.size(); ++i) a.centers_s.push_back(0.01 * static_cast<double>(i));
  auto b = a;
  CHECK_THROWS_AS(train(model, a, b, config), ContractError);
}

TEST_CASE("frozen encoder stays bit-identical") {
  auto [train_set, val_set] = separable_split(2, 1, 1320, 12);
  auto mc = small_cnn();
  mc.cnn.trainable = false;
  PhoneClassifier<float> model(mc);
  const auto enc_before = snapshot(model.encoder_parameters());
  const auto head_before = snapshot(model.head_parameters());
  const Eigen::MatrixXf probe = val_set.inputs.leftCols(3);
  const Eigen::MatrixXf emb_before = model.encoder().apply(probe);
  TrainingConfig config;
  config.epochs = 2;
  config.batch_size = 16;
  train(model, train_set, val_set, config);
  CHECK(same(enc_before, model.encoder_parameters()));
  CHECK_FALSE(same(head_before, model.head_parameters()));
  CHECK(model.encoder().apply(probe) == emb_before);
}

TEST_CASE("training is deterministic and writes its run directory") {
  auto [train_set, val_set] = separable_split(2, 1, 1320, 14);
  TrainingConfig config;
  config.epochs = 2;
  config.batch_size = 16;
  config.seed = 5;
  const auto dir = testing::scratch("train_run");
  PhoneClassifier<float> a(small_cnn()), b(small_cnn());
  TrainOptions opts;
  opts.run_dir = dir;
  opts.inventory_hash = 77;
  int calls = 0;
  opts.on_epoch = [&](const EpochMetrics&) { ++calls; };
  const auto ra = train(a, train_set, val_set, config, opts);
  const auto rb = train(b, train_set, val_set, config);
  CHECK(calls == 2);
  CHECK(ra.epochs == rb.epochs);
  CHECK(same(snapshot(a.all_parameters()), b.all_parameters()));

  CHECK(std::filesystem::exists(dir / "epoch_1" / "model.ckpt"));
  CHECK(std::filesystem::exists(dir / "epoch_2" / "model.ckpt"));
  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    CHECK(EpochMetrics::from_json(nlohmann::json::parse(line)) == ra.epochs[static_cast<std::size_t>(lines)]);
    ++lines;
  }
  CHECK(lines == 2);
  std::ifstream best_file(dir / "best.json");
  const auto best = CheckpointMeta::from_json(nlohmann::json::parse(best_file));
  CHECK(best.epoch == ra.best.epoch);
  const auto restored = load_checkpoint<float>(best.path, 77);
  CHECK(validate(*restored, val_set).phone_error_rate == ra.best.validation_phone_error_rate);
}

TEST_CASE("fine-tuning an SSL encoder updates only its tunable layers") {
  ModelConfig mc;
  mc.encoder = EncoderKind::ssl;
  mc.ssl.hidden_layers = 6;
  mc.ssl.embedding_dim = 16;
  mc.ssl.trainable = true;
  mc.head.hidden_dims = {32};
  PhoneClassifier<float> model(mc);
  auto [train_set, val_set] = separable_split(1, 1, 2032, 16);
  const auto all_before = snapshot(model.encoder_parameters());
  TrainingConfig config;
  config.epochs = 1;
  config.encoder_optimizer = OptimizerConfig::adam(1e-2);
  train(model, train_set, val_set, config);
  const auto params = model.encoder_parameters();
  const auto tunable = model.encoder().trainable_parameters();
  int changed = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool is_tunable = std::find(tunable.begin(), tunable.end(), params[i]) != tunable.end();
    if (params[i]->value != all_before[i]) {
      ++changed;
      CHECK(is_tunable);
    }
  }
  CHECK(changed > 0);
}
