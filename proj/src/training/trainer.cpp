#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <utility>

#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/models/checkpoint.hpp"
#include "phonecls/training.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls {

using nlohmann::json;

// ---------------------------------------------------------------- config

void OptimizerConfig::validate(const std::string& what) const {
  if (kind != "adadelta" && kind != "adam") {
    throw ConfigError(what + ": unknown optimizer '" + kind + "' (expected adadelta or adam)");
  }
  // A zero rate is accepted: it freezes the parameter group.
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError(what + ": learning rate must be finite and >= 0");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError(what + ": rho must lie in (0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError(what + ": betas must lie in [0, 1)");
  }
  if (eps && !(*eps > 0.0)) throw ConfigError(what + ": eps must be positive");
}

double OptimizerConfig::resolved_eps() const {
  if (eps) return *eps;
  return kind == "adam" ? 1e-8 : 1e-6;
}

json OptimizerConfig::to_json() const {
  json j = {{"kind", kind}, {"lr", lr}, {"eps", resolved_eps()}};
  if (kind == "adadelta") {
    j["rho"] = rho;
  } else {
    j["beta1"] = beta1;
    j["beta2"] = beta2;
  }
  return j;
}

OptimizerConfig OptimizerConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("optimizer config must be an object");
  OptimizerConfig c;
  try {
    c.kind = j.value("kind", c.kind);
    c.lr = j.value("lr", c.lr);
    c.rho = j.value("rho", c.rho);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("optimizer config: ") + e.what());
  }
  return c;
}

void TrainingConfig::validate() const {
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (batch_size && *batch_size < 1) throw ConfigError("training: batch_size must be >= 1");
  head_optimizer.validate("training.head_optimizer");
  encoder_optimizer.validate("training.encoder_optimizer");
}

int TrainingConfig::effective_batch_size(EncoderKind kind) const {
  if (batch_size) return *batch_size;
  return kind == EncoderKind::cnn ? 256 : 32;
}

json TrainingConfig::to_json() const {
  json j = {{"epochs", epochs},
            {"head_optimizer", head_optimizer.to_json()},
            {"encoder_optimizer", encoder_optimizer.to_json()},
            {"cnn_uses_encoder_optimizer", cnn_uses_encoder_optimizer},
            {"seed", seed},
            {"balanced_include_silence", balanced_include_silence}};
  j["batch_size"] = batch_size ? json(*batch_size) : json(nullptr);
  return j;
}

TrainingConfig TrainingConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  TrainingConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("head_optimizer")) c.head_optimizer = OptimizerConfig::from_json(j.at("head_optimizer"));
    if (j.contains("encoder_optimizer")) c.encoder_optimizer = OptimizerConfig::from_json(j.at("encoder_optimizer"));
    c.cnn_uses_encoder_optimizer = j.value("cnn_uses_encoder_optimizer", c.cnn_uses_encoder_optimizer);
    if (j.contains("batch_size") && !j.at("batch_size").is_null()) c.batch_size = j.at("batch_size").get<int>();
    c.seed = j.value("seed", c.seed);
    c.balanced_include_silence = j.value("balanced_include_silence", c.balanced_include_silence);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

void LabeledInputs::validate(const std::string& what, Eigen::Index input_size) const {
  if (labels.empty()) throw ContractError(what + " set is empty");
  if (inputs.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw ContractError(what + " set: " + std::to_string(inputs.cols()) + " input columns for " +
                        std::to_string(labels.size()) + " labels");
  }
  if (inputs.rows() != input_size) {
    throw ContractError(what + " set: input size " + std::to_string(inputs.rows()) + " != model input size " +
                        std::to_string(input_size));
  }
  if (!utterance_ids.empty() && (utterance_ids.size() != labels.size() || centers_s.size() != labels.size())) {
    throw ContractError(what + " set: key columns do not match the label count");
  }
}

json EpochMetrics::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_accuracy", train_accuracy},
          {"validation_phone_error_rate", validation_phone_error_rate},
          {"validation_balanced_accuracy", validation_balanced_accuracy}};
}

EpochMetrics EpochMetrics::from_json(const json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.train_loss = j.at("train_loss").get<double>();
  m.train_accuracy = j.at("train_accuracy").get<double>();
  m.validation_phone_error_rate = j.at("validation_phone_error_rate").get<double>();
  m.validation_balanced_accuracy = j.at("validation_balanced_accuracy").get<double>();
  return m;
}

json CheckpointMeta::to_json() const {
  return {{"path", path.string()},
          {"epoch", epoch},
          {"validation_phone_error_rate", validation_phone_error_rate},
          {"config", config}};
}

CheckpointMeta CheckpointMeta::from_json(const json& j) {
  CheckpointMeta m;
  m.path = j.at("path").get<std::string>();
  m.epoch = j.at("epoch").get<int>();
  m.validation_phone_error_rate = j.at("validation_phone_error_rate").get<double>();
  m.config = j.value("config", json::object());
  return m;
}

// ---------------------------------------------------------------- optimizers

namespace {

class Adadelta final : public Optimizer {
 public:
  Adadelta(const OptimizerConfig& c, std::vector<nn::Parameter<float>*> params)
      : params_(std::move(params)), lr_(c.lr), rho_(c.rho), eps_(c.resolved_eps()) {
    for (auto* p : params_) {
      square_avg_.push_back(Eigen::ArrayXXf::Zero(p->value.rows(), p->value.cols()));
      acc_delta_.push_back(Eigen::ArrayXXf::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() override {
    const auto rho = static_cast<float>(rho_);
    const auto eps = static_cast<float>(eps_);
    const auto lr = static_cast<float>(lr_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto g = params_[i]->grad.array();
      auto& sq = square_avg_[i];
      auto& acc = acc_delta_[i];
      sq = rho * sq + (1.0f - rho) * g.square();
      const Eigen::ArrayXXf update = (acc + eps).sqrt() / (sq + eps).sqrt() * g;
      acc = rho * acc + (1.0f - rho) * update.square();
      params_[i]->value.array() -= lr * update;
    }
  }

 private:
  std::vector<nn::Parameter<float>*> params_;
  std::vector<Eigen::ArrayXXf> square_avg_, acc_delta_;
  double lr_, rho_, eps_;
};

class Adam final : public Optimizer {
 public:
  Adam(const OptimizerConfig& c, std::vector<nn::Parameter<float>*> params)
      : params_(std::move(params)), lr_(c.lr), beta1_(c.beta1), beta2_(c.beta2), eps_(c.resolved_eps()) {
    for (auto* p : params_) {
      m_.push_back(Eigen::ArrayXXf::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Eigen::ArrayXXf::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() override {
    ++t_;
    const auto b1 = static_cast<float>(beta1_);
    const auto b2 = static_cast<float>(beta2_);
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    const auto step_size = static_cast<float>(lr_ / bc1);
    const auto bc2_sqrt = static_cast<float>(std::sqrt(bc2));
    const auto eps = static_cast<float>(eps_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto g = params_[i]->grad.array();
      m_[i] = b1 * m_[i] + (1.0f - b1) * g;
      v_[i] = b2 * v_[i] + (1.0f - b2) * g.square();
      params_[i]->value.array() -= step_size * m_[i] / (v_[i].sqrt() / bc2_sqrt + eps);
    }
  }

 private:
  std::vector<nn::Parameter<float>*> params_;
  std::vector<Eigen::ArrayXXf> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
};

std::vector<Eigen::Index> batch_columns(const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
  std::vector<Eigen::Index> cols;
  cols.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) cols.push_back(static_cast<Eigen::Index>(order[k]));
  return cols;
}

void check_disjoint(const LabeledInputs& a, const LabeledInputs& b) {
  if (a.utterance_ids.empty() || b.utterance_ids.empty()) return;
  std::set<std::pair<std::string, double>> keys;
  for (std::size_t i = 0; i < a.size(); ++i) keys.emplace(a.utterance_ids[i], a.centers_s[i]);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (keys.count({b.utterance_ids[i], b.centers_s[i]})) {
      throw ContractError("train and validation sets share frame (" + b.utterance_ids[i] + ", " +
                          std::to_string(b.centers_s[i]) + ")");
    }
  }
}

void check_labels(const LabeledInputs& data, Eigen::Index n_classes, const std::string& what) {
  for (PhoneId y : data.labels) {
    if (y < 0 || y >= n_classes) throw ContractError(what + " set has label " + std::to_string(y) + " outside the model");
  }
}

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config, std::vector<nn::Parameter<float>*> params) {
  config.validate("optimizer");
  if (config.kind == "adam") return std::make_unique<Adam>(config, std::move(params));
  return std::make_unique<Adadelta>(config, std::move(params));
}

// ---------------------------------------------------------------- loops

std::vector<PhoneId> predict_all(const PhoneClassifier<float>& model, const Eigen::MatrixXf& inputs, int batch_size) {
  std::vector<PhoneId> out;
  out.reserve(static_cast<std::size_t>(inputs.cols()));
  const Eigen::Index step = std::max(1, batch_size);
  for (Eigen::Index start = 0; start < inputs.cols(); start += step) {
    const Eigen::Index n = std::min(step, inputs.cols() - start);
    const auto preds = predict_phones<float>(model.logits(inputs.middleCols(start, n)));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

ValidationResult validate(const PhoneClassifier<float>& model, const LabeledInputs& data, int batch_size,
                          const std::set<PhoneId>& phones_included) {
  data.validate("validation", model.input_size());
  ValidationResult result;
  result.predictions = predict_all(model, data.inputs, batch_size);

  PredictionSet preds;
  preds.n_classes = static_cast<int>(model.head().output_layer().out_dim());
  preds.records.reserve(data.size());
  long correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += result.predictions[i] == data.labels[i];
    preds.records.push_back({data.labels[i], result.predictions[i], {}, {}});
  }
  result.phone_error_rate = 1.0 - static_cast<double>(correct) / static_cast<double>(data.size());
  result.balanced_accuracy =
      (phones_included.empty() ? balanced_accuracy(preds) : balanced_accuracy(preds, phones_included)).value;
  return result;
}

std::size_t select_best_epoch(const std::vector<EpochMetrics>& epochs) {
  if (epochs.empty()) throw ContractError("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i) {
    if (epochs[i].validation_phone_error_rate < epochs[best].validation_phone_error_rate) best = i;
  }
  return best;
}

TrainResult train(PhoneClassifier<float>& model, const LabeledInputs& train_set, const LabeledInputs& validation_set,
                  const TrainingConfig& config, const TrainOptions& options) {
  config.validate();
  train_set.validate("training", model.input_size());
  validation_set.validate("validation", model.input_size());
  const auto n_classes = model.head().output_layer().out_dim();
  check_labels(train_set, n_classes, "training");
  check_labels(validation_set, n_classes, "validation");
  check_disjoint(train_set, validation_set);

  const EncoderKind kind = model.config().encoder;
  const int batch_size = config.effective_batch_size(kind);

  // Parameter groups: the head always trains; the encoder only when trainable.
  std::vector<std::unique_ptr<Optimizer>> optimizers;
  auto head_params = model.head_parameters();
  auto encoder_params = model.encoder().trainable_parameters();
  if (kind == EncoderKind::cnn && !config.cnn_uses_encoder_optimizer) {
    head_params.insert(head_params.begin(), encoder_params.begin(), encoder_params.end());
    encoder_params.clear();
  }
  optimizers.push_back(make_optimizer(config.head_optimizer, head_params));
  if (!encoder_params.empty()) optimizers.push_back(make_optimizer(config.encoder_optimizer, encoder_params));

  // Validation balanced accuracy over the phones present, silence optional.
  std::set<PhoneId> val_phones(validation_set.labels.begin(), validation_set.labels.end());
  if (!config.balanced_include_silence && val_phones.size() > 1) val_phones.erase(PhoneInventory::kPhoneCount);

  const json snapshot = {{"training", config.to_json()}, {"model", model.config().to_json()}};
  std::ofstream log;
  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    log.open(*options.run_dir / "train_log.jsonl");
    if (!log) throw CheckpointError("cannot write training log in " + options.run_dir->string());
  }

  const auto all_params = model.all_parameters();
  std::vector<Eigen::MatrixXf> best_values;
  TrainResult result;
  const std::size_t n = train_set.size();
  std::vector<double> sample_loss(n, 0.0);
  std::vector<double> batch_loss;
  std::vector<std::size_t> order(n);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);

    long correct = 0;
    long batch_index = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size), ++batch_index) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
      const auto cols = batch_columns(order, start, end);
      const Eigen::MatrixXf inputs = train_set.inputs(Eigen::all, cols);
      std::vector<int> labels;
      labels.reserve(cols.size());
      for (auto c : cols) labels.push_back(train_set.labels[static_cast<std::size_t>(c)]);

      model.zero_grad();
      const Eigen::MatrixXf logits = model.forward(inputs);
      Eigen::MatrixXf grad;
      const double loss = nn::cross_entropy<float>(logits, labels, &grad, &batch_loss);
      if (!std::isfinite(loss)) throw TrainingError(epoch, batch_index, "non-finite loss");
      const auto preds = predict_phones<float>(logits);
      for (std::size_t k = 0; k < cols.size(); ++k) {
        sample_loss[static_cast<std::size_t>(cols[k])] = batch_loss[k];
        correct += preds[k] == labels[k];
      }
      model.backward(grad);
      for (auto& opt : optimizers) opt->step();
    }

    EpochMetrics m;
    m.epoch = epoch;
    // Summed in dataset order so the value does not depend on the shuffle.
    m.train_loss = std::accumulate(sample_loss.begin(), sample_loss.end(), 0.0) / static_cast<double>(n);
    m.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    const auto val = validate(model, validation_set, batch_size, val_phones);
    m.validation_phone_error_rate = val.phone_error_rate;
    m.validation_balanced_accuracy = val.balanced_accuracy;
    result.epochs.push_back(m);

    const bool improved = result.epochs.size() == 1 ||
                          m.validation_phone_error_rate < result.best.validation_phone_error_rate;
    std::filesystem::path ckpt;
    if (options.run_dir) {
      ckpt = *options.run_dir / ("epoch_" + std::to_string(epoch)) / "model.ckpt";
      save_checkpoint<float>(ckpt, model, options.inventory_hash, {{"epoch", epoch}, {"training", config.to_json()}});
      log << m.to_json().dump() << '\n';
      log.flush();
    }
    if (improved) {
      result.best = CheckpointMeta{ckpt, epoch, m.validation_phone_error_rate, snapshot};
      best_values.clear();
      for (const auto* p : all_params) best_values.push_back(p->value);
      if (options.run_dir) {
        std::ofstream best(*options.run_dir / "best.json");
        best << result.best.to_json().dump(2) << '\n';
      }
    }
    if (options.on_epoch) options.on_epoch(m);
  }

  for (std::size_t i = 0; i < all_params.size(); ++i) all_params[i]->value = best_values[i];
  return result;
}

}  // namespace phonecls
