#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "phonecls/models/classifier.hpp"

namespace phonecls {

struct OptimizerConfig {
  std::string kind = "adadelta";  // adadelta | adam
  double lr = 0.9;
  double rho = 0.9;                  // adadelta
  double beta1 = 0.9;                // adam
  double beta2 = 0.999;              // adam
  std::optional<double> eps;         // 1e-6 for adadelta, 1e-8 for adam

  void validate(const std::string& what) const;
  double resolved_eps() const;
  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);

  static OptimizerConfig adadelta(double lr) {
    OptimizerConfig c;
    c.lr = lr;
    return c;
  }
  static OptimizerConfig adam(double lr) {
    OptimizerConfig c;
    c.kind = "adam";
    c.lr = lr;
    return c;
  }
};

struct TrainingConfig {
  int epochs = 15;
  OptimizerConfig head_optimizer = OptimizerConfig::adadelta(0.9);
  // Used for a trainable SSL encoder. A CNN encoder trained from scratch
  // shares the head optimizer unless cnn_uses_encoder_optimizer is set.
  OptimizerConfig encoder_optimizer = OptimizerConfig::adam(1e-4);
  bool cnn_uses_encoder_optimizer = false;
  std::optional<int> batch_size;  // 256 for the CNN path, 32 for SSL
  std::uint64_t seed = 0;
  // Silence is left out of the logged validation balanced accuracy unless set.
  bool balanced_include_silence = false;

  void validate() const;
  int effective_batch_size(EncoderKind kind) const;
  nlohmann::json to_json() const;
  static TrainingConfig from_json(const nlohmann::json& j);
};

/// Model inputs (one column per frame) with their labels. The keys are optional
/// and only used to check that train and validation sets do not overlap.
struct LabeledInputs {
  Eigen::MatrixXf inputs;
  std::vector<PhoneId> labels;
  std::vector<std::string> utterance_ids;
  std::vector<double> centers_s;

  std::size_t size() const { return labels.size(); }
  void validate(const std::string& what, Eigen::Index input_size) const;
};

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;  // fraction in [0, 1]
  double validation_phone_error_rate = 0.0;  // 1 - micro accuracy
  double validation_balanced_accuracy = 0.0;  // percent

  nlohmann::json to_json() const;
  static EpochMetrics from_json(const nlohmann::json& j);
  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct CheckpointMeta {
  std::filesystem::path path;  // empty when training ran without a run directory
  int epoch = 0;
  double validation_phone_error_rate = 0.0;
  nlohmann::json config;  // training + model config snapshot

  nlohmann::json to_json() const;
  static CheckpointMeta from_json(const nlohmann::json& j);
};

struct TrainOptions {
  // Run directory: epoch_{k}/model.ckpt per epoch, best.json naming the
  // selected epoch, train_log.jsonl with one EpochMetrics per line.
  std::optional<std::filesystem::path> run_dir;
  std::uint64_t inventory_hash = 0;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  CheckpointMeta best;
  std::vector<EpochMetrics> epochs;
};

/// Trains the head (and the encoder when trainable) with softmax cross-entropy.
/// After the last epoch the model holds the parameters of the epoch with the
/// lowest validation error rate (earliest on ties).
TrainResult train(PhoneClassifier<float>& model, const LabeledInputs& train_set,
                  const LabeledInputs& validation_set, const TrainingConfig& config,
                  const TrainOptions& options = {});

struct ValidationResult {
  double phone_error_rate = 0.0;
  double balanced_accuracy = 0.0;
  std::vector<PhoneId> predictions;
};

/// Inference over a labelled set. The balanced accuracy averages the phones in
/// `phones_included`, or every phone present when it is empty.
ValidationResult validate(const PhoneClassifier<float>& model, const LabeledInputs& data, int batch_size = 256,
                          const std::set<PhoneId>& phones_included = {});

/// Batched inference-mode predictions.
std::vector<PhoneId> predict_all(const PhoneClassifier<float>& model, const Eigen::MatrixXf& inputs,
                                 int batch_size = 256);

/// Index of the minimum error (earliest epoch on ties).
std::size_t select_best_epoch(const std::vector<EpochMetrics>& epochs);

// ---------------------------------------------------------------- optimizers

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the current gradients.
  virtual void step() = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config,
                                          std::vector<nn::Parameter<float>*> params);

}  // namespace phonecls
