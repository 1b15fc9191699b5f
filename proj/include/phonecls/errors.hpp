#pragma once

#include <stdexcept>
#include <string>

namespace phonecls {

// Three failure families, each mapped to a CLI exit code:
// ConfigError -> 2, DataError -> 3, RuntimeFailure -> 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// corpus
class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};
class InventoryError : public DataError { using DataError::DataError; };
class AlignmentError : public DataError { using DataError::DataError; };
class MappingError : public DataError { using DataError::DataError; };
class BalancingError : public DataError { using DataError::DataError; };
class SplitError : public DataError { using DataError::DataError; };

// features
class AudioError : public DataError { using DataError::DataError; };
class FeatureError : public DataError { using DataError::DataError; };
class WindowError : public DataError { using DataError::DataError; };

// models / training
class ContractError : public RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
class BackendError : public RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
class PredictionError : public RuntimeFailure { using RuntimeFailure::RuntimeFailure; };
class CheckpointError : public RuntimeFailure { using RuntimeFailure::RuntimeFailure; };

class TrainingError : public RuntimeFailure {
 public:
  TrainingError(int epoch, long batch, const std::string& what)
      : RuntimeFailure("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                       ": " + what),
        epoch_(epoch),
        batch_(batch) {}
  int epoch() const { return epoch_; }
  long batch() const { return batch_; }

 private:
  int epoch_;
  long batch_;
};

// evaluation / perceptual
class MetricError : public DataError { using DataError::DataError; };
class CiError : public DataError { using DataError::DataError; };
class GroupError : public DataError { using DataError::DataError; };
class ValidationError : public DataError { using DataError::DataError; };
class CorrelationError : public DataError { using DataError::DataError; };
class FitError : public DataError { using DataError::DataError; };
class ExportError : public DataError { using DataError::DataError; };
class TabulationError : public DataError { using DataError::DataError; };

}  // namespace phonecls
