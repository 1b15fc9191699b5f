#include <algorithm>
#include <vector>

#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"

namespace phonecls {

void PredictionSet::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.true_label < 0 || r.true_label >= n_classes || r.predicted_label < 0 ||
        r.predicted_label >= n_classes) {
      throw MetricError("prediction record " + std::to_string(i) + " has a label outside [0, " +
                        std::to_string(n_classes - 1) + "]");
    }
  }
}

PredictionView view_of(const PredictionSet& preds) {
  return PredictionView{std::span<const Prediction>(preds.records), {}};
}

namespace {

struct Tally {
  std::vector<long> correct;
  std::vector<long> total;
};

Tally tally(const PredictionView& view, int n_classes) {
  Tally t{std::vector<long>(static_cast<std::size_t>(n_classes), 0),
          std::vector<long>(static_cast<std::size_t>(n_classes), 0)};
  const std::size_t n = view.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = view[i];
    const auto k = static_cast<std::size_t>(r.true_label);
    ++t.total[k];
    if (r.predicted_label == r.true_label) ++t.correct[k];
  }
  return t;
}

int class_bound(const PredictionView& view) {
  int n = PhoneInventory::kClassCount;
  for (const auto& r : view.records) n = std::max({n, r.true_label + 1, r.predicted_label + 1});
  return n;
}

}  // namespace

std::map<PhoneId, double> per_phone_accuracy(const PredictionView& view) {
  const auto t = tally(view, class_bound(view));
  std::map<PhoneId, double> out;
  for (std::size_t k = 0; k < t.total.size(); ++k) {
    if (t.total[k] > 0) {
      out[static_cast<PhoneId>(k)] = 100.0 * static_cast<double>(t.correct[k]) / static_cast<double>(t.total[k]);
    }
  }
  return out;
}

std::map<PhoneId, double> per_phone_accuracy(const PredictionSet& preds) {
  preds.validate();
  return per_phone_accuracy(view_of(preds));
}

double balanced_accuracy_value(const PredictionView& view, const std::set<PhoneId>& phones_included) {
  if (view.size() == 0) throw MetricError("balanced accuracy of an empty prediction set");
  if (phones_included.empty()) throw MetricError("balanced accuracy over an empty phone set");
  const int bound = std::max(class_bound(view), *phones_included.rbegin() + 1);
  const auto t = tally(view, bound);
  double sum = 0.0;
  for (PhoneId p : phones_included) {
    if (p < 0 || t.total[static_cast<std::size_t>(p)] == 0) {
      throw MetricError("phone " + std::to_string(p) + " has no true occurrences");
    }
    const auto k = static_cast<std::size_t>(p);
    sum += 100.0 * static_cast<double>(t.correct[k]) / static_cast<double>(t.total[k]);
  }
  return sum / static_cast<double>(phones_included.size());
}

BalancedAccuracyResult balanced_accuracy(const PredictionSet& preds, const std::set<PhoneId>& phones_included) {
  preds.validate();
  if (preds.empty()) throw MetricError("balanced accuracy of an empty prediction set");
  const auto per_phone = per_phone_accuracy(preds);
  BalancedAccuracyResult result;
  result.phones_included = phones_included;
  if (phones_included.empty()) throw MetricError("balanced accuracy over an empty phone set");
  double sum = 0.0;
  for (PhoneId p : phones_included) {
    const auto it = per_phone.find(p);
    if (it == per_phone.end()) throw MetricError("phone " + std::to_string(p) + " has no true occurrences");
    result.per_phone[p] = it->second;
    sum += it->second;
  }
  result.value = sum / static_cast<double>(phones_included.size());
  return result;
}

BalancedAccuracyResult balanced_accuracy(const PredictionSet& preds) {
  return balanced_accuracy(preds, phones_present(preds));
}

std::set<PhoneId> phones_present(const PredictionSet& preds) {
  std::set<PhoneId> out;
  for (const auto& r : preds.records) out.insert(r.true_label);
  return out;
}

std::set<PhoneId> phone_classes(const PhoneInventory& inventory, bool include_silence) {
  std::set<PhoneId> out;
  for (PhoneId p = 0; p < inventory.size(); ++p) {
    if (include_silence || p != inventory.silence_index()) out.insert(p);
  }
  return out;
}

double micro_accuracy(const PredictionSet& preds) {
  if (preds.empty()) throw MetricError("accuracy of an empty prediction set");
  long correct = 0;
  for (const auto& r : preds.records) correct += r.predicted_label == r.true_label;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.records.size());
}

MetricFn balanced_accuracy_metric(std::set<PhoneId> phones_included) {
  return [phones = std::move(phones_included)](const PredictionView& view) {
    return balanced_accuracy_value(view, phones);
  };
}

}  // namespace phonecls
