#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls {

namespace {

// Indices of records per stratum, in canonical record order.
using Strata = std::vector<std::vector<std::size_t>>;

std::vector<FrameRecord> sorted_copy(const std::vector<FrameRecord>& frames) {
  auto sorted = frames;
  std::stable_sort(sorted.begin(), sorted.end(), frame_order);
  return sorted;
}

// Seeded uniform subsample of `take` indices from `pool`.
void sample_into(std::vector<std::size_t> pool, std::size_t take, std::uint64_t seed,
                 std::uint64_t stream, std::vector<std::size_t>& out) {
  if (take >= pool.size()) {
    out.insert(out.end(), pool.begin(), pool.end());
    return;
  }
  Rng rng(derive_seed(seed, stream));
  // partial Fisher-Yates
  for (std::size_t i = 0; i < take; ++i) {
    const auto j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  out.insert(out.end(), pool.begin(), pool.begin() + static_cast<long>(take));
}

}  // namespace

std::vector<FrameRecord> balance(const std::vector<FrameRecord>& input,
                                 const BalancingPolicy& policy,
                                 const PhoneInventory& inventory) {
  const auto frames = sorted_copy(input);
  const int n_classes = inventory.size();
  const auto silence = inventory.silence_index();

  // stratum 0 = female, 1 = male, 2 = unknown
  std::vector<Strata> by_class(static_cast<std::size_t>(n_classes), Strata(3));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.label < 0 || f.label >= n_classes) {
      throw MappingError("label out of range: " + std::to_string(f.label));
    }
    by_class[static_cast<std::size_t>(f.label)][static_cast<std::size_t>(f.gender)].push_back(i);
  }

  auto constrains = [&](PhoneId c) { return policy.include_silence || c != silence; };
  // Per-class capacity under the active policy.
  auto capacity = [&](PhoneId c) -> std::size_t {
    const auto& s = by_class[static_cast<std::size_t>(c)];
    if (policy.balance_gender) return 2 * std::min(s[0].size(), s[1].size());
    return s[0].size() + s[1].size() + s[2].size();
  };

  std::size_t common = std::numeric_limits<std::size_t>::max();
  if (policy.balance_phones) {
    for (PhoneId c = 0; c < n_classes; ++c) {
      if (!constrains(c)) continue;
      const auto cap = capacity(c);
      if (cap == 0) {
        throw BalancingError("class '" + inventory.symbol(c) + "' has no usable frames" +
                             (policy.balance_gender ? " in both genders" : ""));
      }
      common = std::min(common, cap);
    }
    if (policy.target_count) common = std::min(common, *policy.target_count);
  } else if (policy.target_count) {
    common = *policy.target_count;
  }
  if (policy.balance_gender && common != std::numeric_limits<std::size_t>::max()) common -= common % 2;

  std::vector<std::size_t> chosen;
  for (PhoneId c = 0; c < n_classes; ++c) {
    const auto& s = by_class[static_cast<std::size_t>(c)];
    const auto stream = static_cast<std::uint64_t>(c) * 4;
    if (policy.balance_gender) {
      std::size_t per_gender = std::min(s[0].size(), s[1].size());
      if (common != std::numeric_limits<std::size_t>::max()) per_gender = std::min(per_gender, common / 2);
      sample_into(s[0], per_gender, policy.seed, stream + 0, chosen);
      sample_into(s[1], per_gender, policy.seed, stream + 1, chosen);
    } else {
      std::vector<std::size_t> pool;
      for (const auto& g : s) pool.insert(pool.end(), g.begin(), g.end());
      std::sort(pool.begin(), pool.end());
      sample_into(std::move(pool), common, policy.seed, stream + 3, chosen);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<FrameRecord> out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(frames[i]);
  return out;
}

TrainValidationSplit split_train_validation(const std::vector<FrameRecord>& input, double ratio,
                                            std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw SplitError("split ratio must lie strictly between 0 and 1");
  }
  const auto frames = sorted_copy(input);
  int max_label = -1;
  for (const auto& f : frames) max_label = std::max(max_label, f.label);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < frames.size(); ++i) {
    by_class[static_cast<std::size_t>(frames[i].label)].push_back(i);
  }

  std::vector<char> in_train(frames.size(), 0);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto pool = by_class[c];
    if (pool.empty()) continue;
    if (pool.size() < 2) {
      throw SplitError("class " + std::to_string(c) + " has fewer than 2 frames");
    }
    auto n_train = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pool.size()) + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, pool.size() - 1);
    Rng rng(derive_seed(seed, c));
    shuffle(pool, rng);
    for (std::size_t k = 0; k < n_train; ++k) in_train[pool[k]] = 1;
  }

  TrainValidationSplit split;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    (in_train[i] ? split.train : split.validation).push_back(frames[i]);
  }
  return split;
}

}  // namespace phonecls
