#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls {

std::string to_string(ResamplingUnit unit) { return unit == ResamplingUnit::frames ? "frames" : "speakers"; }

ResamplingUnit parse_resampling_unit(const std::string& text) {
  if (text == "frames") return ResamplingUnit::frames;
  if (text == "speakers") return ResamplingUnit::speakers;
  throw ConfigError("unknown resampling unit '" + text + "' (expected frames or speakers)");
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw CiError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

namespace {

// Index groups a resample draws from: one per true phone (frames) or per speaker.
std::vector<std::vector<std::uint32_t>> strata(const PredictionSet& preds, ResamplingUnit unit) {
  std::vector<std::vector<std::uint32_t>> groups;
  if (unit == ResamplingUnit::frames) {
    std::map<PhoneId, std::vector<std::uint32_t>> by_phone;
    for (std::size_t i = 0; i < preds.records.size(); ++i) {
      by_phone[preds.records[i].true_label].push_back(static_cast<std::uint32_t>(i));
    }
    for (auto& [phone, rows] : by_phone) groups.push_back(std::move(rows));
  } else {
    std::map<std::string, std::vector<std::uint32_t>> by_speaker;
    for (std::size_t i = 0; i < preds.records.size(); ++i) {
      by_speaker[preds.records[i].speaker_id].push_back(static_cast<std::uint32_t>(i));
    }
    for (auto& [speaker, rows] : by_speaker) groups.push_back(std::move(rows));
  }
  return groups;
}

void draw(const std::vector<std::vector<std::uint32_t>>& groups, ResamplingUnit unit, Rng& rng,
          std::vector<std::uint32_t>& rows) {
  rows.clear();
  if (unit == ResamplingUnit::frames) {
    for (const auto& g : groups) {
      for (std::size_t k = 0; k < g.size(); ++k) rows.push_back(g[uniform_index(rng, g.size())]);
    }
  } else {
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& g = groups[uniform_index(rng, groups.size())];
      rows.insert(rows.end(), g.begin(), g.end());
    }
  }
}

}  // namespace

BootstrapCI bootstrap_ci(const PredictionSet& preds, const MetricFn& metric, const BootstrapOptions& options) {
  if (options.n_resamples < 100) throw ConfigError("bootstrap needs at least 100 resamples");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ConfigError("bootstrap alpha must lie in (0, 1)");
  if (preds.empty()) throw CiError("bootstrap over an empty prediction set");
  preds.validate();

  BootstrapCI ci;
  ci.n_resamples = options.n_resamples;
  ci.alpha = options.alpha;
  ci.seed = options.seed;
  ci.unit = options.unit;
  ci.point = metric(view_of(preds));

  const auto groups = strata(preds, options.unit);
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(options.n_resamples));
  std::vector<std::uint32_t> rows;
  rows.reserve(preds.records.size());
  int retries_left = options.max_retries;
  for (int i = 0; i < options.n_resamples; ++i) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(derive_seed(derive_seed(options.seed, static_cast<std::uint64_t>(i)), attempt));
      draw(groups, options.unit, rng, rows);
      try {
        stats.push_back(metric(PredictionView{std::span<const Prediction>(preds.records), rows}));
        break;
      } catch (const MetricError& e) {
        if (retries_left-- <= 0) {
          throw CiError("metric undefined on resample " + std::to_string(i) + " after exhausting retries: " +
                        e.what());
        }
      }
    }
  }

  std::sort(stats.begin(), stats.end());
  ci.low = std::min(quantile_sorted(stats, options.alpha / 2.0), ci.point);
  ci.high = std::max(quantile_sorted(stats, 1.0 - options.alpha / 2.0), ci.point);
  ci.half_width = (ci.high - ci.low) / 2.0;
  return ci;
}

}  // namespace phonecls
