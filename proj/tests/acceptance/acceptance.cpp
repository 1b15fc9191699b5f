// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance WORK_DIR [CRITERION...]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "phonecls/corpus.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/features.hpp"
#include "phonecls/models/classifier.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/training.hpp"
#include "phonecls/util/random.hpp"

using namespace phonecls;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const PhoneInventory& french() {
  static const PhoneInventory inv = load_inventory(default_inventory_path());
  return inv;
}

PredictionSet random_set(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PredictionSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(uniform_index(rng, 32));
    const double p_correct = 0.2 + 0.75 * t / 31.0;
    const int y = uniform_unit(rng) < p_correct ? t : static_cast<int>(uniform_index(rng, 32));
    s.records.push_back({t, y, "s" + std::to_string(i % 7), "u"});
  }
  return s;
}

// Group by true phone, then average the per-phone ratios.
double oracle_balanced(const PredictionSet& p) {
  std::map<int, std::vector<const Prediction*>> by_phone;
  for (const auto& r : p.records) by_phone[r.true_label].push_back(&r);
  double sum = 0.0;
  for (const auto& [phone, rows] : by_phone) {
    long ok = 0;
    for (const auto* r : rows) ok += r->predicted_label == phone;
    sum += 100.0 * static_cast<double>(ok) / static_cast<double>(rows.size());
  }
  return sum / static_cast<double>(by_phone.size());
}

// Each frame is correct with probability p, phones uniform over 31 classes.
PredictionSet bernoulli_set(std::size_t n, double p, std::uint64_t seed) {
  Rng rng(seed);
  PredictionSet s;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(i % 31);
    const int y = uniform_unit(rng) < p ? t : (t + 1) % 31;
    s.records.push_back({t, y, "s", "u"});
  }
  return s;
}

std::pair<LabeledInputs, LabeledInputs> separable_split(int train_per_class, int val_per_class, std::uint64_t seed) {
  const int per_class = train_per_class + val_per_class;
  const auto all = make_separable_dataset(per_class, 32, 1320, seed);
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

json cell_report(const std::string& run_id, double value, double low, double high) {
  json r = {{"schema_version", kReportSchemaVersion}, {"run_id", run_id}};
  r["config"] = {{"run_id", run_id}, {"test_corpora", {"patient"}}};
  r["test"]["patient"] = {{"balanced_accuracy", {{"value", value}}},
                          {"ci", {{"low", low}, {"high", high}, {"half_width", (high - low) / 2}, {"point", value}}}};
  return r;
}

// ---------------------------------------------------------------- criteria

void metric_oracle(Verdict& v) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = random_set(10000, seed);
    worst = std::max(worst, std::abs(balanced_accuracy(p).value - oracle_balanced(p)));
  }
  const double t = seconds_since(t0);
  v.detail << "max |diff| = " << worst << " over 100 sets, " << t << " s";
  v.require(worst < 1e-12, "difference < 1e-12");
  v.require(t < 10.0, "runtime < 10 s");
}

void duplication_invariance(Verdict& v) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto p = random_set(10000, 1000 + seed);
    const double base = balanced_accuracy(p).value;
    for (int phone = 0; phone < 32; ++phone) {
      auto dup = p;
      for (const auto& r : p.records) {
        if (r.true_label == phone) dup.records.push_back(r);
      }
      worst = std::max(worst, std::abs(balanced_accuracy(dup).value - base));
    }
  }
  v.detail << "max change = " << worst << " over 96 duplications";
  v.require(worst < 1e-12, "change < 1e-12");
}

void bootstrap_coverage(Verdict& v) {
  const auto t0 = Clock::now();
  BootstrapOptions opts;
  opts.n_resamples = 1000;
  opts.alpha = 0.05;
  const auto metric = balanced_accuracy_metric(phone_classes(french()));
  int covered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    opts.seed = derive_seed(99, trial);
    const auto ci = bootstrap_ci(bernoulli_set(10000, 0.85, derive_seed(17, trial)), metric, opts);
    covered += ci.low <= 85.0 && 85.0 <= ci.high;
  }
  opts.seed = 5;
  const auto small = bootstrap_ci(bernoulli_set(4000, 0.85, 1), metric, opts);
  const auto large = bootstrap_ci(bernoulli_set(40000, 0.85, 2), metric, opts);
  const double t = seconds_since(t0);
  v.detail << covered << "/100 cover 85.0; half-width " << small.half_width << " at 4k, " << large.half_width
           << " at 40k; " << t << " s";
  v.require(covered >= 90, ">= 90 of 100 trials cover");
  v.require(large.half_width < small.half_width, "40k narrower than 4k");
  v.require(t < 120.0, "runtime < 2 min");
}

void confusion_contract(Verdict& v) {
  const auto& inv = french();
  auto id = [&](const char* s) { return inv.index_of(s); };

  const auto m = confusion_matrix(random_set(10000, 7), inv);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m.percent.rows(); ++i) {
    if (!m.empty_rows[static_cast<std::size_t>(i)]) worst = std::max(worst, std::abs(m.percent.row(i).sum() - 100.0));
  }
  v.require(worst <= 1e-9, "rows sum to 100 +- 1e-9");

  PredictionSet identity;
  for (int k = 0; k < 32; ++k) {
    for (int r = 0; r <= k; ++r) identity.records.push_back({k, k, "s", "u"});
  }
  const auto im = confusion_matrix(identity, inv);
  v.require(im.percent == 100.0 * Eigen::MatrixXd::Identity(32, 32), "identity pattern exact");

  // a: 3 right, 1 as t. t: 1 right, 1 as s.
  PredictionSet hand;
  for (int i = 0; i < 3; ++i) hand.records.push_back({id("a"), id("a"), "s", "u"});
  hand.records.push_back({id("a"), id("t"), "s", "u"});
  hand.records.push_back({id("t"), id("t"), "s", "u"});
  hand.records.push_back({id("t"), id("s"), "s", "u"});
  const auto hm = confusion_matrix(hand, inv);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(32, 32);
  expected(id("a"), id("a")) = 75.0;
  expected(id("a"), id("t")) = 25.0;
  expected(id("t"), id("t")) = 50.0;
  expected(id("t"), id("s")) = 50.0;
  v.require(hm.percent == expected, "6-record case exact");
  v.detail << "max row-sum error " << worst << ", identity and 6-record case checked";
}

void window_geometry(Verdict& v) {
  const MelConfig config;
  const double span_ms = config.context_span_s() * 1000.0;
  const int wave = waveform_window_length(16000);
  const Eigen::VectorXd audio = Eigen::VectorXd::Zero(16000);
  const auto window = waveform_window(audio, 0.5, 16000);
  const auto feats = compute_features(audio, config);
  v.detail << "context span " << span_ms << " ms, waveform window " << wave << " samples ("
           << 1000.0 * wave / 16000 << " ms), feature width " << feats.cols();
  v.require(std::abs(span_ms - 120.0) < 1e-9, "span 120 ms");
  v.require(wave == 2032 && window.samples.size() == 2032, "waveform window 2032");
  v.require(config.feature_width() == 120 && feats.cols() == 120, "feature width 120");
  v.require(input_size(InputKind::context, config) == 11 * 120, "context input 11 x 120");
}

void gradient_check(Verdict& v) {
  const auto t0 = Clock::now();
  ModelConfig mc;  // full-size encoder and head
  mc.init_seed = 3;
  PhoneClassifier<double> model(mc);
  Rng rng(8);
  Eigen::MatrixXd x(1320, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = standard_normal(rng);
  const std::vector<int> labels{0, 5, 31, 7, 5};
  model.zero_grad();
  nn::Matrix<double> grad;
  nn::cross_entropy(model.forward(x), labels, &grad);
  model.backward(grad);

  const double h = 1e-5;
  double worst = 0.0;
  int checked = 0;
  for (auto* p : model.all_parameters()) {
    for (int s = 0; s < 12; ++s) {
      const auto k = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(p->value.size())));
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
      ++checked;
    }
  }
  const double t = seconds_since(t0);
  v.detail << checked << " coordinates, worst relative error " << worst << ", " << t << " s";
  v.require(worst <= 1e-4, "relative error <= 1e-4");
  v.require(t < 60.0, "runtime < 1 min");
}

void overfit(Verdict& v) {
  const auto t0 = Clock::now();
  auto [train_set, val_set] = separable_split(10, 1, 21);
  ModelConfig mc;
  mc.init_seed = 4;
  PhoneClassifier<float> model(mc);
  TrainingConfig config;
  config.epochs = 50;
  config.batch_size = 32;
  config.seed = 4;
  int reached = 0;
  double best = 0.0;
  TrainOptions opts;
  opts.on_epoch = [&](const EpochMetrics& m) {
    best = std::max(best, m.train_accuracy);
    if (!reached && m.train_accuracy >= 0.95) reached = m.epoch;
  };
  train(model, train_set, val_set, config, opts);
  const double t = seconds_since(t0);
  v.detail << train_set.size() << " frames, best training accuracy " << 100.0 * best << "%, ";
  if (reached) v.detail << ">= 95% at epoch " << reached << ", ";
  v.detail << t << " s";
  v.require(train_set.size() == 320, "320 training frames");
  v.require(reached > 0, ">= 95% within 50 epochs");
  v.require(t < 300.0, "runtime < 5 min");
}

void end_to_end(Verdict& v, const fs::path& work) {
  const auto t0 = Clock::now();
  SyntheticCorpusOptions synth;
  synth.minutes = 10.0;
  const auto corpus = generate_synthetic_corpus(work / "synth", synth, french());
  const auto config = ExperimentConfig::load(corpus.config);
  RunOptions opts;
  opts.out_dir = work / "runs";
  opts.force = true;
  const auto outcome = run_experiment(config, opts);
  const double t = seconds_since(t0);
  v.require(outcome.report.has_value(), "report produced");
  if (!outcome.report) return;
  const auto& report = *outcome.report;
  try {
    validate_report(report);
  } catch (const ValidationError& e) {
    v.require(false, e.what());
  }
  v.require(report.at("training").at("epochs").size() == 2, "2 training epochs");
  for (const auto& tag : config.test_corpora) {
    const auto& e = report.at("test").at(tag);
    v.require(e.at("groups").contains("obstruents") && e.at("groups").contains("oral_nasal"),
              tag + " has both group submatrices");
    v.detail << tag << " " << e.at("balanced_accuracy").at("value").get<double>() << " +/- "
             << e.at("ci").at("half_width").get<double>() << ", ";
  }
  v.detail << t << " s";
  v.require(t < 900.0, "runtime < 15 min");
}

void correlation(Verdict& v) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(50, -3.0, 7.0);
  Eigen::VectorXd y = (2.0 * x).array() + 3.0;
  const double r_line = pearson(x, y);
  v.require(std::abs(r_line - 1.0) <= 1e-12, "y = 2x + 3 gives 1");

  Rng rng(31);
  Eigen::VectorXd a(200), b(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    a(i) = standard_normal(rng);
    b(i) = a(i) + standard_normal(rng);
  }
  const double r_ab = pearson(a, b);
  const double r_affine = pearson((3.5 * a).array() - 2.0, (0.25 * b).array() + 11.0);
  v.require(std::abs(r_ab - r_affine) <= 1e-12, "affine invariance");

  // Accuracy = 40 + 5 * severity + noise, severity uniform on [0, 10].
  const double slope = 5.0;
  const double sd_x = 10.0 / std::sqrt(12.0);
  const double target_r = 0.9;
  const double sigma = slope * sd_x * std::sqrt(1.0 / (target_r * target_r) - 1.0);
  const double generating_r = slope * sd_x / std::sqrt(slope * slope * sd_x * sd_x + sigma * sigma);
  const int n = 400;
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng trng(derive_seed(2024, trial));
    std::vector<SpeakerScore> scores;
    std::map<std::string, double> accuracies;
    for (int s = 0; s < n; ++s) {
      const std::string id = "P" + std::to_string(1000 + s);
      const double severity = 10.0 * uniform_unit(trng);
      scores.push_back({id, severity, std::nullopt, 6});
      accuracies[id] = 40.0 + slope * severity + sigma * standard_normal(trng);
    }
    const auto scatter = build_scatter(scores, accuracies, RatingDimension::severity);
    if (!scatter.fit) {
      v.require(false, "fit present");
      return;
    }
    worst = std::max(worst, std::abs(scatter.fit->r - generating_r));
  }
  v.detail << "r(2x+3) - 1 = " << r_line - 1.0 << ", affine diff " << std::abs(r_ab - r_affine) << ", max |r - "
           << generating_r << "| over 20 trials of " << n << " speakers = " << worst;
  v.require(worst <= 0.05, "estimated r within 0.05");
}

void frozen_encoder(Verdict& v) {
  auto [train_set, val_set] = separable_split(4, 1, 33);
  ModelConfig mc;
  mc.cnn.trainable = false;
  mc.init_seed = 6;
  PhoneClassifier<float> model(mc);
  std::vector<Eigen::MatrixXf> enc_before, head_before;
  for (const auto* p : model.encoder_parameters()) enc_before.push_back(p->value);
  for (const auto* p : model.head_parameters()) head_before.push_back(p->value);
  const Eigen::MatrixXf probe = val_set.inputs.leftCols(4);
  const Eigen::MatrixXf emb_before = model.encoder().apply(probe);

  TrainingConfig config;
  config.epochs = 2;
  config.batch_size = 32;
  const auto result = train(model, train_set, val_set, config);

  double distance = 0.0;
  const auto enc = model.encoder_parameters();
  for (std::size_t i = 0; i < enc.size(); ++i) distance += (enc[i]->value - enc_before[i]).squaredNorm();
  double head_moved = 0.0;
  const auto head = model.head_parameters();
  for (std::size_t i = 0; i < head.size(); ++i) head_moved += (head[i]->value - head_before[i]).squaredNorm();
  const bool identical = model.encoder().apply(probe) == emb_before;
  v.detail << "encoder distance " << std::sqrt(distance) << ", head distance " << std::sqrt(head_moved)
           << ", probe " << (identical ? "bit-identical" : "changed") << ", " << result.epochs.size() << " epochs";
  v.require(result.epochs.size() == 2, "2 epochs");
  v.require(distance == 0.0, "encoder distance exactly 0");
  v.require(identical, "probe embedding bit-identical");
  v.require(head_moved > 0.0, "head was trained");
}

void table_machinery(Verdict& v) {
  const auto overlap = tabulate({cell_report("a", 80.0, 78.0, 82.0), cell_report("b", 81.0, 79.0, 83.0)});
  const auto apart = tabulate({cell_report("a", 80.0, 78.0, 82.0), cell_report("b", 90.0, 88.0, 92.0)});
  const auto touching = tabulate({cell_report("a", 80.0, 78.0, 82.0), cell_report("b", 84.0, 82.0, 86.0)});
  const auto& o = overlap.cells[1][0];
  const auto& s = apart.cells[1][0];
  const auto& t = touching.cells[1][0];
  v.detail << "overlapping pair flagged: " << o.significant << ", disjoint pair flagged: " << s.significant
           << ", touching pair flagged: " << t.significant;
  v.require(o.best && !o.significant && !overlap.cells[0][0].significant, "overlap not flagged");
  v.require(s.best && s.significant && !apart.cells[0][0].significant, "disjoint flagged");
  v.require(!t.significant, "touching endpoints not flagged");
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "phonecls_acceptance";
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"balanced-accuracy duplication invariance", duplication_invariance},
      {"bootstrap coverage", bootstrap_coverage},
      {"confusion-matrix contract", confusion_contract},
      {"window geometry", window_geometry},
      {"gradient check", gradient_check},
      {"overfit smoke", overfit},
      {"end-to-end smoke", [&](Verdict& v) { end_to_end(v, work); }},
      {"correlation checks", correlation},
      {"frozen-encoder invariant", frozen_encoder},
      {"table machinery", table_machinery},
  };

  std::set<std::size_t> only;
  for (int a = 2; a < argc; ++a) only.insert(static_cast<std::size_t>(std::stoul(argv[a])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.ok = false;
      v.detail << "[exception: " << e.what() << "]";
    }
    failures += !v.ok;
    std::cout << (v.ok ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " - "
              << v.detail.str() << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
