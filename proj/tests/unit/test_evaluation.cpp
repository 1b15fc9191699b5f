#include <cmath>
#include <map>

#include "doctest.h"
#include "phonecls/errors.hpp"
#include "phonecls/evaluation.hpp"
#include "phonecls/util/random.hpp"
#include "unit/helpers.hpp"

using namespace phonecls;

namespace {

const PhoneInventory& french() {
  static const PhoneInventory inv = load_inventory(default_inventory_path());
  return inv;
}

PhoneId id(const std::string& s) { return french().index_of(s); }

void add(PredictionSet& p, const std::string& truth, const std::string& pred, int times = 1,
         const std::string& speaker = "s1") {
  for (int i = 0; i < times; ++i) p.records.push_back({id(truth), id(pred), speaker, "u"});
}

PredictionSet random_set(std::size_t n, std::uint64_t seed, double p_correct = 0.5) {
  Rng rng(seed);
  PredictionSet p;
  for (std::size_t i = 0; i < n; ++i) {
    const int t = static_cast<int>(uniform_index(rng, 32));
    const int y = uniform_unit(rng) < p_correct ? t : static_cast<int>(uniform_index(rng, 32));
    p.records.push_back({t, y, "s" + std::to_string(uniform_index(rng, 10)), "u"});
  }
  return p;
}

// Group by true phone, then average the ratios.
double brute_force_balanced(const PredictionSet& p) {
  std::map<int, std::pair<long, long>> tally;
  for (const auto& r : p.records) {
    auto& [ok, total] = tally[r.true_label];
    ok += r.true_label == r.predicted_label;
    ++total;
  }
  double sum = 0.0;
  for (const auto& [phone, t] : tally) sum += 100.0 * static_cast<double>(t.first) / static_cast<double>(t.second);
  return sum / static_cast<double>(tally.size());
}

// Bernoulli(p) correctness on a uniform phone distribution.
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

}  // namespace

TEST_CASE("per-phone accuracy counts correct frames") {
  PredictionSet p;
  add(p, "a", "a", 3);
  add(p, "a", "t");
  add(p, "t", "t");
  add(p, "t", "a");
  const auto acc = per_phone_accuracy(p);
  CHECK(acc.size() == 2);
  CHECK(acc.at(id("a")) == 75.0);
  CHECK(acc.at(id("t")) == 50.0);
  CHECK(balanced_accuracy(p).value == 62.5);
  CHECK(micro_accuracy(p) == doctest::Approx(100.0 * 4 / 6));
}

TEST_CASE("a perfect predictor scores 100 on every phone") {
  PredictionSet p;
  add(p, "a", "a", 5);
  add(p, "s", "s", 2);
  for (const auto& [phone, v] : per_phone_accuracy(p)) CHECK(v == 100.0);
  CHECK(balanced_accuracy(p).value == 100.0);
}

TEST_CASE("class imbalance does not move balanced accuracy") {
  PredictionSet imbalanced, balanced;
  add(imbalanced, "a", "a", 750);
  add(imbalanced, "a", "t", 250);
  add(imbalanced, "t", "t", 1);
  add(imbalanced, "t", "a", 1);
  add(balanced, "a", "a", 3);
  add(balanced, "a", "t", 1);
  add(balanced, "t", "t", 2);
  add(balanced, "t", "a", 2);
  CHECK(balanced_accuracy(imbalanced).value == balanced_accuracy(balanced).value);
}

TEST_CASE("balanced accuracy equals the grouping oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_set(10000, seed);
    CHECK(std::abs(balanced_accuracy(p).value - brute_force_balanced(p)) < 1e-12);
  }
}

TEST_CASE("duplicating one phone's records changes nothing") {
  const auto p = random_set(5000, 3);
  const double base = balanced_accuracy(p).value;
  for (int phone : {0, 7, 30}) {
    auto dup = p;
    for (const auto& r : p.records) {
      if (r.true_label == phone) dup.records.push_back(r);
    }
    CHECK(std::abs(balanced_accuracy(dup).value - base) < 1e-12);
  }
}

TEST_CASE("silence is excluded unless asked for") {
  PredictionSet p;
  add(p, "a", "a", 2);
  add(p, "sil", "a", 2);
  const auto phones = phone_classes(french());
  CHECK(phones.size() == 31);
  CHECK_FALSE(phones.count(french().silence_index()));
  CHECK(phone_classes(french(), true).size() == 32);
  std::set<PhoneId> present;
  for (auto ph : phones_present(p)) {
    if (phones.count(ph)) present.insert(ph);
  }
  CHECK(balanced_accuracy(p, present).value == 100.0);
  CHECK(balanced_accuracy(p).value == 50.0);
}

TEST_CASE("an included phone without samples is a metric error naming it") {
  PredictionSet p;
  add(p, "a", "a");
  try {
    balanced_accuracy(p, {id("a"), id("ʒ")});
    FAIL("expected a metric error");
  } catch (const MetricError& e) {
    CHECK(std::string(e.what()).find("phone " + std::to_string(id("ʒ"))) != std::string::npos);
  }
  PredictionSet bad;
  bad.records.push_back({40, 0, "s", "u"});
  CHECK_THROWS_AS(bad.validate(), MetricError);
}

TEST_CASE("bootstrap of a perfect predictor is degenerate") {
  PredictionSet p;
  add(p, "a", "a", 20);
  add(p, "t", "t", 20);
  BootstrapOptions opts;
  opts.n_resamples = 200;
  const auto ci = bootstrap_ci(p, balanced_accuracy_metric({id("a"), id("t")}), opts);
  CHECK(ci.point == 100.0);
  CHECK(ci.low == 100.0);
  CHECK(ci.high == 100.0);
  CHECK(ci.half_width == 0.0);
}

TEST_CASE("bootstrap is seeded") {
  const auto p = random_set(2000, 5);
  BootstrapOptions opts;
  opts.n_resamples = 200;
  opts.seed = 17;
  const auto metric = balanced_accuracy_metric(phones_present(p));
  const auto a = bootstrap_ci(p, metric, opts);
  const auto b = bootstrap_ci(p, metric, opts);
  CHECK(a.low == b.low);
  CHECK(a.high == b.high);
  CHECK(a.low <= a.point);
  CHECK(a.point <= a.high);
  opts.seed = 18;
  const auto c = bootstrap_ci(p, metric, opts);
  CHECK((c.low != a.low || c.high != a.high));
}

TEST_CASE("bootstrap interval narrows with more frames") {
  BootstrapOptions opts;
  opts.n_resamples = 300;
  const auto small = bernoulli_set(4000, 0.85, 1);
  const auto large = bernoulli_set(40000, 0.85, 1);
  const auto ci_small = bootstrap_ci(small, balanced_accuracy_metric(phones_present(small)), opts);
  const auto ci_large = bootstrap_ci(large, balanced_accuracy_metric(phones_present(large)), opts);
  CHECK(ci_large.half_width < ci_small.half_width);
  // Roughly sqrt(10) narrower.
  CHECK(ci_small.half_width / ci_large.half_width == doctest::Approx(std::sqrt(10.0)).epsilon(0.25));
}

TEST_CASE("speaker resampling keeps whole speakers") {
  const auto p = random_set(3000, 9);
  BootstrapOptions opts;
  opts.n_resamples = 100;
  opts.unit = ResamplingUnit::speakers;
  const auto ci = bootstrap_ci(p, balanced_accuracy_metric(phones_present(p)), opts);
  CHECK(ci.unit == ResamplingUnit::speakers);
  CHECK(ci.low <= ci.point);
  CHECK(ci.point <= ci.high);
}

TEST_CASE("undefined resamples are redrawn, then fail") {
  const auto p = random_set(500, 2);
  BootstrapOptions opts;
  opts.n_resamples = 100;
  opts.max_retries = 5;
  int calls = 0;
  const MetricFn flaky = [&](const PredictionView& v) {
    if (++calls % 3 == 0) throw MetricError("undefined");
    return static_cast<double>(v.size());
  };
  // The point estimate is computed once; it must succeed.
  calls = 1;
  CHECK_THROWS_AS(bootstrap_ci(p, flaky, opts), CiError);
  const MetricFn never = [](const PredictionView&) -> double { throw MetricError("undefined"); };
  CHECK_THROWS_AS(bootstrap_ci(p, never, opts), DataError);
  opts.max_retries = 100;
  calls = 1;
  CHECK_NOTHROW(bootstrap_ci(p, flaky, opts));
}

TEST_CASE("bootstrap rejects bad options") {
  const auto p = random_set(100, 2);
  BootstrapOptions opts;
  opts.alpha = 1.5;
  CHECK_THROWS_AS(bootstrap_ci(p, balanced_accuracy_metric(phones_present(p)), opts), ConfigError);
  opts = BootstrapOptions{};
  opts.n_resamples = 99;
  CHECK_THROWS_AS(bootstrap_ci(p, balanced_accuracy_metric(phones_present(p)), opts), ConfigError);
  CHECK_THROWS_AS(bootstrap_ci(PredictionSet{}, balanced_accuracy_metric({}), BootstrapOptions{}), DataError);
}

TEST_CASE("quantiles interpolate linearly") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 5.0);
  CHECK(quantile_sorted(v, 0.5) == 3.0);
  CHECK(quantile_sorted(v, 0.125) == doctest::Approx(1.5));
}

TEST_CASE("hand-built confusion matrix") {
  PredictionSet p;
  add(p, "a", "a", 3);
  add(p, "a", "t");
  add(p, "t", "t");
  add(p, "t", "s");
  const auto m = confusion_matrix(p, french());
  CHECK(m.percent.rows() == 32);
  CHECK(m.percent.cols() == 32);
  CHECK(m.at("a", "a") == 75.0);
  CHECK(m.at("a", "t") == 25.0);
  CHECK(m.at("t", "t") == 50.0);
  CHECK(m.at("t", "s") == 50.0);
  CHECK(m.counts.sum() == 6.0);
  // Everything else is zero.
  CHECK(m.percent.sum() == 200.0);
  CHECK(m.empty_rows[static_cast<std::size_t>(id("s"))]);
  CHECK_FALSE(m.empty_rows[static_cast<std::size_t>(id("a"))]);
  CHECK_THROWS_AS(confusion_matrix(PredictionSet{}, french()), MetricError);
}

TEST_CASE("identity predictions give an identity pattern") {
  PredictionSet p;
  for (int k = 0; k < 32; ++k) {
    for (int r = 0; r < k + 1; ++r) p.records.push_back({k, k, "s", "u"});
  }
  const auto m = confusion_matrix(p, french());
  CHECK(m.percent == 100.0 * Eigen::MatrixXd::Identity(32, 32));
}

TEST_CASE("non-empty rows sum to 100") {
  const auto p = random_set(3000, 11, 0.3);
  const auto m = confusion_matrix(p, french());
  for (Eigen::Index i = 0; i < m.percent.rows(); ++i) {
    if (!m.empty_rows[static_cast<std::size_t>(i)]) CHECK(std::abs(m.percent.row(i).sum() - 100.0) < 1e-9);
  }
}

TEST_CASE("submatrix keeps full columns by default") {
  PredictionSet p;
  add(p, "p", "p", 3);
  add(p, "p", "t");
  add(p, "b", "a", 2);
  add(p, "a", "a");
  const auto m = confusion_matrix(p, french());
  const PhoneClassGroup all{"all", french().symbols()};
  const auto same = submatrix(m, all);
  CHECK(same.percent == m.percent);
  CHECK(same.row_labels == m.row_labels);

  const auto groups = load_phone_groups(default_phone_groups_path());
  REQUIRE(groups.size() == 2);
  const auto& obstruents = groups[0].name == "obstruents" ? groups[0] : groups[1];
  const auto sub = submatrix(m, obstruents);
  CHECK(sub.row_labels == obstruents.members);
  CHECK(sub.col_labels == m.col_labels);
  CHECK(sub.at("p", "p") == 75.0);
  CHECK(sub.at("p", "t") == 25.0);
  CHECK(sub.at("b", "a") == 100.0);
  CHECK(sub.percent.row(2).sum() == 0.0);  // t has no samples

  const auto restricted = submatrix(m, obstruents, SubmatrixColumns::restricted);
  CHECK(restricted.col_labels == obstruents.members);
  CHECK(restricted.at("b", "b") == 0.0);

  CHECK_THROWS_AS(submatrix(m, PhoneClassGroup{"bad", {"p", "q"}}), GroupError);
}

TEST_CASE("full-column submatrix commutes with row normalisation") {
  const auto p = random_set(4000, 12, 0.4);
  const auto m = confusion_matrix(p, french());
  const PhoneClassGroup g{"g", {"p", "t", "k", "a"}};
  const auto sub = submatrix(m, g);
  for (Eigen::Index i = 0; i < sub.counts.rows(); ++i) {
    const Eigen::RowVectorXd normalised = sub.counts.row(i) * (100.0 / sub.counts.row(i).sum());
    CHECK((normalised - sub.percent.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("oral/nasal rows retain the nasal consonant columns") {
  const auto& inv = french();
  Eigen::MatrixXd pct = Eigen::MatrixXd::Zero(32, 32);
  pct(id("ɑ̃"), id("ɑ̃")) = 86.9;
  pct(id("ɑ̃"), id("n")) = 13.1;
  const auto m = ConfusionMatrix::from_percent(inv.symbols(), inv.symbols(), pct);
  const auto groups = load_phone_groups(default_phone_groups_path());
  const auto& oral_nasal = groups[0].name == "oral_nasal" ? groups[0] : groups[1];
  const auto sub = submatrix(m, oral_nasal);
  CHECK(sub.at("ɑ̃", "n") == 13.1);
}

TEST_CASE("confusion deltas between two systems") {
  const std::vector<std::string> labels{"p", "t", "ʃ", "ʒ"};
  Eigen::MatrixXd cnn = Eigen::MatrixXd::Zero(4, 4), ssl = Eigen::MatrixXd::Zero(4, 4);
  cnn(0, 0) = 90.7;
  cnn(0, 1) = 9.3;
  cnn(3, 3) = 91.0;
  cnn(3, 2) = 9.0;
  ssl(0, 0) = 97.8;
  ssl(0, 1) = 2.2;
  ssl(3, 3) = 95.4;
  ssl(3, 2) = 4.6;
  const auto a = ConfusionMatrix::from_percent(labels, labels, cnn);
  const auto b = ConfusionMatrix::from_percent(labels, labels, ssl);
  const auto c = compare_matrices(a, b);
  CHECK(c.delta(3, 2) == doctest::Approx(-4.4).epsilon(1e-12));
  CHECK(c.delta(0, 1) == doctest::Approx(-7.1).epsilon(1e-12));
  REQUIRE(c.ranked.size() == 12);
  CHECK(c.ranked[0].true_phone == "p");
  CHECK(c.ranked[0].predicted_phone == "t");
  CHECK(c.ranked[1].true_phone == "ʒ");
  CHECK(c.ranked[1].predicted_phone == "ʃ");
  CHECK(compare_matrices(a, a).delta.isZero(0.0));
  const auto other = ConfusionMatrix::from_percent({"p"}, {"p"}, Eigen::MatrixXd::Constant(1, 1, 100.0));
  CHECK_THROWS_AS(compare_matrices(a, other), ContractError);
}

TEST_CASE("serialisation round trips") {
  const auto dir = testing::scratch("evaluation_io");
  auto p = random_set(300, 13);
  for (auto& r : p.records) r.utterance_id = "utt," + r.speaker_id;
  write_predictions_csv(dir / "p.csv", p, french());
  const auto back = read_predictions_csv(dir / "p.csv", french());
  REQUIRE(back.records.size() == p.records.size());
  for (std::size_t i = 0; i < p.records.size(); ++i) {
    CHECK(back.records[i].true_label == p.records[i].true_label);
    CHECK(back.records[i].predicted_label == p.records[i].predicted_label);
    CHECK(back.records[i].speaker_id == p.records[i].speaker_id);
    CHECK(back.records[i].utterance_id == p.records[i].utterance_id);
  }

  BootstrapOptions opts;
  opts.n_resamples = 100;
  opts.seed = 3;
  const auto ci = bootstrap_ci(p, balanced_accuracy_metric(phones_present(p)), opts);
  const auto ci_back = bootstrap_ci_from_json(to_json(ci));
  CHECK(ci_back.low == ci.low);
  CHECK(ci_back.high == ci.high);
  CHECK(ci_back.seed == 3);

  const auto m = confusion_matrix(p, french());
  const auto m_back = confusion_matrix_from_json(to_json(m));
  CHECK(m_back.percent == m.percent);
  CHECK(m_back.row_labels == m.row_labels);
  write_confusion_csv(dir / "m.csv", m);
  CHECK(std::filesystem::file_size(dir / "m.csv") > 0);
}
