#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/util/csv.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kUtteranceSeconds = 3.0;
constexpr double kEdgeSilenceSeconds = 0.15;

// Three partials per phone, fixed for every corpus so phones keep their identity.
struct PhoneSignature {
  double freq[3];
  double amp[3];
  double noise;  // broadband share, higher for obstruents
};

std::vector<PhoneSignature> phone_signatures(int n_phones) {
  Rng rng(0x5eed0f0e5ULL);
  std::vector<PhoneSignature> out;
  for (int k = 0; k < n_phones; ++k) {
    PhoneSignature s{};
    for (int j = 0; j < 3; ++j) {
      const double lo = std::log(150.0), hi = std::log(6500.0);
      s.freq[j] = std::exp(lo + (hi - lo) * uniform_unit(rng));
      s.amp[j] = 0.35 + 0.65 * uniform_unit(rng);
    }
    s.noise = (k >= 14 && k <= 26) ? 0.05 + 0.1 * uniform_unit(rng) : 0.01;
    out.push_back(s);
  }
  return out;
}

struct Speaker {
  std::string id;
  Gender gender;
  double scale;        // partial frequency scaling
  double degradation;  // 0 = healthy
  std::string cohort;
};

struct CorpusPlan {
  std::string tag;
  std::vector<Speaker> speakers;
  int utterances_per_speaker;
};

// Raw aligner symbols that map to each inventory phone (merge sources included).
std::map<std::string, std::vector<std::string>> raw_symbols(const PhoneInventory& inventory) {
  std::map<std::string, std::vector<std::string>> out;
  for (PhoneId p = 0; p < PhoneInventory::kPhoneCount; ++p) out[inventory.symbol(p)] = {};
  for (const auto& [raw, target] : inventory.merges()) out[target].push_back(raw);
  for (auto& [phone, raws] : out) {
    if (raws.empty()) raws.push_back(phone);
  }
  return out;
}

void add_segment(Eigen::VectorXd& signal, long begin, long end, const PhoneSignature& sig, double scale,
                 double noise_level, Rng& rng, int rate) {
  const long ramp = static_cast<long>(0.005 * rate);
  double phase[3];
  for (double& ph : phase) ph = kTwoPi * uniform_unit(rng);
  for (long n = begin; n < end; ++n) {
    const double t = static_cast<double>(n - begin) / rate;
    double v = 0.0;
    for (int j = 0; j < 3; ++j) v += sig.amp[j] * std::sin(kTwoPi * sig.freq[j] * scale * t + phase[j]);
    v = 0.12 * v + (sig.noise + noise_level) * standard_normal(rng);
    const long from_start = n - begin, to_end = end - 1 - n;
    const double env = std::min(1.0, static_cast<double>(std::min(from_start, to_end)) / static_cast<double>(ramp));
    signal[n] += env * v;
  }
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const std::filesystem::path& out_dir, const SyntheticCorpusOptions& options,
                                          const PhoneInventory& inventory) {
  if (!(options.minutes > 0.0)) throw ConfigError("synthetic corpus length must be positive");
  const int rate = options.sample_rate_hz;
  const auto signatures = phone_signatures(PhoneInventory::kPhoneCount);
  const auto raws = raw_symbols(inventory);
  Rng rng(derive_seed(options.seed, 0));

  // 60% read speech for fine-tuning, 20% healthy controls, 20% patients.
  const int total_utts = std::max(8, static_cast<int>(std::lround(options.minutes * 60.0 / kUtteranceSeconds)));
  const int read_utts = std::max(2, total_utts * 6 / 10);
  const int test_utts = std::max(1, (total_utts - read_utts) / 2);

  std::vector<CorpusPlan> plans;
  {
    CorpusPlan read{"synth-read", {}, 0};
    for (int i = 0; i < 12; ++i) {
      const bool female = i % 2 == 0;
      read.speakers.push_back({"R" + std::to_string(100 + i), female ? Gender::female : Gender::male,
                               (female ? 1.03 : 0.97) + 0.02 * (uniform_unit(rng) - 0.5), 0.0, "read"});
    }
    read.utterances_per_speaker = std::max(1, read_utts / 12);
    plans.push_back(read);

    CorpusPlan control{"synth-control", {}, 0};
    for (int i = 0; i < 4; ++i) {
      const bool female = i % 2 == 0;
      control.speakers.push_back({"C" + std::to_string(100 + i), female ? Gender::female : Gender::male,
                                  (female ? 1.03 : 0.97) + 0.02 * (uniform_unit(rng) - 0.5), 0.0, "control"});
    }
    control.utterances_per_speaker = std::max(1, test_utts / 4);
    plans.push_back(control);

    CorpusPlan patient{"synth-patient", {}, 0};
    for (int i = 0; i < 8; ++i) {
      const bool female = i % 2 == 1;
      patient.speakers.push_back({"P" + std::to_string(100 + i), female ? Gender::female : Gender::male,
                                  (female ? 1.03 : 0.97) + 0.02 * (uniform_unit(rng) - 0.5), 0.08 + 0.1 * i,
                                  "patient"});
    }
    patient.utterances_per_speaker = std::max(1, test_utts / 8);
    plans.push_back(patient);
  }

  SyntheticCorpus corpus;
  corpus.root = out_dir;
  std::filesystem::create_directories(out_dir);
  std::uint64_t utt_counter = 0;
  for (const auto& plan : plans) {
    const auto dir = out_dir / plan.tag;
    std::filesystem::create_directories(dir / "wav");
    std::filesystem::create_directories(dir / "align");
    const auto manifest_path = dir / "alignments.csv";
    std::ofstream manifest(manifest_path);
    if (!manifest) throw DataError("cannot write " + manifest_path.string());
    csv::write_row(manifest, {"utterance_id", "audio_path", "speaker_id", "gender", "corpus_tag", "alignment_path"});

    for (const auto& spk : plan.speakers) {
      for (int u = 0; u < plan.utterances_per_speaker; ++u) {
        Rng urng(derive_seed(options.seed, ++utt_counter));
        const std::string utt_id = plan.tag + "-" + spk.id + "-" + std::to_string(u);
        const long n_samples = static_cast<long>(kUtteranceSeconds * rate);
        Eigen::VectorXd signal = Eigen::VectorXd::Zero(n_samples);
        const double floor_noise = 0.003 + 0.05 * spk.degradation;
        for (long n = 0; n < n_samples; ++n) signal[n] = floor_noise * standard_normal(urng);

        std::vector<std::array<std::string, 3>> rows;
        auto fmt = [](double s) { return csv::format_double(std::round(s * 1e4) / 1e4); };
        rows.push_back({fmt(0.0), fmt(kEdgeSilenceSeconds), inventory.silence_symbol()});
        double t = kEdgeSilenceSeconds;
        while (true) {
          const double dur = 0.06 + 0.08 * uniform_unit(urng);
          if (t + dur > kUtteranceSeconds - kEdgeSilenceSeconds) break;
          const auto phone = static_cast<PhoneId>(uniform_index(urng, PhoneInventory::kPhoneCount));
          // Patients substitute neighbouring signatures and blur partials.
          PhoneId produced = phone;
          if (uniform_unit(urng) < 0.5 * spk.degradation) {
            produced = static_cast<PhoneId>((phone + 1 + uniform_index(urng, 3)) % PhoneInventory::kPhoneCount);
          }
          const double scale = spk.scale * (1.0 + 0.15 * spk.degradation * (2.0 * uniform_unit(urng) - 1.0));
          const double start = std::round(t * 1e4) / 1e4;
          const double end = std::round((t + dur) * 1e4) / 1e4;
          add_segment(signal, static_cast<long>(start * rate), static_cast<long>(end * rate),
                      signatures[static_cast<std::size_t>(produced)], scale, 0.04 * spk.degradation, urng, rate);
          const auto& symbols = raws.at(inventory.symbol(phone));
          rows.push_back({fmt(start), fmt(end), symbols[uniform_index(urng, symbols.size())]});
          t = end;
        }
        rows.push_back({fmt(t), fmt(kUtteranceSeconds), inventory.silence_symbol()});

        const auto wav_rel = std::filesystem::path("wav") / (utt_id + ".wav");
        const auto align_rel = std::filesystem::path("align") / (utt_id + ".csv");
        write_wav(dir / wav_rel, signal.cwiseMax(-1.0).cwiseMin(1.0), rate);
        std::ofstream align(dir / align_rel);
        csv::write_row(align, {"start_s", "end_s", "phone"});
        for (const auto& r : rows) csv::write_row(align, {r[0], r[1], r[2]});
        csv::write_row(manifest, {utt_id, wav_rel.string(), spk.id, to_string(spk.gender), plan.tag, align_rel.string()});
      }
    }
    corpus.manifests[plan.tag] = manifest_path;
  }

  // Expert ratings for the test speakers: six raters, one patient unrated,
  // one patient seen by four raters only.
  std::vector<ExpertRating> ratings;
  std::ofstream cohorts(out_dir / "cohorts.csv");
  csv::write_row(cohorts, {"speaker_id", "cohort"});
  Rng rrng(derive_seed(options.seed, 0xa11));
  for (std::size_t p = 1; p < plans.size(); ++p) {
    for (std::size_t s = 0; s < plans[p].speakers.size(); ++s) {
      const auto& spk = plans[p].speakers[s];
      csv::write_row(cohorts, {spk.id, spk.cohort});
      if (spk.cohort == "patient" && s + 1 == plans[p].speakers.size()) continue;
      const int raters = (spk.cohort == "patient" && s + 2 == plans[p].speakers.size()) ? 4 : 6;
      for (int r = 0; r < raters; ++r) {
        const double sev = std::clamp(10.0 - 10.0 * spk.degradation + 0.5 * standard_normal(rrng), 0.0, 10.0);
        const double intel = std::clamp(10.0 - 8.0 * spk.degradation + 0.8 * standard_normal(rrng), 0.0, 10.0);
        ratings.push_back({spk.id, "expert" + std::to_string(r + 1), std::round(sev * 10) / 10,
                           std::round(intel * 10) / 10});
      }
    }
  }
  corpus.cohorts = out_dir / "cohorts.csv";
  corpus.ratings = out_dir / "ratings.csv";
  write_ratings_csv(corpus.ratings, ratings);

  nlohmann::json config = {
      {"run_id", "synth-cnn"},
      {"seed", options.seed},
      {"corpora",
       {{"synth-read", "synth-read/alignments.csv"},
        {"synth-control", "synth-control/alignments.csv"},
        {"synth-patient", "synth-patient/alignments.csv"}}},
      {"finetune_corpora", {"synth-read"}},
      {"test_corpora", {"synth-control", "synth-patient"}},
      {"model", {{"encoder", "cnn"}}},
      {"trainable_encoder", true},
      {"training", {{"epochs", 2}, {"batch_size", 64}}},
      {"balancing", {{"balance_phones", true}, {"target_count", 300}}},
      {"ratings", {{"ratings", "ratings.csv"}, {"cohorts", "cohorts.csv"}, {"corpora", {"synth-control", "synth-patient"}}}}};
  corpus.config = out_dir / "e2e_cnn.json";
  std::ofstream cfg(corpus.config);
  cfg << config.dump(2) << '\n';
  return corpus;
}

LabeledInputs make_separable_dataset(int per_class, int n_classes, Eigen::Index input_size, std::uint64_t seed,
                                     double noise) {
  Rng rng(seed);
  Eigen::MatrixXf templates(input_size, n_classes);
  for (Eigen::Index k = 0; k < n_classes; ++k) {
    for (Eigen::Index i = 0; i < input_size; ++i) templates(i, k) = static_cast<float>(standard_normal(rng));
  }
  LabeledInputs data;
  data.inputs.resize(input_size, static_cast<Eigen::Index>(per_class) * n_classes);
  Eigen::Index col = 0;
  for (int k = 0; k < n_classes; ++k) {
    for (int s = 0; s < per_class; ++s, ++col) {
      for (Eigen::Index i = 0; i < input_size; ++i) {
        data.inputs(i, col) = templates(i, k) + static_cast<float>(noise * standard_normal(rng));
      }
      data.labels.push_back(k);
      data.utterance_ids.push_back("sep" + std::to_string(seed) + "-" + std::to_string(k));
      data.centers_s.push_back(0.01 * s);
    }
  }
  return data;
}

}  // namespace phonecls
