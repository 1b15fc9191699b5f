#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/models/ssl.hpp"
#include "phonecls/util/random.hpp"

namespace phonecls {

using nlohmann::json;

StageSeeds StageSeeds::derive(std::uint64_t seed) {
  return StageSeeds{derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3), derive_seed(seed, 4),
                    derive_seed(seed, 5)};
}

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string path_string(const std::filesystem::path& p) { return p.string(); }

json mel_to_json(const MelConfig& c) {
  return {{"sample_rate_hz", c.sample_rate_hz}, {"frame_length_s", c.frame_length_s},
          {"frame_hop_s", c.frame_hop_s},       {"n_mels", c.n_mels},
          {"context_frames", c.context_frames}, {"f_min_hz", c.f_min_hz},
          {"f_max_hz", c.f_max_hz},             {"normalize", c.normalize}};
}

MelConfig mel_from_json(const json& j) {
  check_keys(j, "features", {"sample_rate_hz", "frame_length_s", "frame_hop_s", "n_mels", "context_frames",
                             "f_min_hz", "f_max_hz", "normalize"});
  MelConfig c;
  c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
  c.frame_length_s = j.value("frame_length_s", c.frame_length_s);
  c.frame_hop_s = j.value("frame_hop_s", c.frame_hop_s);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.context_frames = j.value("context_frames", c.context_frames);
  c.f_min_hz = j.value("f_min_hz", c.f_min_hz);
  c.f_max_hz = j.value("f_max_hz", c.f_max_hz);
  c.normalize = j.value("normalize", c.normalize);
  return c;
}

json balancing_to_json(const BalancingPolicy& p) {
  return {{"balance_phones", p.balance_phones},
          {"balance_gender", p.balance_gender},
          {"include_silence", p.include_silence},
          {"target_count", p.target_count ? json(*p.target_count) : json(nullptr)}};
}

BalancingPolicy balancing_from_json(const json& j) {
  check_keys(j, "balancing", {"balance_phones", "balance_gender", "include_silence", "target_count"});
  BalancingPolicy p;
  p.balance_phones = j.value("balance_phones", p.balance_phones);
  p.balance_gender = j.value("balance_gender", p.balance_gender);
  p.include_silence = j.value("include_silence", p.include_silence);
  if (j.contains("target_count") && !j.at("target_count").is_null()) {
    const auto n = j.at("target_count").get<long long>();
    if (n < 1) throw ConfigError("balancing.target_count must be >= 1");
    p.target_count = static_cast<std::size_t>(n);
  }
  return p;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
  check_keys(j, "experiment config",
             {"run_id", "seed", "seeds", "corpora", "finetune_corpora", "test_corpora", "inventory", "model",
              "trainable_encoder", "features", "training", "balancing", "train_ratio", "evaluation", "ratings"});
  ExperimentConfig c;
  try {
    c.run_id = j.at("run_id").get<std::string>();
    c.seed = j.value("seed", c.seed);
    for (const auto& [tag, path] : j.at("corpora").items()) c.corpora[tag] = resolve(base_dir, path.get<std::string>());
    c.finetune_corpora = j.at("finetune_corpora").get<std::vector<std::string>>();
    c.test_corpora = j.at("test_corpora").get<std::vector<std::string>>();
    if (j.contains("inventory") && !j.at("inventory").is_null()) {
      c.inventory = resolve(base_dir, j.at("inventory").get<std::string>());
    }
    if (j.contains("model")) {
      check_keys(j.at("model"), "model", {"encoder", "cnn", "ssl", "head", "init_seed"});
      c.model = ModelConfig::from_json(j.at("model"));
    }
    c.trainable_encoder = j.value("trainable_encoder", c.model.encoder_trainable());
    if (j.contains("features")) c.features = mel_from_json(j.at("features"));
    if (j.contains("training")) {
      check_keys(j.at("training"), "training",
                 {"epochs", "head_optimizer", "encoder_optimizer", "cnn_uses_encoder_optimizer", "batch_size", "seed",
                  "balanced_include_silence"});
      c.training = TrainingConfig::from_json(j.at("training"));
    }
    if (j.contains("balancing")) c.balancing = balancing_from_json(j.at("balancing"));
    c.train_ratio = j.value("train_ratio", c.train_ratio);
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      check_keys(e, "evaluation", {"n_resamples", "alpha", "unit", "include_silence", "phone_groups"});
      c.evaluation.n_resamples = e.value("n_resamples", c.evaluation.n_resamples);
      c.evaluation.alpha = e.value("alpha", c.evaluation.alpha);
      c.evaluation.unit = parse_resampling_unit(e.value("unit", std::string("frames")));
      c.evaluation.include_silence = e.value("include_silence", c.evaluation.include_silence);
      if (e.contains("phone_groups") && !e.at("phone_groups").is_null()) {
        c.evaluation.phone_groups = resolve(base_dir, e.at("phone_groups").get<std::string>());
      }
    }
    if (j.contains("ratings") && !j.at("ratings").is_null()) {
      const auto& r = j.at("ratings");
      check_keys(r, "ratings", {"ratings", "cohorts", "corpora"});
      RatingsConfig rc;
      rc.ratings = resolve(base_dir, r.at("ratings").get<std::string>());
      if (r.contains("cohorts") && !r.at("cohorts").is_null()) {
        rc.cohorts = resolve(base_dir, r.at("cohorts").get<std::string>());
      }
      rc.corpora = r.value("corpora", std::vector<std::string>{});
      c.ratings = rc;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, std::filesystem::absolute(path).parent_path());
}

ModelConfig ExperimentConfig::resolved_model() const {
  ModelConfig m = model;
  m.cnn.trainable = trainable_encoder;
  m.ssl.trainable = trainable_encoder;
  m.init_seed = seeds().init;
  return m;
}

TrainingConfig ExperimentConfig::resolved_training() const {
  TrainingConfig t = training;
  t.seed = seeds().train;
  t.balanced_include_silence = evaluation.include_silence;
  return t;
}

BalancingPolicy ExperimentConfig::resolved_balancing() const {
  BalancingPolicy p = balancing;
  p.seed = seeds().balance;
  return p;
}

json ExperimentConfig::to_json() const {
  json corp = json::object();
  for (const auto& [tag, path] : corpora) corp[tag] = path_string(path);
  const auto s = seeds();
  json j = {{"run_id", run_id},
            {"seed", seed},
            {"seeds",
             {{"balance", s.balance}, {"split", s.split}, {"init", s.init}, {"train", s.train}, {"bootstrap", s.bootstrap}}},
            {"corpora", corp},
            {"finetune_corpora", finetune_corpora},
            {"test_corpora", test_corpora},
            {"inventory", inventory.empty() ? json(nullptr) : json(path_string(inventory))},
            {"model", resolved_model().to_json()},
            {"trainable_encoder", trainable_encoder},
            {"features", mel_to_json(features)},
            {"training", resolved_training().to_json()},
            {"balancing", balancing_to_json(balancing)},
            {"train_ratio", train_ratio}};
  j["evaluation"] = {{"n_resamples", evaluation.n_resamples},
                     {"alpha", evaluation.alpha},
                     {"unit", to_string(evaluation.unit)},
                     {"include_silence", evaluation.include_silence},
                     {"phone_groups", evaluation.phone_groups.empty() ? json(nullptr)
                                                                      : json(path_string(evaluation.phone_groups))}};
  if (ratings) {
    j["ratings"] = {{"ratings", path_string(ratings->ratings)},
                    {"cohorts", ratings->cohorts.empty() ? json(nullptr) : json(path_string(ratings->cohorts))},
                    {"corpora", ratings->corpora}};
  } else {
    j["ratings"] = nullptr;
  }
  return j;
}

void ExperimentConfig::validate() const {
  if (run_id.empty()) throw ConfigError("run_id is empty");
  for (char ch : run_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    if (!ok) throw ConfigError("run_id '" + run_id + "' may only contain letters, digits, '-', '_' and '.'");
  }
  if (run_id == "." || run_id == "..") throw ConfigError("run_id may not be '.' or '..'");
  if (finetune_corpora.empty()) throw ConfigError(run_id + ": no fine-tuning corpora");
  if (test_corpora.empty()) throw ConfigError(run_id + ": no test corpora");
  auto check_listed = [&](const std::vector<std::string>& tags, const std::string& what) {
    std::set<std::string> seen;
    for (const auto& t : tags) {
      if (!corpora.count(t)) throw ConfigError(run_id + ": " + what + " corpus '" + t + "' is not in the corpus store");
      if (!seen.insert(t).second) throw ConfigError(run_id + ": " + what + " corpus '" + t + "' listed twice");
    }
  };
  check_listed(finetune_corpora, "fine-tuning");
  check_listed(test_corpora, "test");
  if (ratings) {
    for (const auto& t : ratings->corpora) {
      if (std::find(test_corpora.begin(), test_corpora.end(), t) == test_corpora.end()) {
        throw ConfigError(run_id + ": rated corpus '" + t + "' is not a test corpus");
      }
    }
  }
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must lie in (0, 1)");
  if (evaluation.n_resamples < 100) throw ConfigError("evaluation.n_resamples must be >= 100");
  if (!(evaluation.alpha > 0.0 && evaluation.alpha < 1.0)) throw ConfigError("evaluation.alpha must lie in (0, 1)");
  features.validate();
  training.validate();
  const auto m = resolved_model();
  m.head.validate();
  if (m.head.n_classes != PhoneInventory::kClassCount) {
    throw ConfigError("model.head.n_classes must be " + std::to_string(PhoneInventory::kClassCount));
  }
  if (m.encoder == EncoderKind::cnn) {
    m.cnn.validate();
    if (m.cnn.input_height != features.context_frames || m.cnn.input_width != features.feature_width()) {
      throw ConfigError("CNN input " + std::to_string(m.cnn.input_height) + "x" + std::to_string(m.cnn.input_width) +
                        " does not match the feature window " + std::to_string(features.context_frames) + "x" +
                        std::to_string(features.feature_width()));
    }
  } else {
    m.ssl.validate();
    if (m.ssl.sample_rate_hz != features.sample_rate_hz) {
      throw ConfigError("SSL sample rate does not match features.sample_rate_hz");
    }
  }
}

void ExperimentConfig::check_resources() const {
  validate();
  auto require_file = [](const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
  };
  for (const auto& list : {finetune_corpora, test_corpora}) {
    for (const auto& tag : list) require_file(corpora.at(tag), "manifest of corpus '" + tag + "'");
  }
  const auto inv_path = inventory.empty() ? default_inventory_path() : inventory;
  require_file(inv_path, "phone inventory");
  std::optional<PhoneInventory> inv;
  try {
    inv = load_inventory(inv_path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("phone inventory: ") + e.what());
  }
  const auto groups_path = evaluation.phone_groups.empty() ? default_phone_groups_path() : evaluation.phone_groups;
  require_file(groups_path, "phone groups");
  try {
    for (const auto& g : load_phone_groups(groups_path)) {
      for (const auto& m : g.members) {
        if (!inv->find(m)) throw ConfigError("phone group '" + g.name + "' member '" + m + "' is not in the inventory");
      }
    }
  } catch (const GroupError& e) {
    throw ConfigError(e.what());
  }
  if (ratings) {
    require_file(ratings->ratings, "ratings file");
    if (!ratings->cohorts.empty()) require_file(ratings->cohorts, "cohort file");
  }
  const auto m = resolved_model();
  if (m.encoder == EncoderKind::ssl && !ssl_backend_available<float>(m.ssl)) {
    throw ConfigError("no SSL backend registered for '" + m.ssl.backend_id + "'");
  }
}

}  // namespace phonecls
