#include "phonecls/cli.hpp"

#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "phonecls/errors.hpp"
#include "phonecls/experiments.hpp"
#include "phonecls/perceptual.hpp"
#include "phonecls/util/csv.hpp"

namespace phonecls {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config;
  std::string out = "runs";
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--out", f.out, "output directory (runs live in OUT/RUN_ID)")->capture_default_str();
  cmd->add_option("--seed", f.seed, "override the experiment seed");
  cmd->add_flag("--force", f.force, "discard an existing run directory");
}

ExperimentConfig load_config(const CommonFlags& f) {
  auto config = ExperimentConfig::load(f.config);
  if (f.seed) {
    config.seed = *f.seed;
    config.validate();
  }
  return config;
}

int run_stage(const CommonFlags& f, Stage until, std::ostream& out) {
  const auto config = load_config(f);
  RunOptions opts;
  opts.out_dir = f.out;
  opts.force = f.force;
  opts.until = until;
  opts.log = &out;
  const auto outcome = run_experiment(config, opts);
  for (auto s : outcome.skipped) out << "stage " << to_string(s) << ": already complete\n";
  out << "run directory: " << outcome.run_dir.string() << '\n';
  return 0;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream o(path);
  if (!o) throw ExportError("cannot write " + path.string());
  o << text;
}

int tabulate_reports(const std::vector<std::string>& paths, const std::string& out_dir, bool validate, std::ostream& out) {
  std::vector<json> reports;
  for (const auto& p : paths) {
    reports.push_back(load_report(p));
    if (validate) validate_report(reports.back());
  }
  const auto table = tabulate(reports);
  const auto text = format_table(table);
  write_table_csv(fs::path(out_dir) / "table.csv", table);
  write_text(fs::path(out_dir) / "table.txt", text);
  out << text;
  return 0;
}

int standalone_correlate(const std::string& ratings, const std::string& predictions, const std::string& cohorts,
                         const std::string& inventory_path, const std::string& out_dir, bool include_silence,
                         std::ostream& out) {
  const auto inventory = load_inventory(inventory_path.empty() ? default_inventory_path() : fs::path(inventory_path));
  const auto preds = read_predictions_csv(predictions, inventory);
  std::set<PhoneId> excluded;
  if (!include_silence) excluded.insert(inventory.silence_index());
  const auto accuracies = speaker_balanced_accuracy(preds, excluded);
  const auto scores = average_ratings(read_ratings_csv(ratings));
  const auto cohort_map = cohorts.empty() ? std::map<std::string, std::string>{} : read_cohorts_csv(cohorts);
  for (auto dim : {RatingDimension::severity, RatingDimension::intelligibility}) {
    const auto ex = scatter_export(scores, accuracies, dim, fs::path(out_dir) / to_string(dim), cohort_map);
    out << to_string(dim) << ": " << ex.rows.size() << " speakers, " << ex.exclusions.size() << " excluded";
    if (ex.fit) out << ", r = " << csv::format_double(ex.fit->r);
    out << '\n';
  }
  return 0;
}

int grid_command(const CommonFlags& f, bool run, std::ostream& out) {
  std::ifstream in(f.config);
  if (!in) throw ConfigError("cannot open grid template " + f.config);
  json tmpl;
  try {
    in >> tmpl;
  } catch (const json::exception& e) {
    throw ConfigError(f.config + ": " + e.what());
  }
  const auto base_dir = fs::absolute(f.config).parent_path();
  const auto entries = expand_grid(tmpl);
  std::vector<ExperimentConfig> configs;
  for (const auto& e : entries) {
    configs.push_back(ExperimentConfig::from_json(e.config, base_dir));
    if (f.seed) configs.back().seed = *f.seed;
  }
  for (const auto& c : configs) {
    const auto path = fs::path(f.out) / "configs" / (c.run_id + ".json");
    write_text(path, c.to_json().dump(2) + "\n");
    out << path.string() << '\n';
  }
  if (!run) return 0;

  for (const auto& c : configs) c.check_resources();
  std::vector<json> reports;
  for (const auto& c : configs) {
    RunOptions opts;
    opts.out_dir = f.out;
    opts.force = f.force;
    opts.log = &out;
    auto outcome = run_experiment(c, opts);
    reports.push_back(*outcome.report);
  }
  const auto table = tabulate(reports);
  write_table_csv(fs::path(f.out) / "table.csv", table);
  write_text(fs::path(f.out) / "table.txt", format_table(table));
  out << format_table(table);
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frame-level phone classification experiments"};
  app.require_subcommand(1);

  CommonFlags ingest_f, balance_f, train_f, evaluate_f, run_f, grid_f;
  auto* ingest = app.add_subcommand("ingest", "parse alignments and extract labelled frames");
  add_common(ingest, ingest_f, true);
  auto* bal = app.add_subcommand("balance", "balance fine-tuning frames and split train/validation");
  add_common(bal, balance_f, true);
  auto* trn = app.add_subcommand("train", "train the encoder and classifier head");
  add_common(trn, train_f, true);
  auto* evl = app.add_subcommand("evaluate", "score the best checkpoint on the test corpora");
  add_common(evl, evaluate_f, true);
  auto* run = app.add_subcommand("run", "run every stage through the report");
  add_common(run, run_f, true);

  CommonFlags corr_f;
  std::string ratings, predictions, cohorts, inventory;
  bool include_silence = false;
  auto* corr = app.add_subcommand("correlate", "relate per-speaker accuracy to expert ratings");
  add_common(corr, corr_f, false);
  corr->add_option("--ratings", ratings, "ratings CSV (without --config)");
  corr->add_option("--predictions", predictions, "predictions CSV (without --config)");
  corr->add_option("--cohorts", cohorts, "speaker cohort CSV (without --config)");
  corr->add_option("--inventory", inventory, "phone inventory (without --config)");
  corr->add_flag("--include-silence", include_silence, "score silence frames too (without --config)");

  CommonFlags report_f;
  std::vector<std::string> report_files;
  bool validate_only = false;
  auto* rep = app.add_subcommand("report", "write a run's report, or tabulate existing reports");
  add_common(rep, report_f, false);
  rep->add_option("reports", report_files, "report.json files to tabulate");
  rep->add_flag("--validate", validate_only, "check report files against the schema");

  bool grid_run = false;
  auto* grid = app.add_subcommand("grid", "expand a config template over factor lists");
  add_common(grid, grid_f, true);
  grid->add_flag("--run", grid_run, "run every expanded config and tabulate the reports");

  std::string synth_out = "synth";
  double minutes = 10.0;
  std::uint64_t synth_seed = 7;
  auto* synth = app.add_subcommand("synth", "generate the synthetic desk-scale corpus");
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--minutes", minutes, "total audio length")->capture_default_str();
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*ingest) return run_stage(ingest_f, Stage::ingest, out);
    if (*bal) return run_stage(balance_f, Stage::balance, out);
    if (*trn) return run_stage(train_f, Stage::train, out);
    if (*evl) return run_stage(evaluate_f, Stage::evaluate, out);
    if (*run) return run_stage(run_f, Stage::report, out);
    if (*corr) {
      if (!corr_f.config.empty()) return run_stage(corr_f, Stage::correlate, out);
      if (ratings.empty() || predictions.empty()) {
        throw ConfigError("correlate needs --config, or --ratings and --predictions");
      }
      return standalone_correlate(ratings, predictions, cohorts, inventory, corr_f.out, include_silence, out);
    }
    if (*rep) {
      if (!report_f.config.empty()) return run_stage(report_f, Stage::report, out);
      if (report_files.empty()) throw ConfigError("report needs --config or report files");
      if (validate_only) {
        for (const auto& p : report_files) {
          validate_report(load_report(p));
          out << p << ": valid\n";
        }
        return 0;
      }
      return tabulate_reports(report_files, report_f.out, true, out);
    }
    if (*grid) return grid_command(grid_f, grid_run, out);
    if (*synth) {
      SyntheticCorpusOptions opts;
      opts.minutes = minutes;
      opts.seed = synth_seed;
      const auto corpus = generate_synthetic_corpus(synth_out, opts, load_inventory(default_inventory_path()));
      out << "synthetic corpus in " << corpus.root.string() << "\nconfig: " << corpus.config.string() << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  } catch (const RuntimeFailure& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 4;
  }
  return 0;
}

}  // namespace phonecls
