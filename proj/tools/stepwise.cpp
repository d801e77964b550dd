// stepwise: command-line front end for the cohort -> features -> model ->
// evaluation pipeline. See README.md for the subcommands and exit codes.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include "stepwise/stepwise.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stepwise;

namespace {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kMissingFile = 3, kSchema = 4, kDiverged = 5 };

int report_error(std::string_view kind, std::string_view message, int code) {
  std::cerr << json{{"error", kind}, {"message", message}, {"exit_code", code}}.dump() << '\n';
  return code;
}

/// Resolved options of a subcommand, minus output locations, so identical
/// runs into different directories hash identically.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "--out") continue;
    const std::string key = name.substr(name.find_first_not_of('-'));
    const auto results = opt->reduced_results();
    if (!results.empty()) j[key] = results.size() == 1 ? json(results.front()) : json(results);
    else if (!opt->get_default_str().empty()) j[key] = opt->get_default_str();
    else j[key] = nullptr;
  }
  return j;
}

void write_provenance(const fs::path& dir, const CLI::App& sub, std::optional<std::uint64_t> seed) {
  const json config = resolved_options(sub);
  json p{{"tool", "stepwise"},
         {"version", STEPWISE_VERSION},
         {"command", sub.get_name()},
         {"config", config},
         {"config_hash", fmt::format("{:016x}", io::fnv1a(config.dump()))},
         {"compiler", fmt::format("{} {}", STEPWISE_COMPILER_ID, STEPWISE_COMPILER_VERSION)},
         {"libraries", {{"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                        {"fmt", FMT_VERSION},
                        {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                      NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)},
                        {"cli11", CLI11_VERSION}}}};
  p["seed"] = seed ? json(*seed) : json(nullptr);
  auto out = io::open_output(dir / "provenance.json");
  out << p.dump(2) << '\n';
}

void write_json(const fs::path& path, const json& j) {
  auto out = io::open_output(path);
  out << j.dump(2) << '\n';
}

// Locations of the study files: --data DIR, each overridable on its own.
struct DataPaths {
  std::string data, events, milestones, demographics, manifest;

  void add_to(CLI::App* sub) {
    sub->add_option("--data", data, "directory holding events.csv, milestones.csv, demographics.csv, manifest.ini");
    sub->add_option("--events", events, "events CSV (overrides --data)");
    sub->add_option("--milestones", milestones, "milestones CSV (overrides --data)");
    sub->add_option("--demographics", demographics, "demographics CSV (overrides --data)");
    sub->add_option("--manifest", manifest, "manifest INI (overrides --data)");
  }

  cohort::CohortFiles files() const {
    auto f = cohort::CohortFiles::in_directory(data.empty() ? fs::path(".") : fs::path(data));
    if (!events.empty()) f.events = events;
    if (!milestones.empty()) f.milestones = milestones;
    if (!demographics.empty()) f.demographics = demographics;
    if (!manifest.empty()) f.manifest = manifest;
    if (data.empty() && (events.empty() || milestones.empty() || demographics.empty() || manifest.empty()))
      throw InvalidArgument("give --data or all of --events, --milestones, --demographics, --manifest");
    return f;
  }
};

struct Loaded {
  cohort::Manifest manifest;
  cohort::LoadedCohort cohort;
  cohort::ImputeReport imputation;
};

Loaded load_imputed(const DataPaths& paths, std::optional<int> m) {
  const auto files = paths.files();
  Loaded l;
  l.manifest = cohort::load_manifest(files.manifest);
  l.cohort = cohort::load_cohort(files, l.manifest, m);
  l.imputation = cohort::impute(l.cohort.series);
  if (l.cohort.series.empty()) throw InvalidArgument("no labeled instances could be built from the input files");
  return l;
}

json to_json(const cohort::LoadReport& r, const cohort::ImputeReport& imp) {
  return {{"participants", r.participants},
          {"instances", r.instances},
          {"events_read", r.events_read},
          {"events_out_of_range", r.events_out_of_range},
          {"duplicate_events", r.duplicate_events},
          {"dropped_missing_bmi", r.dropped_missing_bmi},
          {"dropped_insufficient_events", r.dropped_insufficient_events},
          {"dropped_missing_demographics", r.dropped_missing_demographics},
          {"imputed_cells", imp.cells_filled},
          {"degenerate_slots", imp.degenerate_slots},
          {"warnings", r.warnings}};
}

json to_json(const features::CohortStats& c) {
  return {{"cohort_daily_mean", c.cohort_daily_mean},
          {"cohort_weekly_mean_per_day", c.cohort_weekly_mean_per_day},
          {"mean_lowest_daily", c.mean_lowest_daily}};
}

features::FeatureSet feature_set_or_throw(const std::string& s) {
  const auto fs = features::parse_feature_set(s);
  if (!fs) throw InvalidArgument(fmt::format("unknown feature set '{}' (expected slots, slots+demo, all)", s));
  return *fs;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  std::uint64_t seed = 0;
  std::string out;
  synth::SynthConfig config;
};

void run_synth(const SynthArgs& a, const CLI::App& sub) {
  auto config = a.config;
  config.seed = a.seed;
  const auto cohort = synth::generate_cohort(config);
  synth::write_cohort(cohort, a.out);
  write_provenance(a.out, sub, a.seed);
}

// -------------------------------------------------------------- featurize

struct FeaturizeArgs {
  DataPaths paths;
  std::optional<int> m;
  int k = 7;
  std::string feature_set = "all";
  std::string out;
};

void run_featurize(const FeaturizeArgs& a, const CLI::App& sub) {
  const auto set = feature_set_or_throw(a.feature_set);
  const auto l = load_imputed(a.paths, a.m);
  const auto stats = features::compute_cohort_stats(l.cohort.series);
  const auto data = features::build_sequences(l.cohort.series, a.k, set, stats);
  fs::create_directories(a.out);
  features::write_feature_dump(data, fs::path(a.out) / "features.csv");
  write_json(fs::path(a.out) / "load_report.json", to_json(l.cohort.report, l.imputation));
  write_json(fs::path(a.out) / "cohort_stats.json", to_json(stats));
  write_provenance(a.out, sub, std::nullopt);
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  DataPaths paths;
  std::uint64_t seed = 0;
  std::optional<int> m;
  int k = 7;
  std::string feature_set = "all";
  int folds = 10;
  int fold = 0;
  model::ModelConfig config;
  std::string out;
};

void run_train(const TrainArgs& a, const CLI::App& sub) {
  const auto set = feature_set_or_throw(a.feature_set);
  const auto l = load_imputed(a.paths, a.m);
  const auto& series = l.cohort.series;
  std::vector<std::string> ids;
  std::vector<bool> labels;
  for (const auto& s : series) {
    ids.push_back(s.participant_id);
    labels.push_back(s.improved);
  }
  const auto plan = eval::kfold(ids, labels, a.folds, a.seed);
  const auto rot = plan.rotation(a.fold);
  const auto stats = features::compute_cohort_stats(series, rot.train);
  const auto data = features::build_sequences(series, a.k, set, stats);
  const auto train = data.subset(rot.train), val = data.subset(rot.validation), test = data.subset(rot.test);

  auto config = a.config;
  config.seed = a.seed;
  auto trained = model::train(train, val, config);
  trained.pipeline = {a.k, series.front().m_slots(), std::string(features::to_string(set)), stats.cohort_daily_mean,
                      stats.cohort_weekly_mean_per_day, stats.mean_lowest_daily};

  fs::create_directories(a.out);
  model::save_checkpoint(trained, fs::path(a.out) / "model.ckpt");
  model::write_training_curve(trained, fs::path(a.out) / "training_curve.csv");
  std::size_t pos = 0;
  for (const auto& i : train.instances) pos += i.label;
  const bool majority = 2 * pos >= train.size();
  std::size_t hit = 0;
  for (const auto& i : test.instances) hit += i.label == majority;
  write_json(fs::path(a.out) / "metrics.json",
             {{"fold", a.fold},
              {"folds", a.folds},
              {"sequence_length", trained.sequence_length},
              {"feature_size", trained.config.feature_dim},
              {"train_size", train.size()},
              {"validation_size", val.size()},
              {"test_size", test.size()},
              {"best_epoch", trained.best_epoch},
              {"validation_accuracy", model::accuracy(model::predict(trained, val), val)},
              {"test_accuracy", model::accuracy(model::predict(trained, test), test)},
              {"majority_accuracy", test.size() ? static_cast<double>(hit) / test.size() : 0.0}});
  write_provenance(a.out, sub, a.seed);
}

// --------------------------------------------------------------- evaluate

struct EvaluateArgs {
  DataPaths paths;
  std::string kind = "model_sweep";
  std::uint64_t seed = 0;
  int folds = 10;
  std::vector<int> m, k, M;
  std::vector<std::string> feature_sets, models;
  model::ModelConfig lstm;
  model::ForestConfig forest;
  int forest_features = 0;
  model::LogRegConfig logreg;
  std::string out;
};

void run_evaluate(const EvaluateArgs& a, const CLI::App& sub) {
  const auto kind = eval::parse_experiment_kind(a.kind);
  eval::ExperimentGrid grid;
  grid.m_values = a.m;
  grid.k_values = a.k;
  grid.M_values = a.M;
  grid.models = a.models;
  for (const auto& s : a.feature_sets) grid.feature_sets.push_back(feature_set_or_throw(s));

  eval::EvalOptions opt;
  opt.folds = a.folds;
  opt.seed = a.seed;
  opt.lstm = a.lstm;
  opt.logreg = a.logreg;
  opt.forest = a.forest;
  if (a.forest_features > 0) opt.forest.features_per_split = a.forest_features;

  std::optional<cohort::LoadReport> report;
  std::optional<eval::AssociationStats> association;
  const eval::CohortSource source = [&](int m) {
    auto l = load_imputed(a.paths, m);
    if (!association) association = eval::association_stats(l.cohort.series);
    if (!report) report = l.cohort.report;
    return std::move(l.cohort.series);
  };
  const auto result = eval::run_experiment(kind, source, opt, grid);
  auto j = eval::to_json(result);
  if (association) j["association"] = eval::to_json(*association);
  fs::create_directories(a.out);
  write_json(fs::path(a.out) / "report.json", j);
  auto txt = io::open_output(fs::path(a.out) / "report.txt");
  txt << eval::render_table(j);
  write_provenance(a.out, sub, a.seed);
  std::cout << eval::render_table(j);
}

// -------------------------------------------------------------- interpret

struct InterpretArgs {
  DataPaths paths;
  std::string checkpoint;
  std::vector<std::string> features{"daily_avg_steps", "adults_in_household"};
  std::optional<int> layer;
  std::string out;
};

std::string file_stem(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') c = '_';
  return s;
}

void run_interpret(const InterpretArgs& a, const CLI::App& sub) {
  const auto trained = model::load_checkpoint(a.checkpoint);
  const auto& pipe = trained.pipeline;
  const auto l = load_imputed(a.paths, pipe.m);
  const features::CohortStats stats{pipe.cohort_daily_mean, pipe.cohort_weekly_mean_per_day, pipe.mean_lowest_daily};
  const auto data = features::build_sequences(l.cohort.series, pipe.k, feature_set_or_throw(pipe.feature_set), stats);

  fs::create_directories(a.out);
  const auto profile = interpret::expected_response(trained, data, a.layer);
  interpret::write_matrix_csv(profile.values, fs::path(a.out) / "profile.csv");
  json ranking{{"layer", profile.layer}, {"instances", profile.instances}, {"ablations", json::array()}};
  for (const auto& name : a.features) {
    const auto idx = features::feature_index(trained.feature_names, name);
    if (!idx) throw InvalidArgument(fmt::format("model has no feature named '{}'", name));
    const auto r = interpret::ablate_feature(trained, data, *idx, a.layer);
    interpret::write_matrix_csv(r.diff, fs::path(a.out) / fmt::format("ablation_{}.csv", file_stem(name)));
    ranking["ablations"].push_back(interpret::ranking_json(r, trained.feature_names));
  }
  write_json(fs::path(a.out) / "ranking.json", ranking);
  write_provenance(a.out, sub, std::nullopt);
}

// ----------------------------------------------------------------- report

struct ReportArgs {
  std::string input;
  std::string out;
};

void run_report(const ReportArgs& a) {
  json j;
  try {
    j = json::parse(io::read_text(a.input));
  } catch (const json::exception& e) {
    throw ParseError(a.input, 0, e.what());
  }
  if (!j.contains("cells") || !j.contains("kind")) throw ParseError(a.input, 0, "not an experiment report");
  std::string table;
  try {
    table = eval::render_table(j);
  } catch (const json::exception& e) {
    throw ParseError(a.input, 0, e.what());
  }
  if (!a.out.empty()) {
    auto out = io::open_output(a.out);
    out << table;
  }
  std::cout << table;
}

void add_model_options(CLI::App* sub, model::ModelConfig& c) {
  sub->add_option("--layers", c.layers, "stacked LSTM layers")->check(CLI::Range(1, 3));
  sub->add_option("--epochs", c.epochs, "training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--embed-dim", c.embed_dim, "embedding width")->check(CLI::PositiveNumber);
  sub->add_option("--hidden-units", c.hidden_units, "LSTM hidden units")->check(CLI::PositiveNumber);
  sub->add_option("--dropout", c.dropout_rate, "dropout rate on each layer's output");
  sub->add_option("--learning-rate", c.learning_rate, "Adam step size");
  sub->add_option("--l2", c.l2_lambda, "L2 weight penalty");
  sub->add_option("--clip", c.grad_clip_norm, "global gradient-norm clip");
  sub->add_option("--batch-size", c.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stepwise: step-count time series to obesity-improvement prediction"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "INI config file; [section] per subcommand, keys named like the flags");
  app.require_subcommand(1);
  app.set_version_flag("--version", STEPWISE_VERSION);

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  synth_cmd->add_option("--seed", sa.seed, "generator seed")->required();
  synth_cmd->add_option("--out", sa.out, "output directory")->required();
  synth_cmd->add_option("--participants", sa.config.n_participants, "participants")->check(CLI::Range(2, 10000000));
  synth_cmd->add_option("--days", sa.config.n_days, "days per period")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--m", sa.config.m, "slot count written to the manifest");
  synth_cmd->add_option("--p-drop-active", sa.config.p_drop_active, "P(improve | DAS above cohort mean)");
  synth_cmd->add_option("--p-drop-inactive", sa.config.p_drop_inactive, "P(improve | DAS at or below mean)");
  synth_cmd->add_option("--missing-rate", sa.config.missing_rate, "probability a day is unrecorded");
  synth_cmd->add_option("--dropout-fraction", sa.config.dropout_fraction, "share without a closeout BMI");
  synth_cmd->add_option("--trend-strength", sa.config.trend_strength, "relative amplitude of the in-period ramp");
  synth_cmd->add_option("--trend-fidelity", sa.config.trend_fidelity, "P(outcome follows the ramp)");

  FeaturizeArgs fa;
  auto* feat_cmd = app.add_subcommand("featurize", "write per-window feature vectors");
  fa.paths.add_to(feat_cmd);
  feat_cmd->add_option("--m", fa.m, "time slots per day (default: manifest)");
  feat_cmd->add_option("--k", fa.k, "window length in days")->check(CLI::PositiveNumber);
  feat_cmd->add_option("--feature-set", fa.feature_set, "slots | slots+demo | all");
  feat_cmd->add_option("--out", fa.out, "output directory")->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train the LSTM on one cross-validation rotation");
  ta.paths.add_to(train_cmd);
  train_cmd->add_option("--seed", ta.seed, "split and training seed")->required();
  train_cmd->add_option("--m", ta.m, "time slots per day (default: manifest)");
  train_cmd->add_option("--k", ta.k, "window length in days")->check(CLI::PositiveNumber);
  train_cmd->add_option("--feature-set", ta.feature_set, "slots | slots+demo | all");
  train_cmd->add_option("--folds", ta.folds, "cross-validation folds")->check(CLI::Range(3, 1000));
  train_cmd->add_option("--fold", ta.fold, "rotation: test fold index")->check(CLI::NonNegativeNumber);
  add_model_options(train_cmd, ta.config);
  train_cmd->add_option("--out", ta.out, "output directory")->required();

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "run a cross-validated experiment sweep");
  ea.paths.add_to(eval_cmd);
  eval_cmd->add_option("--kind", ea.kind, "feature_sweep | window_sweep | model_sweep | augment_sweep | age_strata");
  eval_cmd->add_option("--seed", ea.seed, "split and training seed");
  eval_cmd->add_option("--folds", ea.folds, "cross-validation folds")->check(CLI::Range(3, 1000));
  eval_cmd->add_option("--m", ea.m, "time slot grid")->delimiter(',');
  eval_cmd->add_option("--k", ea.k, "window size grid")->delimiter(',');
  eval_cmd->add_option("--M", ea.M, "augmentation week counts")->delimiter(',');
  eval_cmd->add_option("--feature-set", ea.feature_sets, "feature set grid")->delimiter(',');
  eval_cmd->add_option("--models", ea.models, "lr, rf, lstm1, lstm2, lstm3")->delimiter(',');
  add_model_options(eval_cmd, ea.lstm);
  eval_cmd->add_option("--trees", ea.forest.n_trees, "forest size")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--max-depth", ea.forest.max_depth, "tree depth limit")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--min-leaf", ea.forest.min_leaf, "minimum leaf size")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--features-per-split", ea.forest_features, "0: ceil(sqrt(feature size))");
  eval_cmd->add_option("--lr-l2", ea.logreg.l2, "logistic regression L2 penalty");
  eval_cmd->add_option("--lr-iterations", ea.logreg.iterations, "logistic regression iterations");
  eval_cmd->add_option("--out", ea.out, "output directory")->required();

  InterpretArgs ia;
  auto* interp_cmd = app.add_subcommand("interpret", "hidden-state response profiles and feature ablations");
  ia.paths.add_to(interp_cmd);
  interp_cmd->add_option("--model", ia.checkpoint, "checkpoint written by train")->required();
  interp_cmd->add_option("--feature", ia.features, "feature names to ablate")->delimiter(',');
  interp_cmd->add_option("--layer", ia.layer, "0-based LSTM layer (default: top)");
  interp_cmd->add_option("--out", ia.out, "output directory")->required();

  ReportArgs ra;
  auto* report_cmd = app.add_subcommand("report", "render a report.json as an aligned table");
  report_cmd->add_option("--input", ra.input, "report.json written by evaluate")->required();
  report_cmd->add_option("--out", ra.out, "also write the table here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    return report_error("missing_file", e.what(), kMissingFile);
  } catch (const CLI::ParseError& e) {
    return report_error("usage", e.what(), kUsage);
  }

  try {
    if (*synth_cmd) run_synth(sa, *synth_cmd);
    else if (*feat_cmd) run_featurize(fa, *feat_cmd);
    else if (*train_cmd) run_train(ta, *train_cmd);
    else if (*eval_cmd) run_evaluate(ea, *eval_cmd);
    else if (*interp_cmd) run_interpret(ia, *interp_cmd);
    else if (*report_cmd) run_report(ra);
  } catch (const MissingFileError& e) {
    return report_error("missing_file", e.what(), kMissingFile);
  } catch (const ParseError& e) {
    return report_error("schema", e.what(), kSchema);
  } catch (const TrainingDiverged& e) {
    return report_error("diverged", e.what(), kDiverged);
  } catch (const InvalidArgument& e) {
    return report_error("invalid_argument", e.what(), kUsage);
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), kInternal);
  }
  return kOk;
}
