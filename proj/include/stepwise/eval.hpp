#pragma once

// Experiment harness: participant-grouped k-fold plans, week-subset
// augmentation, association statistics and the experiment sweeps.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "stepwise/cohort.hpp"
#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/features.hpp"
#include "stepwise/model/forest.hpp"
#include "stepwise/model/logreg.hpp"
#include "stepwise/model/train.hpp"
#include "stepwise/parallel.hpp"

namespace stepwise::eval {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

// ---------------------------------------------------------------- k-fold

struct Rotation {
  std::vector<std::size_t> train, validation, test;
};

struct SplitPlan {
  int folds = 10;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // per instance

  /// Fold r is the test set, fold (r+1) mod folds validation, the rest train.
  Rotation rotation(int r) const {
    if (r < 0 || r >= folds) throw InvalidArgument(fmt::format("rotation {} out of range", r));
    Rotation out;
    const int val = (r + 1) % folds;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == r) out.test.push_back(i);
      else if (fold_of[i] == val) out.validation.push_back(i);
      else out.train.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> s(static_cast<std::size_t>(folds), 0);
    for (int f : fold_of) ++s[static_cast<std::size_t>(f)];
    return s;
  }
};

/// Participant-grouped, label-stratified fold assignment. Groups are placed
/// largest first (then by positive count, then a seeded order) into the
/// least-filled fold, ties broken by the fewest positives (for groups that
/// are mostly positive) or negatives, then by fold index.
inline SplitPlan kfold(std::span<const std::string> participant_ids, const std::vector<bool>& labels, int folds,
                       std::uint64_t seed) {
  if (participant_ids.size() != labels.size()) throw InvalidArgument("kfold: ids and labels differ in length");
  if (folds < 3) throw InvalidArgument("kfold: need at least 3 folds (train, validation, test)");
  if (participant_ids.size() < static_cast<std::size_t>(folds))
    throw InvalidArgument(fmt::format("kfold: {} instances cannot fill {} folds", participant_ids.size(), folds));

  struct Group {
    std::vector<std::size_t> members;
    int positives = 0;
    std::uint64_t key = 0;
  };
  std::map<std::string, Group> by_id;
  for (std::size_t i = 0; i < participant_ids.size(); ++i) {
    auto& g = by_id[participant_ids[i]];
    g.members.push_back(i);
    g.positives += labels[i];
  }
  if (by_id.size() < static_cast<std::size_t>(folds))
    throw InvalidArgument(fmt::format("kfold: {} participants cannot fill {} folds", by_id.size(), folds));
  std::vector<Group> groups;
  for (auto& [id, g] : by_id) {
    g.key = derive_seed(seed, io::fnv1a(id));
    groups.push_back(std::move(g));
  }
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    if (a.positives != b.positives) return a.positives > b.positives;
    return a.key < b.key;
  });

  SplitPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  plan.fold_of.assign(participant_ids.size(), -1);
  std::vector<std::size_t> size(folds, 0), pos(folds, 0);
  for (const auto& g : groups) {
    const bool mostly_positive = 2 * static_cast<std::size_t>(g.positives) >= g.members.size();
    int best = 0;
    for (int f = 1; f < folds; ++f) {
      const auto lean = [&](int x) { return mostly_positive ? pos[x] : size[x] - pos[x]; };
      if (size[f] < size[best] || (size[f] == size[best] && lean(f) < lean(best))) best = f;
    }
    for (auto i : g.members) plan.fold_of[i] = best;
    size[best] += g.members.size();
    pos[best] += static_cast<std::size_t>(g.positives);
  }
  return plan;
}

inline SplitPlan kfold(const SequenceDataset& data, int folds, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<bool> labels;
  for (const auto& inst : data.instances) {
    ids.push_back(inst.participant_id);
    labels.push_back(inst.label);
  }
  return kfold(ids, labels, folds, seed);
}

// ---------------------------------------------------------- augmentation

inline std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  return r;
}

/// All size-r subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<int>> combinations(int n, int r) {
  std::vector<std::vector<int>> out;
  if (r < 0 || r > n) return out;
  std::vector<int> c(static_cast<std::size_t>(r));
  std::iota(c.begin(), c.end(), 0);
  while (true) {
    out.push_back(c);
    int i = r - 1;
    while (i >= 0 && c[i] == n - r + i) --i;
    if (i < 0) break;
    ++c[i];
    for (int j = i + 1; j < r; ++j) c[j] = c[j - 1] + 1;
  }
  return out;
}

/// Each sequence of T steps yields C(T-2, M-2) sequences of M steps: the
/// first step, every (M-2)-subset of the inner steps in order, the last step.
inline SequenceDataset augment(const SequenceDataset& data, int M) {
  const int t = data.time_steps();
  if (t < 3) throw InvalidArgument(fmt::format("augment: sequences need at least 3 steps, got {}", t));
  if (M < 3 || M > t) throw InvalidArgument(fmt::format("augment: M={} outside [3, {}]", M, t));
  const auto combos = combinations(t - 2, M - 2);
  SequenceDataset out{data.feature_names, {}};
  out.instances.reserve(data.size() * combos.size());
  for (const auto& inst : data.instances) {
    if (inst.steps.cols() != t) throw InvalidArgument("augment: sequences differ in length");
    for (const auto& c : combos) {
      SequenceInstance s{inst.participant_id, inst.period, Eigen::MatrixXd(inst.steps.rows(), M), inst.label, inst.age};
      s.steps.col(0) = inst.steps.col(0);
      for (int j = 0; j < M - 2; ++j) s.steps.col(j + 1) = inst.steps.col(c[j] + 1);
      s.steps.col(M - 1) = inst.steps.col(t - 1);
      out.instances.push_back(std::move(s));
    }
  }
  return out;
}

// ----------------------------------------------------------- association

struct AssociationStats {
  std::size_t instances = 0;
  double cohort_mean_das = 0.0;
  std::size_t above_mean = 0;
  std::optional<double> p_improved_given_above;  // empty when nobody is above the mean
  double slope = 0.0;     // OLS: (bmi_end - bmi_start) on DAS
  double intercept = 0.0;
  double slope_se = 0.0;
};

/// DAS is the mean daily total of an instance's (imputed) grid.
inline AssociationStats association_stats(std::span<const cohort::ParticipantSeries> series) {
  if (series.size() < 2) throw InvalidArgument("association_stats: need at least 2 instances");
  const std::size_t n = series.size();
  std::vector<double> das(n), delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = series[i].grid;
    double total = 0.0;
    for (int d = 0; d < g.days(); ++d) total += g.day_total(d);
    das[i] = total / g.days();
    delta[i] = series[i].bmi_end - series[i].bmi_start;
  }
  AssociationStats s;
  s.instances = n;
  s.cohort_mean_das = std::accumulate(das.begin(), das.end(), 0.0) / static_cast<double>(n);
  std::size_t improved = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (das[i] > s.cohort_mean_das) {
      ++s.above_mean;
      improved += series[i].improved;
    }
  if (s.above_mean > 0) s.p_improved_given_above = static_cast<double>(improved) / static_cast<double>(s.above_mean);

  const double my = std::accumulate(delta.begin(), delta.end(), 0.0) / static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (das[i] - s.cohort_mean_das) * (das[i] - s.cohort_mean_das);
    sxy += (das[i] - s.cohort_mean_das) * (delta[i] - my);
  }
  if (sxx > 0.0) {
    s.slope = sxy / sxx;
    s.intercept = my - s.slope * s.cohort_mean_das;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = delta[i] - s.intercept - s.slope * das[i];
      rss += r * r;
    }
    s.slope_se = n > 2 ? std::sqrt(rss / static_cast<double>(n - 2) / sxx) : 0.0;
  } else {
    s.intercept = my;
  }
  return s;
}

inline nlohmann::json to_json(const AssociationStats& s) {
  nlohmann::json j{{"instances", s.instances},   {"cohort_mean_das", s.cohort_mean_das},
                   {"above_mean", s.above_mean}, {"slope", s.slope},
                   {"intercept", s.intercept},   {"slope_se", s.slope_se}};
  j["p_improved_given_above_mean"] = s.p_improved_given_above ? nlohmann::json(*s.p_improved_given_above)
                                                               : nlohmann::json("undefined");
  return j;
}

// ----------------------------------------------------------- experiments

enum class ExperimentKind { feature_sweep, window_sweep, model_sweep, augment_sweep, age_strata };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::feature_sweep: return "feature_sweep";
    case ExperimentKind::window_sweep: return "window_sweep";
    case ExperimentKind::model_sweep: return "model_sweep";
    case ExperimentKind::augment_sweep: return "augment_sweep";
    case ExperimentKind::age_strata: return "age_strata";
  }
  return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::feature_sweep, ExperimentKind::window_sweep, ExperimentKind::model_sweep,
                 ExperimentKind::augment_sweep, ExperimentKind::age_strata})
    if (to_string(k) == s) return k;
  throw InvalidArgument(fmt::format("unknown experiment kind '{}'", s));
}

/// Model names: "lr", "rf", "lstm1", "lstm2", "lstm3".
struct ModelSpec {
  std::string name;
  bool is_lstm() const { return name.rfind("lstm", 0) == 0; }
  int layers() const { return is_lstm() ? name.back() - '0' : 0; }
  std::string display() const {
    if (name == "lr") return "LR";
    if (name == "rf") return "RF";
    return fmt::format("LSTM ({} layer{})", layers(), layers() > 1 ? "s" : "");
  }
};

inline ModelSpec parse_model(std::string_view s) {
  if (s == "lr" || s == "rf" || s == "lstm1" || s == "lstm2" || s == "lstm3") return {std::string(s)};
  throw InvalidArgument(fmt::format("unknown model '{}' (expected lr, rf, lstm1, lstm2, lstm3)", s));
}

/// Overrides for an experiment's default grid; empty members keep defaults.
struct ExperimentGrid {
  std::vector<int> m_values;
  std::vector<int> k_values;
  std::vector<features::FeatureSet> feature_sets;
  std::vector<std::string> models;
  std::vector<int> M_values;
};

enum class AgeGroup { all, above_50, at_most_50 };

inline std::string_view to_string(AgeGroup g) {
  switch (g) {
    case AgeGroup::all: return "all";
    case AgeGroup::above_50: return "above_50";
    case AgeGroup::at_most_50: return "at_most_50";
  }
  return "?";
}

struct Cell {
  ModelSpec model;
  int m = 6;
  std::optional<int> k;  // empty: single window over the whole period (baselines)
  features::FeatureSet feature_set = features::FeatureSet::all;
  std::optional<int> M;
  AgeGroup group = AgeGroup::all;
};

struct FoldResult {
  int fold = 0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
  double majority_accuracy = 0.0;  // training-majority label on the test fold
  std::size_t train_size = 0, validation_size = 0, test_size = 0;
};

struct CellResult {
  Cell cell;
  int feature_size = 0;
  int window_days = 0;
  int step_nodes = 0;
  std::size_t data_size = 0;  // sequences in the (augmented) dataset
  std::vector<FoldResult> folds;
  double mean_validation = 0.0, mean_test = 0.0, mean_majority = 0.0;
  double runtime_seconds = 0.0;
};

struct EvalOptions {
  int folds = 10;
  std::uint64_t seed = 0;
  model::ModelConfig lstm;  // feature_dim and layers are set per cell
  model::LogRegConfig logreg;
  model::ForestConfig forest;
  unsigned threads = thread_budget();
};

struct ExperimentReport {
  ExperimentKind kind = ExperimentKind::model_sweep;
  EvalOptions options;
  std::vector<CellResult> cells;
  std::vector<std::string> notes;
};

/// Instances for one slot count; must be imputed.
using CohortSource = std::function<std::vector<cohort::ParticipantSeries>(int m)>;

inline void validate(const Cell& c) {
  if (c.m != 4 && c.m != 6 && c.m != 12) throw InvalidArgument(fmt::format("grid: m={} not in {{4, 6, 12}}", c.m));
  if (c.k && *c.k != 3 && *c.k != 7 && *c.k != 30)
    throw InvalidArgument(fmt::format("grid: k={} not in {{3, 7, 30}}", *c.k));
  if (c.model.is_lstm() && !c.k) throw InvalidArgument("grid: LSTM cells need a window size");
  if (c.M && (*c.M < 3 || *c.M > 12)) throw InvalidArgument(fmt::format("grid: M={} outside [3, 12]", *c.M));
}

inline std::vector<Cell> default_cells(ExperimentKind kind, const ExperimentGrid& grid) {
  using features::FeatureSet;
  const auto pick = [](const auto& given, auto fallback) { return given.empty() ? fallback : given; };
  const auto models = [&](std::vector<std::string> fallback) {
    std::vector<ModelSpec> out;
    for (const auto& s : pick(grid.models, fallback)) out.push_back(parse_model(s));
    return out;
  };
  std::vector<Cell> cells;
  switch (kind) {
    case ExperimentKind::feature_sweep:
      for (int m : pick(grid.m_values, std::vector<int>{4, 6, 12}))
        for (auto set : pick(grid.feature_sets, std::vector{FeatureSet::slots, FeatureSet::slots_demographics, FeatureSet::all}))
          for (const auto& model : models({"lr", "rf"})) {
            Cell c{model, m, std::nullopt, set, std::nullopt, AgeGroup::all};
            if (model.is_lstm()) c.k = 7;
            cells.push_back(c);
          }
      break;
    case ExperimentKind::window_sweep:
      for (const auto& model : models({"lstm1"}))
        for (int k : pick(grid.k_values, std::vector<int>{3, 7, 30}))
          for (int m : pick(grid.m_values, std::vector<int>{6}))
            cells.push_back({model, m, model.is_lstm() ? std::optional<int>(k) : std::nullopt, FeatureSet::all,
                             std::nullopt, AgeGroup::all});
      break;
    case ExperimentKind::model_sweep:
      for (const auto& model : models({"lr", "rf", "lstm1", "lstm2", "lstm3"}))
        for (int m : pick(grid.m_values, std::vector<int>{6}))
          for (int k : pick(grid.k_values, std::vector<int>{7}))
            cells.push_back({model, m, model.is_lstm() ? std::optional<int>(k) : std::nullopt, FeatureSet::all,
                             std::nullopt, AgeGroup::all});
      break;
    case ExperimentKind::augment_sweep:
      for (const auto& model : models({"lstm2"}))
        for (int M : pick(grid.M_values, std::vector<int>{11, 10})) {
          if (!model.is_lstm()) throw InvalidArgument("grid: augment_sweep needs LSTM models");
          cells.push_back({model, pick(grid.m_values, std::vector<int>{6}).front(), 7, FeatureSet::all, M});
        }
      break;
    case ExperimentKind::age_strata:
      for (const auto& model : models({"lstm2"}))
        for (auto g : {AgeGroup::above_50, AgeGroup::at_most_50})
          cells.push_back({model, pick(grid.m_values, std::vector<int>{6}).front(),
                           model.is_lstm() ? std::optional<int>(pick(grid.k_values, std::vector<int>{7}).front())
                                           : std::nullopt,
                           FeatureSet::all, std::nullopt, g});
      break;
  }
  for (const auto& c : cells) validate(c);
  return cells;
}

namespace detail {

inline double majority_accuracy(const SequenceDataset& train, const SequenceDataset& test) {
  std::size_t pos = 0;
  for (const auto& i : train.instances) pos += i.label;
  const bool majority = 2 * pos >= train.size();
  std::size_t hit = 0;
  for (const auto& i : test.instances) hit += i.label == majority;
  return test.size() ? static_cast<double>(hit) / static_cast<double>(test.size()) : 0.0;
}

template <class Model>
double flat_accuracy(const Model& m, const model::FlatDataset& d) {
  if (d.size() == 0) return 0.0;
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i) hit += m.predict(d.x.row(i)) == d.y[static_cast<std::size_t>(i)];
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

struct PreparedCell {
  std::vector<cohort::ParticipantSeries> series;  // the cell's (age-filtered) instances
  SplitPlan plan;
};

inline FoldResult run_fold(const Cell& cell, const PreparedCell& prep, int fold, const EvalOptions& opt,
                           std::uint64_t job_seed) {
  const auto rot = prep.plan.rotation(fold);
  const auto stats = features::compute_cohort_stats(prep.series, rot.train);
  const int n = prep.series.front().n_days();
  auto data = features::build_sequences(prep.series, cell.k.value_or(n), cell.feature_set, stats);
  auto train = data.subset(rot.train), val = data.subset(rot.validation), test = data.subset(rot.test);
  if (cell.M) {
    train = augment(train, *cell.M);
    val = augment(val, *cell.M);
    test = augment(test, *cell.M);
  }
  FoldResult r;
  r.fold = fold;
  r.train_size = train.size();
  r.validation_size = val.size();
  r.test_size = test.size();
  r.majority_accuracy = majority_accuracy(train, test);
  if (cell.model.is_lstm()) {
    auto cfg = opt.lstm;
    cfg.layers = cell.model.layers();
    cfg.seed = job_seed;
    const auto trained = model::train(train, val, cfg);
    r.validation_accuracy = model::accuracy(model::predict(trained, val), val);
    r.test_accuracy = model::accuracy(model::predict(trained, test), test);
  } else {
    const auto ftrain = model::flatten(train), fval = model::flatten(val), ftest = model::flatten(test);
    if (cell.model.name == "lr") {
      const auto m = model::train_logreg(ftrain, opt.logreg);
      r.validation_accuracy = flat_accuracy(m, fval);
      r.test_accuracy = flat_accuracy(m, ftest);
    } else {
      auto fc = opt.forest;
      fc.seed = job_seed;
      const auto m = model::train_forest(ftrain, fc);
      r.validation_accuracy = flat_accuracy(m, fval);
      r.test_accuracy = flat_accuracy(m, ftest);
    }
  }
  return r;
}

}  // namespace detail

/// Runs every (cell, fold) job, in parallel up to options.threads; results
/// come back in grid order regardless of completion order. All cells share
/// one fold plan per instance set, so cells are compared on paired splits.
inline ExperimentReport run_experiment(ExperimentKind kind, const CohortSource& source, const EvalOptions& options,
                                       const ExperimentGrid& grid = {}) {
  ExperimentReport report;
  report.kind = kind;
  report.options = options;
  const auto cells = default_cells(kind, grid);

  std::map<int, std::vector<cohort::ParticipantSeries>> by_m;
  std::vector<detail::PreparedCell> prepared;
  for (const auto& c : cells) {
    if (!by_m.count(c.m)) {
      by_m[c.m] = source(c.m);
      if (by_m[c.m].empty()) throw InvalidArgument("run_experiment: cohort has no instances");
    }
    detail::PreparedCell p;
    for (const auto& s : by_m[c.m])
      if (c.group == AgeGroup::all || (c.group == AgeGroup::above_50) == (s.demographics.age > 50)) p.series.push_back(s);
    std::vector<std::string> ids;
    std::vector<bool> labels;
    for (const auto& s : p.series) {
      ids.push_back(s.participant_id);
      labels.push_back(s.improved);
    }
    p.plan = kfold(ids, labels, options.folds, options.seed);
    prepared.push_back(std::move(p));
  }

  const std::size_t folds = static_cast<std::size_t>(options.folds);
  std::vector<FoldResult> results(cells.size() * folds);
  std::vector<double> seconds(cells.size() * folds, 0.0);
  parallel_for(
      results.size(),
      [&](std::size_t job) {
        const std::size_t c = job / folds;
        const int f = static_cast<int>(job % folds);
        const auto t0 = std::chrono::steady_clock::now();
        results[job] = detail::run_fold(cells[c], prepared[c], f, options, derive_seed(options.seed, c, f));
        seconds[job] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      },
      options.threads);

  for (std::size_t c = 0; c < cells.size(); ++c) {
    CellResult cr;
    cr.cell = cells[c];
    const int n = prepared[c].series.front().n_days();
    cr.window_days = cells[c].k.value_or(n);
    cr.feature_size = features::feature_size(cells[c].m, cells[c].feature_set);
    cr.step_nodes = cells[c].M.value_or(n / cr.window_days);
    const std::uint64_t per = cells[c].M ? binomial(n / cr.window_days - 2, *cells[c].M - 2) : 1;
    cr.data_size = prepared[c].series.size() * per;
    for (std::size_t f = 0; f < folds; ++f) {
      const auto& r = results[c * folds + f];
      cr.folds.push_back(r);
      cr.mean_validation += r.validation_accuracy / static_cast<double>(folds);
      cr.mean_test += r.test_accuracy / static_cast<double>(folds);
      cr.mean_majority += r.majority_accuracy / static_cast<double>(folds);
      cr.runtime_seconds += seconds[c * folds + f];
    }
    report.cells.push_back(std::move(cr));
  }
  if (kind == ExperimentKind::augment_sweep)
    report.notes.push_back(
        "validation and test folds are augmented sequences of held-out participants; no participant spans folds");
  if (kind == ExperimentKind::age_strata)
    report.notes.push_back("each age group is split and trained separately; above_50 means age > 50");
  return report;
}

// --------------------------------------------------------------- reports

inline nlohmann::json to_json(const CellResult& c) {
  nlohmann::json j{{"model", c.cell.model.display()},
                   {"model_id", c.cell.model.name},
                   {"time_slots", c.cell.m},
                   {"feature_set", features::to_string(c.cell.feature_set)},
                   {"feature_size", c.feature_size},
                   {"window_days", c.window_days},
                   {"step_nodes", c.step_nodes},
                   {"data_size", c.data_size},
                   {"age_group", to_string(c.cell.group)},
                   {"mean_validation_accuracy", c.mean_validation},
                   {"mean_test_accuracy", c.mean_test},
                   {"mean_majority_accuracy", c.mean_majority},
                   {"runtime_seconds", c.runtime_seconds}};
  j["M"] = c.cell.M ? nlohmann::json(*c.cell.M) : nlohmann::json(nullptr);
  j["folds"] = nlohmann::json::array();
  for (const auto& f : c.folds)
    j["folds"].push_back({{"fold", f.fold},
                          {"validation_accuracy", f.validation_accuracy},
                          {"test_accuracy", f.test_accuracy},
                          {"majority_accuracy", f.majority_accuracy},
                          {"train_size", f.train_size},
                          {"validation_size", f.validation_size},
                          {"test_size", f.test_size}});
  return j;
}

inline nlohmann::json to_json(const ExperimentReport& r) {
  const auto& o = r.options;
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["config"] = {{"folds", o.folds},
                 {"seed", o.seed},
                 {"lstm",
                  {{"embed_dim", o.lstm.embed_dim},
                   {"hidden_units", o.lstm.hidden_units},
                   {"dropout_rate", o.lstm.dropout_rate},
                   {"epochs", o.lstm.epochs},
                   {"learning_rate", o.lstm.learning_rate},
                   {"l2_lambda", o.lstm.l2_lambda},
                   {"grad_clip_norm", o.lstm.grad_clip_norm},
                   {"batch_size", o.lstm.batch_size}}},
                 {"logreg", {{"l2", o.logreg.l2}, {"iterations", o.logreg.iterations}, {"learning_rate", o.logreg.learning_rate}}},
                 {"forest",
                  {{"n_trees", o.forest.n_trees},
                   {"max_depth", o.forest.max_depth},
                   {"min_leaf", o.forest.min_leaf},
                   {"bootstrap", o.forest.bootstrap}}}};
  if (o.forest.features_per_split) j["config"]["forest"]["features_per_split"] = *o.forest.features_per_split;
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) j["cells"].push_back(to_json(c));
  j["notes"] = r.notes;
  return j;
}

/// Aligned text table with one row per cell.
inline std::string render_table(const nlohmann::json& report) {
  const std::vector<std::string> head{"Model", "Group", "Slots", "Features", "Feature Size", "Window", "Step Nodes",
                                      "Data Size", "Val Acc", "Test Acc", "Majority"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.at("cells")) {
    const int window = c.at("window_days");
    rows.push_back({c.at("model").get<std::string>(), c.at("age_group").get<std::string>(),
                    std::to_string(c.at("time_slots").get<int>()), c.at("feature_set").get<std::string>(),
                    std::to_string(c.at("feature_size").get<int>()), fmt::format("{} days", window),
                    std::to_string(c.at("step_nodes").get<int>()), std::to_string(c.at("data_size").get<std::size_t>()),
                    fmt::format("{:.1f}%", 100.0 * c.at("mean_validation_accuracy").get<double>()),
                    fmt::format("{:.1f}%", 100.0 * c.at("mean_test_accuracy").get<double>()),
                    fmt::format("{:.1f}%", 100.0 * c.at("mean_majority_accuracy").get<double>())});
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t i = 0; i < head.size(); ++i) {
    width[i] = head[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  std::string out = fmt::format("{}\n", report.at("kind").get<std::string>());
  const auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out += fmt::format("{:<{}}{}", r[i], width[i], i + 1 < r.size() ? "  " : "\n");
  };
  line(head);
  std::size_t total = 0;
  for (auto w : width) total += w + 2;
  out += std::string(total - 2, '-') + "\n";
  for (const auto& r : rows) line(r);
  if (report.contains("notes"))
    for (const auto& n : report.at("notes")) out += fmt::format("note: {}\n", n.get<std::string>());
  return out;
}

}  // namespace stepwise::eval
