#pragma once

// Hidden-state response analysis of a trained network. All passes run in
// inference mode on standardized inputs; the model is never modified.
//
// Layers are 0-based (default: the top layer feeding the readout). Time
// steps are 0-based in memory and 1-based in exported files.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>
#include <json.hpp>

#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/io.hpp"
#include "stepwise/model/train.hpp"

namespace stepwise::interpret {

struct ResponseProfile {
  Eigen::MatrixXd values;  // time_steps x hidden_units, mean |dh|
  std::size_t instances = 0;
  int layer = 0;
};

struct AblationResult {
  int feature = 0;
  int layer = 0;
  Eigen::MatrixXd diff;             // profile(full) - profile(ablated)
  std::vector<double> step_scores;  // max |diff| per time step
  std::vector<int> ranking;         // time steps by descending score, ties to the earlier step

  /// Sum of |diff| over every (step, unit).
  double aggregate() const { return diff.cwiseAbs().sum(); }
};

inline int resolve_layer(const model::TrainedModel& m, std::optional<int> layer) {
  const int l = layer.value_or(m.config.layers - 1);
  if (l < 0 || l >= m.config.layers)
    throw InvalidArgument(fmt::format("layer {} out of range [0, {})", l, m.config.layers));
  return l;
}

/// dh_t = h_t - h_{t-1} with h_{-1} = 0, per step, for a batch of
/// standardized inputs: result[t] is H x B.
inline std::vector<Eigen::MatrixXd> batch_deltas(const model::LstmParams& params,
                                                 std::span<const Eigen::MatrixXd> inputs, int layer) {
  auto hs = model::hidden_states(params, inputs);
  auto& h = hs.at(static_cast<std::size_t>(layer));
  for (std::size_t t = h.size(); t-- > 1;) h[t] -= h[t - 1];
  return std::move(h);
}

/// Per-step dh vectors of one raw instance.
inline std::vector<Eigen::VectorXd> hidden_deltas(const model::TrainedModel& m, const SequenceInstance& instance,
                                                  std::optional<int> layer = std::nullopt) {
  const int l = resolve_layer(m, layer);
  SequenceDataset one{m.feature_names, {instance}};
  model::check_input(m, one);
  const auto x = standardize(instance.steps, m.train_stats);
  std::vector<Eigen::MatrixXd> inputs;
  for (Eigen::Index t = 0; t < x.cols(); ++t) inputs.push_back(x.col(t));
  std::vector<Eigen::VectorXd> out;
  for (auto& d : batch_deltas(m.params, inputs, l)) out.push_back(d.col(0));
  return out;
}

namespace detail {

inline ResponseProfile profile_normalized(const model::TrainedModel& m, const SequenceDataset& normalized, int layer) {
  if (normalized.size() == 0) throw InvalidArgument("expected_response: empty dataset");
  const auto idx = model::all_indices(normalized.size());
  const auto deltas = batch_deltas(m.params, model::gather_batch(normalized, idx), layer);
  ResponseProfile p;
  p.layer = layer;
  p.instances = normalized.size();
  p.values.resize(static_cast<Eigen::Index>(deltas.size()), m.config.hidden_units);
  for (std::size_t t = 0; t < deltas.size(); ++t)
    p.values.row(static_cast<Eigen::Index>(t)) =
        deltas[t].cwiseAbs().rowwise().sum().transpose() / static_cast<double>(normalized.size());
  return p;
}

}  // namespace detail

/// Entry (t, u): mean over instances of |dh_t[u]|.
inline ResponseProfile expected_response(const model::TrainedModel& m, const SequenceDataset& raw,
                                         std::optional<int> layer = std::nullopt) {
  const int l = resolve_layer(m, layer);
  if (raw.size() == 0) throw InvalidArgument("expected_response: empty dataset");
  model::check_input(m, raw);
  return detail::profile_normalized(m, normalize(raw, m.train_stats), l);
}

/// Time steps ordered by descending score; equal scores keep step order.
inline std::vector<int> rank_steps(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

/// Compares the response profile with and without one feature, where
/// ablation sets the feature's standardized value to 0 (its training mean).
inline AblationResult ablate_feature(const model::TrainedModel& m, const SequenceDataset& raw, int feature,
                                     std::optional<int> layer = std::nullopt) {
  const int l = resolve_layer(m, layer);
  if (feature < 0 || feature >= m.config.feature_dim)
    throw InvalidArgument(fmt::format("feature index {} out of range [0, {})", feature, m.config.feature_dim));
  if (raw.size() == 0) throw InvalidArgument("ablate_feature: empty dataset");
  model::check_input(m, raw);
  const auto full = normalize(raw, m.train_stats);
  auto ablated = full;
  for (auto& inst : ablated.instances) inst.steps.row(feature).setZero();

  AblationResult r;
  r.feature = feature;
  r.layer = l;
  r.diff = detail::profile_normalized(m, full, l).values - detail::profile_normalized(m, ablated, l).values;
  for (Eigen::Index t = 0; t < r.diff.rows(); ++t) r.step_scores.push_back(r.diff.row(t).cwiseAbs().maxCoeff());
  r.ranking = rank_steps(r.step_scores);
  return r;
}

/// Rows = time steps (1-based "step" column), columns = hidden units.
inline void write_matrix_csv(const Eigen::MatrixXd& values, const std::filesystem::path& path) {
  auto out = io::open_output(path);
  out << "step";
  for (Eigen::Index u = 0; u < values.cols(); ++u) out << ",unit_" << u;
  out << '\n';
  for (Eigen::Index t = 0; t < values.rows(); ++t) {
    out << t + 1;
    for (Eigen::Index u = 0; u < values.cols(); ++u) out << ',' << io::format_double(values(t, u));
    out << '\n';
  }
}

inline nlohmann::json ranking_json(const AblationResult& r, const std::vector<std::string>& feature_names) {
  nlohmann::json j;
  j["feature_index"] = r.feature;
  j["feature"] = feature_names.at(static_cast<std::size_t>(r.feature));
  j["layer"] = r.layer;
  j["aggregate_abs_diff"] = r.aggregate();
  j["ranking"] = nlohmann::json::array();
  for (int t : r.ranking) j["ranking"].push_back({{"step", t + 1}, {"score", r.step_scores[t]}});
  return j;
}

}  // namespace stepwise::interpret
