#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/error.hpp"

namespace stepwise {

/// One labeled sequence: column t of `steps` is the feature vector of
/// window t.
struct SequenceInstance {
  std::string participant_id;
  int period = 0;
  Eigen::MatrixXd steps;  // feature_dim x time_steps
  bool label = false;
  int age = 0;
};

struct SequenceDataset {
  std::vector<std::string> feature_names;
  std::vector<SequenceInstance> instances;

  int feature_dim() const { return static_cast<int>(feature_names.size()); }
  int time_steps() const { return instances.empty() ? 0 : static_cast<int>(instances.front().steps.cols()); }
  std::size_t size() const { return instances.size(); }

  SequenceDataset subset(std::span<const std::size_t> indices) const {
    SequenceDataset out{feature_names, {}};
    out.instances.reserve(indices.size());
    for (auto i : indices) out.instances.push_back(instances.at(i));
    return out;
  }
};

/// Per-feature mean and population standard deviation.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Fits standardization statistics over every window of every instance.
inline FeatureStats fit_feature_stats(const SequenceDataset& data) {
  const int f = data.feature_dim();
  if (data.instances.empty()) throw InvalidArgument("fit_feature_stats: empty dataset");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(f);
  double count = 0;
  for (const auto& inst : data.instances) {
    sum += inst.steps.rowwise().sum();
    count += static_cast<double>(inst.steps.cols());
  }
  FeatureStats stats{sum / count, Eigen::VectorXd::Zero(f)};
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(f);
  for (const auto& inst : data.instances)
    sq += (inst.steps.colwise() - stats.mean).array().square().matrix().rowwise().sum();
  stats.stddev = (sq / count).array().sqrt().matrix();
  return stats;
}

/// x -> (x - mean) / std per feature; zero-variance features map to 0.
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& steps, const FeatureStats& stats) {
  if (steps.rows() != stats.dim())
    throw InvalidArgument(fmt::format("normalize: feature dim {} != stats dim {}", steps.rows(), stats.dim()));
  Eigen::MatrixXd out(steps.rows(), steps.cols());
  for (Eigen::Index r = 0; r < steps.rows(); ++r) {
    const double sd = stats.stddev(r);
    if (sd > 0.0) out.row(r) = (steps.row(r).array() - stats.mean(r)) / sd;
    else out.row(r).setZero();
  }
  return out;
}

inline SequenceDataset normalize(SequenceDataset data, const FeatureStats& stats) {
  for (auto& inst : data.instances) inst.steps = standardize(inst.steps, stats);
  return data;
}

}  // namespace stepwise
