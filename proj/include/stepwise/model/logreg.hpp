#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/model/lstm.hpp"

namespace stepwise::model {

/// Flat design matrix: one row per instance, windows concatenated.
struct FlatDataset {
  Eigen::MatrixXd x;  // n x d
  std::vector<bool> y;

  std::size_t size() const { return y.size(); }
};

inline FlatDataset flatten(const SequenceDataset& data) {
  FlatDataset out;
  const int f = data.feature_dim(), t = data.time_steps();
  out.x.resize(static_cast<Eigen::Index>(data.size()), f * t);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.instances[i].steps;
    out.x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(s.data(), s.size());
    out.y.push_back(data.instances[i].label);
  }
  return out;
}

inline void require_two_classes(const std::vector<bool>& y, const char* who) {
  std::size_t pos = 0;
  for (bool v : y) pos += v;
  if (pos == 0 || pos == y.size()) throw InvalidArgument(fmt::format("{}: training set has a single class", who));
}

struct LogRegConfig {
  double l2 = 1e-3;
  int iterations = 2000;
  double learning_rate = 0.5;
};

struct LogisticModel {
  Eigen::VectorXd mean, stddev;  // standardization of the training columns
  Eigen::VectorXd weights;
  double bias = 0.0;

  double predict_proba(const Eigen::RowVectorXd& x) const {
    if (x.size() != weights.size())
      throw InvalidArgument(fmt::format("logreg: input length {} != {}", x.size(), weights.size()));
    double z = bias;
    for (Eigen::Index j = 0; j < x.size(); ++j)
      if (stddev(j) > 0.0) z += weights(j) * (x(j) - mean(j)) / stddev(j);
    return sigmoid(z);
  }
  bool predict(const Eigen::RowVectorXd& x) const { return predict_proba(x) >= 0.5; }
};

/// Full-batch gradient descent on mean cross-entropy + l2 * ||w||^2 over
/// standardized columns.
inline LogisticModel train_logreg(const FlatDataset& data, const LogRegConfig& config = {}) {
  if (data.size() == 0) throw InvalidArgument("logreg: empty training set");
  require_two_classes(data.y, "logreg");
  const auto n = static_cast<double>(data.size());
  LogisticModel m;
  m.mean = data.x.colwise().mean().transpose();
  m.stddev = ((data.x.rowwise() - m.mean.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  Eigen::MatrixXd z(data.x.rows(), data.x.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (m.stddev(j) > 0.0)
      z.col(j) = (data.x.col(j).array() - m.mean(j)) / m.stddev(j);
    else
      z.col(j).setZero();
  }
  Eigen::VectorXd y(data.x.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = data.y[static_cast<std::size_t>(i)] ? 1.0 : 0.0;

  m.weights = Eigen::VectorXd::Zero(z.cols());
  for (int it = 0; it < config.iterations; ++it) {
    Eigen::VectorXd logits = (z * m.weights).array() + m.bias;
    const Eigen::VectorXd residual = logits.unaryExpr([](double v) { return sigmoid(v); }) - y;
    const Eigen::VectorXd gw = z.transpose() * residual / n + 2.0 * config.l2 * m.weights;
    m.weights -= config.learning_rate * gw;
    m.bias -= config.learning_rate * residual.sum() / n;
  }
  return m;
}

}  // namespace stepwise::model
