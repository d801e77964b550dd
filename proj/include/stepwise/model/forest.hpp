#pragma once

// Random forest of CART trees: bootstrap samples, Gini splits over a random
// feature subset per node, majority vote.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/error.hpp"
#include "stepwise/model/logreg.hpp"

namespace stepwise::model {

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_leaf = 2;
  std::optional<int> features_per_split;  // default ceil(sqrt(feature_dim))
  bool bootstrap = true;
  std::uint64_t seed = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  bool label = false;
  double positive_fraction = 0.0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> in_bag;      // bootstrap sample (with repeats)
  std::vector<std::size_t> out_of_bag;  // training rows never drawn

  bool predict(const Eigen::RowVectorXd& x) const {
    int k = 0;
    while (nodes[k].feature >= 0) k = x(nodes[k].feature) <= nodes[k].threshold ? nodes[k].left : nodes[k].right;
    return nodes[k].label;
  }
  int depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k)
      if (nodes[k].feature >= 0) {
        d[nodes[k].left] = d[nodes[k].right] = d[k] + 1;
        best = std::max(best, d[k] + 1);
      }
    return best;
  }
};

inline double gini(double pos, double total) {
  if (total <= 0.0) return 0.0;
  const double p = pos / total;
  return 2.0 * p * (1.0 - p);
}

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const FlatDataset& data, const ForestConfig& config, int mtry, std::mt19937_64& rng)
      : data_(data), config_(config), mtry_(mtry), rng_(rng) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    DecisionTree tree;
    grow(tree, rows, 0);
    return tree;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;
  };

  int grow(DecisionTree& tree, std::vector<std::size_t>& rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double pos = 0.0;
    for (auto r : rows) pos += data_.y[r];
    const double n = static_cast<double>(rows.size());
    tree.nodes[id].positive_fraction = pos / n;
    tree.nodes[id].label = 2.0 * pos >= n;
    if (depth >= config_.max_depth || pos == 0.0 || pos == n || rows.size() < 2u * config_.min_leaf) return id;

    const auto split = best_split(rows, pos);
    if (!split) return id;
    std::vector<std::size_t> left, right;
    for (auto r : rows) (data_.x(static_cast<Eigen::Index>(r), split->feature) <= split->threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    tree.nodes[id].feature = split->feature;
    tree.nodes[id].threshold = split->threshold;
    const int l = grow(tree, left, depth + 1);
    const int r = grow(tree, right, depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  /// Best weighted-Gini split over a random subset of `mtry` features; if
  /// none of them can split the node, the remaining features are tried in
  /// random order.
  std::optional<Split> best_split(const std::vector<std::size_t>& rows, double pos) {
    const int d = static_cast<int>(data_.x.cols());
    std::vector<int> features(d);
    std::iota(features.begin(), features.end(), 0);
    std::shuffle(features.begin(), features.end(), rng_);
    std::optional<Split> best;
    std::vector<std::pair<double, bool>> column(rows.size());
    const double n = static_cast<double>(rows.size());
    for (int k = 0; k < d; ++k) {
      if (k >= mtry_ && best) break;
      const int f = features[k];
      for (std::size_t i = 0; i < rows.size(); ++i)
        column[i] = {data_.x(static_cast<Eigen::Index>(rows[i]), f), data_.y[rows[i]]};
      std::sort(column.begin(), column.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_pos += column[i].second;
        if (column[i].first == column[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        if (nl < config_.min_leaf || nr < config_.min_leaf) continue;
        const double impurity = (nl * gini(left_pos, nl) + nr * gini(pos - left_pos, nr)) / n;
        if (!best || impurity < best->impurity)
          best = Split{f, 0.5 * (column[i].first + column[i + 1].first), impurity};
      }
    }
    return best;
  }

  const FlatDataset& data_;
  const ForestConfig& config_;
  int mtry_;
  std::mt19937_64& rng_;
};

}  // namespace detail

struct RandomForest {
  std::vector<DecisionTree> trees;
  int feature_dim = 0;

  std::vector<bool> tree_votes(const Eigen::RowVectorXd& x) const {
    if (x.size() != feature_dim) throw InvalidArgument(fmt::format("forest: input length {} != {}", x.size(), feature_dim));
    std::vector<bool> v;
    v.reserve(trees.size());
    for (const auto& t : trees) v.push_back(t.predict(x));
    return v;
  }
  /// Fraction of trees voting positive.
  double predict_proba(const Eigen::RowVectorXd& x) const {
    const auto v = tree_votes(x);
    return static_cast<double>(std::count(v.begin(), v.end(), true)) / static_cast<double>(v.size());
  }
  /// Majority vote; an exact tie is positive.
  bool predict(const Eigen::RowVectorXd& x) const { return predict_proba(x) >= 0.5; }
};

inline RandomForest train_forest(const FlatDataset& data, const ForestConfig& config = {}) {
  if (data.size() == 0) throw InvalidArgument("forest: empty training set");
  if (config.n_trees < 1 || config.max_depth < 1 || config.min_leaf < 1 ||
      (config.features_per_split && *config.features_per_split < 1))
    throw InvalidArgument("forest: config values must be >= 1");
  require_two_classes(data.y, "forest");
  const int d = static_cast<int>(data.x.cols());
  const int mtry = std::min(d, config.features_per_split.value_or(static_cast<int>(std::ceil(std::sqrt(d)))));
  RandomForest forest;
  forest.feature_dim = d;
  std::mt19937_64 rng(config.seed);
  const std::size_t n = data.size();
  for (int t = 0; t < config.n_trees; ++t) {
    std::vector<std::size_t> sample;
    std::vector<bool> drawn(n, false);
    if (config.bootstrap) {
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = pick(rng);
        sample.push_back(r);
        drawn[r] = true;
      }
    } else {
      sample.resize(n);
      std::iota(sample.begin(), sample.end(), 0);
      drawn.assign(n, true);
    }
    detail::TreeBuilder builder(data, config, mtry, rng);
    auto tree = builder.build(sample);
    tree.in_bag = std::move(sample);
    for (std::size_t i = 0; i < n; ++i)
      if (!drawn[i]) tree.out_of_bag.push_back(i);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace stepwise::model
