#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/dataset.hpp"
#include "stepwise/error.hpp"
#include "stepwise/model/lstm.hpp"

namespace stepwise::model {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;      // mean data loss over the epoch's batches (train mode)
  double train_accuracy = 0.0;  // train-mode predictions during the epoch
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// How raw study data was turned into the model's input sequences. Saved
/// with the checkpoint so inference rebuilds identical features.
struct FeaturePipeline {
  int k = 7;
  int m = 6;
  std::string feature_set = "all";
  double cohort_daily_mean = 0.0;
  double cohort_weekly_mean_per_day = 0.0;
  double mean_lowest_daily = 0.0;
};

struct TrainedModel {
  ModelConfig config;
  LstmParams params;
  FeatureStats train_stats;
  int sequence_length = 0;
  std::vector<std::string> feature_names;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  FeaturePipeline pipeline;
};

class Adam {
 public:
  explicit Adam(const LstmParams& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    first_ = shape;
    second_ = shape;
    for (auto* t : tensor_list(first_)) t->setZero();
    for (auto* t : tensor_list(second_)) t->setZero();
  }

  void step(LstmParams& params, LstmParams& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto p = tensor_list(params);
    auto g = tensor_list(grads);
    auto m = tensor_list(first_);
    auto v = tensor_list(second_);
    for (std::size_t k = 0; k < p.size(); ++k) {
      *m[k] = beta1_ * *m[k] + (1.0 - beta1_) * *g[k];
      *v[k] = beta2_ * *v[k] + (1.0 - beta2_) * g[k]->cwiseAbs2();
      p[k]->array() -= lr_ * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  LstmParams first_, second_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_global_norm(LstmParams& grads, double max_norm) {
  double sq = 0.0;
  for (auto* t : tensor_list(grads)) sq += t->squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm)
    for (auto* t : tensor_list(grads)) *t *= max_norm / norm;
  return norm;
}

/// Gathers step t of the selected instances into feature_dim x B matrices.
inline std::vector<Eigen::MatrixXd> gather_batch(const SequenceDataset& data, std::span<const std::size_t> idx) {
  const int steps = data.time_steps();
  std::vector<Eigen::MatrixXd> out(steps, Eigen::MatrixXd(data.feature_dim(), static_cast<Eigen::Index>(idx.size())));
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& s = data.instances[idx[b]].steps;
    for (int t = 0; t < steps; ++t) out[t].col(static_cast<Eigen::Index>(b)) = s.col(t);
  }
  return out;
}

inline Eigen::RowVectorXd gather_labels(const SequenceDataset& data, std::span<const std::size_t> idx) {
  Eigen::RowVectorXd y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t b = 0; b < idx.size(); ++b) y(static_cast<Eigen::Index>(b)) = data.instances[idx[b]].label ? 1.0 : 0.0;
  return y;
}

inline std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

/// Inference-mode probabilities for an already-normalized dataset.
inline Eigen::RowVectorXd infer_probs(const LstmParams& params, const SequenceDataset& normalized) {
  if (normalized.size() == 0) return {};
  const auto idx = all_indices(normalized.size());
  return forward_batch(params, gather_batch(normalized, idx)).probs;
}

inline void check_input(const TrainedModel& model, const SequenceDataset& data) {
  if (data.feature_dim() != model.config.feature_dim)
    throw InvalidArgument(fmt::format("dataset feature_dim {} != model feature_dim {}", data.feature_dim(),
                                      model.config.feature_dim));
  for (const auto& inst : data.instances)
    if (inst.steps.cols() != model.sequence_length)
      throw InvalidArgument(fmt::format("sequence length {} != model sequence length {}", inst.steps.cols(),
                                        model.sequence_length));
}

/// Minimizes mean BCE + l2_lambda * ||weights||^2 with Adam over shuffled
/// mini-batches, keeping the epoch with the best validation accuracy (ties
/// go to the lower validation loss).
inline TrainedModel train(const SequenceDataset& train_raw, const SequenceDataset& val_raw, ModelConfig config) {
  if (train_raw.size() == 0 || val_raw.size() == 0) throw InvalidArgument("train: empty training or validation split");
  config.feature_dim = train_raw.feature_dim();
  validate(config);
  const int steps = train_raw.time_steps();
  for (const auto* d : {&train_raw, &val_raw})
    for (const auto& inst : d->instances)
      if (inst.steps.cols() != steps || inst.steps.rows() != config.feature_dim)
        throw InvalidArgument("train: all sequences must share feature_dim and length");

  TrainedModel model;
  model.config = config;
  model.sequence_length = steps;
  model.feature_names = train_raw.feature_names;
  model.train_stats = fit_feature_stats(train_raw);
  const auto train_data = normalize(train_raw, model.train_stats);
  const auto val_data = normalize(val_raw, model.train_stats);

  std::mt19937_64 rng(config.seed);
  LstmParams params = LstmParams::initialize(config, rng);
  Adam adam(params, config.learning_rate);

  const auto val_idx = all_indices(val_data.size());
  const auto val_inputs = gather_batch(val_data, val_idx);
  const auto val_labels = gather_labels(val_data, val_idx);

  auto order = all_indices(train_data.size());
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  LstmParams best = params;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto inputs = gather_batch(train_data, idx);
      const auto labels = gather_labels(train_data, idx);
      DropoutMasks masks;
      const DropoutMasks* mp = nullptr;
      if (config.dropout_rate > 0.0) {
        masks = sample_masks(config.layers, config.hidden_units, steps, static_cast<int>(idx.size()),
                             config.dropout_rate, rng);
        mp = &masks;
      }
      const auto cache = forward_batch(params, inputs, mp);
      const double loss = bce_from_logits(cache.logits, labels);
      if (!std::isfinite(loss))
        throw TrainingDiverged(fmt::format(
            "non-finite loss at epoch {} batch {} (learning_rate={}); retry with a smaller learning rate "
            "or a tighter grad_clip_norm (currently {})",
            epoch, batches, config.learning_rate, config.grad_clip_norm));
      loss_sum += loss;
      for (Eigen::Index b = 0; b < labels.size(); ++b) correct += (cache.probs(b) >= 0.5) == (labels(b) > 0.5);
      auto grads = backward(params, cache, labels, mp, config.l2_lambda);
      clip_global_norm(grads, config.grad_clip_norm);
      adam.step(params, grads);
      ++batches;
    }
    const auto vc = forward_batch(params, val_inputs);
    const double vloss = bce_from_logits(vc.logits, val_labels);
    std::size_t vcorrect = 0;
    for (Eigen::Index b = 0; b < val_labels.size(); ++b) vcorrect += (vc.probs(b) >= 0.5) == (val_labels(b) > 0.5);
    const double vacc = static_cast<double>(vcorrect) / static_cast<double>(val_labels.size());
    model.curve.push_back({epoch, loss_sum / batches, static_cast<double>(correct) / order.size(), vloss, vacc});
    if (vacc > best_acc || (vacc == best_acc && vloss < best_loss)) {
      best_acc = vacc;
      best_loss = vloss;
      best = params;
      model.best_epoch = epoch;
    }
  }
  model.params = std::move(best);
  return model;
}

struct Prediction {
  double probability = 0.0;
  bool label = false;  // probability >= 0.5 (a tie is positive)
};

inline std::vector<Prediction> predict(const TrainedModel& model, const SequenceDataset& raw) {
  check_input(model, raw);
  const auto probs = infer_probs(model.params, normalize(raw, model.train_stats));
  std::vector<Prediction> out;
  for (Eigen::Index b = 0; b < probs.size(); ++b) out.push_back({probs(b), probs(b) >= 0.5});
  return out;
}

inline Prediction predict(const TrainedModel& model, const SequenceInstance& instance) {
  SequenceDataset one{model.feature_names, {instance}};
  return predict(model, one).front();
}

template <class Predictions>
double accuracy(const Predictions& preds, const SequenceDataset& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += preds[i].label == data.instances[i].label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace stepwise::model
