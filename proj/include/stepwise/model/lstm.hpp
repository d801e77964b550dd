#pragma once

// Embedding -> stacked LSTM -> last-step logistic readout, with
// backpropagation through time written out by hand.
//
// Shapes: a batch step is a feature_dim x B matrix (one column per
// instance). Gate blocks inside the 4H-row LSTM matrices are ordered
// [input, forget, candidate, output].

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/core.h>

#include "stepwise/error.hpp"

namespace stepwise::model {

struct ModelConfig {
  int feature_dim = 25;
  int embed_dim = 32;
  int hidden_units = 25;
  int layers = 2;
  double dropout_rate = 0.5;
  int epochs = 150;
  double learning_rate = 1e-3;
  double l2_lambda = 1e-4;
  double grad_clip_norm = 5.0;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

inline void validate(const ModelConfig& c) {
  if (c.feature_dim < 1 || c.embed_dim < 1 || c.hidden_units < 1 || c.layers < 1 || c.epochs < 1 ||
      c.batch_size < 1)
    throw InvalidArgument("model config: all dimensions must be >= 1");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw InvalidArgument("model config: dropout_rate in [0,1)");
  if (!(c.learning_rate > 0.0)) throw InvalidArgument("model config: learning_rate must be positive");
  if (c.l2_lambda < 0.0 || c.grad_clip_norm < 0.0) throw InvalidArgument("model config: negative regularization");
}

struct LstmLayer {
  Eigen::MatrixXd input_weights;      // 4H x in
  Eigen::MatrixXd recurrent_weights;  // 4H x H
  Eigen::MatrixXd bias;               // 4H x 1
};

struct LstmParams {
  Eigen::MatrixXd embed_weights;  // E x F
  Eigen::MatrixXd embed_bias;     // E x 1
  std::vector<LstmLayer> layers;
  Eigen::MatrixXd readout_weights;  // 1 x H
  Eigen::MatrixXd readout_bias;     // 1 x 1

  int feature_dim() const { return static_cast<int>(embed_weights.cols()); }
  int embed_dim() const { return static_cast<int>(embed_weights.rows()); }
  int hidden_units() const { return static_cast<int>(readout_weights.cols()); }
  int layer_count() const { return static_cast<int>(layers.size()); }

  static LstmParams zeros(const ModelConfig& c) {
    LstmParams p;
    const int h4 = 4 * c.hidden_units;
    p.embed_weights = Eigen::MatrixXd::Zero(c.embed_dim, c.feature_dim);
    p.embed_bias = Eigen::MatrixXd::Zero(c.embed_dim, 1);
    for (int l = 0; l < c.layers; ++l) {
      const int in = l == 0 ? c.embed_dim : c.hidden_units;
      p.layers.push_back({Eigen::MatrixXd::Zero(h4, in), Eigen::MatrixXd::Zero(h4, c.hidden_units),
                          Eigen::MatrixXd::Zero(h4, 1)});
    }
    p.readout_weights = Eigen::MatrixXd::Zero(1, c.hidden_units);
    p.readout_bias = Eigen::MatrixXd::Zero(1, 1);
    return p;
  }

  /// Fan-scaled uniform weights, zero biases except forget gates at +1.
  static LstmParams initialize(const ModelConfig& c, std::mt19937_64& rng) {
    auto p = zeros(c);
    const auto fill = [&](Eigen::Ref<Eigen::MatrixXd> m, int fan_in, int fan_out) {
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-a, a);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
    };
    const int h = c.hidden_units;
    fill(p.embed_weights, c.feature_dim, c.embed_dim);
    for (auto& layer : p.layers) {
      const int in = static_cast<int>(layer.input_weights.cols());
      for (int g = 0; g < 4; ++g) {
        fill(layer.input_weights.middleRows(g * h, h), in, h);
        fill(layer.recurrent_weights.middleRows(g * h, h), h, h);
      }
      layer.bias.middleRows(h, h).setOnes();
    }
    fill(p.readout_weights, h, 1);
    return p;
  }
};

/// Calls f(name, tensor, regularized) for every trainable tensor in a fixed
/// order. Works on const and mutable parameter sets.
template <class Params, class F>
void visit_tensors(Params& p, F&& f) {
  f(std::string("embed.weights"), p.embed_weights, true);
  f(std::string("embed.bias"), p.embed_bias, false);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    f(fmt::format("lstm{}.input_weights", l), p.layers[l].input_weights, true);
    f(fmt::format("lstm{}.recurrent_weights", l), p.layers[l].recurrent_weights, true);
    f(fmt::format("lstm{}.bias", l), p.layers[l].bias, false);
  }
  f(std::string("readout.weights"), p.readout_weights, true);
  f(std::string("readout.bias"), p.readout_bias, false);
}

inline std::vector<Eigen::MatrixXd*> tensor_list(LstmParams& p) {
  std::vector<Eigen::MatrixXd*> out;
  visit_tensors(p, [&](const std::string&, Eigen::MatrixXd& t, bool) { out.push_back(&t); });
  return out;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Inverted-dropout keep masks, indexed [layer][step]; entries are 0 or
/// 1/(1 - rate).
struct DropoutMasks {
  std::vector<std::vector<Eigen::MatrixXd>> masks;
};

inline DropoutMasks sample_masks(int layers, int hidden, int steps, int batch, double rate, std::mt19937_64& rng) {
  DropoutMasks d;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  d.masks.resize(layers);
  for (int l = 0; l < layers; ++l) {
    d.masks[l].resize(steps);
    for (int t = 0; t < steps; ++t) {
      Eigen::MatrixXd m(hidden, batch);
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng) < rate ? 0.0 : keep_scale;
      d.masks[l][t] = std::move(m);
    }
  }
  return d;
}

struct LayerStep {
  Eigen::MatrixXd in;                  // layer input
  Eigen::MatrixXd i, f, g, o;          // gate activations, H x B
  Eigen::MatrixXd c, tanh_c, h;        // cell, tanh(cell), hidden
  Eigen::MatrixXd out;                 // h after dropout (== h at inference)
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> x;                 // [t] F x B
  std::vector<Eigen::MatrixXd> embedded;          // [t] E x B
  std::vector<std::vector<LayerStep>> layers;     // [l][t]
  Eigen::RowVectorXd logits;                      // 1 x B
  Eigen::RowVectorXd probs;                       // 1 x B

  int steps() const { return static_cast<int>(x.size()); }
  int batch() const { return static_cast<int>(logits.size()); }
};

/// Runs the network over T steps. With `masks` null this is inference mode
/// (deterministic, no dropout).
inline ForwardCache forward_batch(const LstmParams& p, std::span<const Eigen::MatrixXd> inputs,
                                  const DropoutMasks* masks = nullptr) {
  if (inputs.empty()) throw InvalidArgument("forward: empty sequence");
  const Eigen::Index batch = inputs.front().cols();
  const int h = p.hidden_units();
  const int steps = static_cast<int>(inputs.size());
  ForwardCache cache;
  cache.x.assign(inputs.begin(), inputs.end());
  cache.layers.resize(p.layers.size());
  for (int t = 0; t < steps; ++t) {
    const auto& x = inputs[t];
    if (x.rows() != p.feature_dim() || x.cols() != batch)
      throw InvalidArgument(fmt::format("forward: step {} input is {}x{}, expected {}x{}", t, x.rows(), x.cols(),
                                        p.feature_dim(), batch));
    Eigen::MatrixXd e = ((p.embed_weights * x).colwise() + p.embed_bias.col(0)).array().tanh().matrix();
    const Eigen::MatrixXd* below = &e;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const auto& layer = p.layers[l];
      auto& hist = cache.layers[l];
      LayerStep s;
      s.in = *below;
      Eigen::MatrixXd pre = layer.input_weights * s.in;
      if (t > 0) pre.noalias() += layer.recurrent_weights * hist[t - 1].h;
      pre.colwise() += layer.bias.col(0);
      const auto gate = [&](int k) { return pre.middleRows(k * h, h).array(); };
      s.i = (1.0 / (1.0 + (-gate(0)).exp())).matrix();
      s.f = (1.0 / (1.0 + (-gate(1)).exp())).matrix();
      s.g = gate(2).tanh().matrix();
      s.o = (1.0 / (1.0 + (-gate(3)).exp())).matrix();
      s.c = s.i.cwiseProduct(s.g);
      if (t > 0) s.c += s.f.cwiseProduct(hist[t - 1].c);
      s.tanh_c = s.c.array().tanh().matrix();
      s.h = s.o.cwiseProduct(s.tanh_c);
      s.out = masks ? s.h.cwiseProduct(masks->masks.at(l).at(t)) : s.h;
      hist.push_back(std::move(s));
      below = &hist.back().out;
    }
    cache.embedded.push_back(std::move(e));
  }
  const auto& top = cache.layers.back().back().out;
  Eigen::MatrixXd z = p.readout_weights * top;
  z.array() += p.readout_bias(0, 0);
  cache.logits = z.row(0);
  cache.probs = cache.logits.unaryExpr([](double z) { return sigmoid(z); });
  return cache;
}

/// Mean binary cross-entropy from logits (numerically stable form).
inline double bce_from_logits(const Eigen::RowVectorXd& logits, const Eigen::RowVectorXd& labels) {
  double s = 0.0;
  for (Eigen::Index b = 0; b < logits.size(); ++b) {
    const double z = logits(b);
    s += std::max(z, 0.0) - labels(b) * z + std::log1p(std::exp(-std::abs(z)));
  }
  return s / static_cast<double>(logits.size());
}

/// lambda * sum of squared entries of all weight matrices (biases excluded).
inline double l2_penalty(const LstmParams& p, double lambda) {
  double s = 0.0;
  visit_tensors(p, [&](const std::string&, const Eigen::MatrixXd& t, bool reg) {
    if (reg) s += t.squaredNorm();
  });
  return lambda * s;
}

inline double total_loss(const LstmParams& p, const ForwardCache& cache, const Eigen::RowVectorXd& labels,
                         double lambda) {
  return bce_from_logits(cache.logits, labels) + l2_penalty(p, lambda);
}

/// Gradient of total_loss with respect to every parameter. `masks` must be
/// the ones used for the forward pass (or null for inference mode).
inline LstmParams backward(const LstmParams& p, const ForwardCache& cache, const Eigen::RowVectorXd& labels,
                           const DropoutMasks* masks, double lambda) {
  const int steps = cache.steps();
  const int h = p.hidden_units();
  const Eigen::Index batch = cache.batch();
  LstmParams grad;
  grad.embed_weights = Eigen::MatrixXd::Zero(p.embed_weights.rows(), p.embed_weights.cols());
  grad.embed_bias = Eigen::MatrixXd::Zero(p.embed_bias.rows(), 1);
  for (const auto& layer : p.layers)
    grad.layers.push_back({Eigen::MatrixXd::Zero(layer.input_weights.rows(), layer.input_weights.cols()),
                           Eigen::MatrixXd::Zero(layer.recurrent_weights.rows(), layer.recurrent_weights.cols()),
                           Eigen::MatrixXd::Zero(layer.bias.rows(), 1)});

  const Eigen::RowVectorXd dz = (cache.probs - labels) / static_cast<double>(batch);
  const auto& top_out = cache.layers.back()[steps - 1].out;
  grad.readout_weights = dz * top_out.transpose();
  grad.readout_bias = Eigen::MatrixXd::Constant(1, 1, dz.sum());

  // Gradients flowing into each layer's (post-dropout) output, per step.
  std::vector<Eigen::MatrixXd> d_out(steps, Eigen::MatrixXd::Zero(h, batch));
  d_out[steps - 1] = p.readout_weights.transpose() * dz;

  for (int l = p.layer_count() - 1; l >= 0; --l) {
    const auto& layer = p.layers[l];
    const auto& hist = cache.layers[l];
    auto& g = grad.layers[l];
    std::vector<Eigen::MatrixXd> d_in(steps);
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(h, batch);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(h, batch);
    Eigen::MatrixXd d_pre(4 * h, batch);
    for (int t = steps - 1; t >= 0; --t) {
      const auto& s = hist[t];
      Eigen::MatrixXd dh = masks ? d_out[t].cwiseProduct(masks->masks.at(l).at(t)) : d_out[t];
      dh += dh_next;
      const Eigen::ArrayXXd dc =
          dh.array() * s.o.array() * (1.0 - s.tanh_c.array().square()) + dc_next.array();
      const Eigen::ArrayXXd d_o = dh.array() * s.tanh_c.array();
      d_pre.middleRows(0, h) = (dc * s.g.array() * s.i.array() * (1.0 - s.i.array())).matrix();
      if (t > 0)
        d_pre.middleRows(h, h) = (dc * hist[t - 1].c.array() * s.f.array() * (1.0 - s.f.array())).matrix();
      else
        d_pre.middleRows(h, h).setZero();
      d_pre.middleRows(2 * h, h) = (dc * s.i.array() * (1.0 - s.g.array().square())).matrix();
      d_pre.middleRows(3 * h, h) = (d_o * s.o.array() * (1.0 - s.o.array())).matrix();
      dc_next = (dc * s.f.array()).matrix();

      g.input_weights.noalias() += d_pre * s.in.transpose();
      if (t > 0) g.recurrent_weights.noalias() += d_pre * hist[t - 1].h.transpose();
      g.bias += d_pre.rowwise().sum();
      d_in[t].noalias() = layer.input_weights.transpose() * d_pre;
      dh_next.noalias() = layer.recurrent_weights.transpose() * d_pre;
    }
    if (l > 0) d_out = std::move(d_in);
    else
      for (int t = 0; t < steps; ++t) {
        const Eigen::MatrixXd de = (d_in[t].array() * (1.0 - cache.embedded[t].array().square())).matrix();
        grad.embed_weights.noalias() += de * cache.x[t].transpose();
        grad.embed_bias += de.rowwise().sum();
      }
  }

  if (lambda > 0.0) {
    auto gt = tensor_list(grad);
    std::size_t k = 0;
    visit_tensors(p, [&](const std::string&, const Eigen::MatrixXd& t, bool reg) {
      if (reg) *gt[k] += 2.0 * lambda * t;
      ++k;
    });
  }
  return grad;
}

/// Hidden states h_t of every layer in inference mode, [layer][t] H x B.
inline std::vector<std::vector<Eigen::MatrixXd>> hidden_states(const LstmParams& p,
                                                               std::span<const Eigen::MatrixXd> inputs) {
  const auto cache = forward_batch(p, inputs, nullptr);
  std::vector<std::vector<Eigen::MatrixXd>> out(cache.layers.size());
  for (std::size_t l = 0; l < cache.layers.size(); ++l)
    for (const auto& s : cache.layers[l]) out[l].push_back(s.h);
  return out;
}

/// Single-step LSTM cell: returns (h, c) for one layer's parameters.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> lstm_cell(const LstmLayer& layer, const Eigen::VectorXd& x,
                                                             const Eigen::VectorXd& h_prev,
                                                             const Eigen::VectorXd& c_prev) {
  const Eigen::Index h = h_prev.size();
  if (layer.input_weights.cols() != x.size() || layer.recurrent_weights.cols() != h || c_prev.size() != h ||
      layer.input_weights.rows() != 4 * h)
    throw InvalidArgument("lstm_cell: shape mismatch");
  const Eigen::VectorXd pre = layer.input_weights * x + layer.recurrent_weights * h_prev + layer.bias.col(0);
  const auto sig = [](const Eigen::VectorXd& v) -> Eigen::VectorXd { return (1.0 / (1.0 + (-v.array()).exp())).matrix(); };
  const Eigen::VectorXd i = sig(pre.segment(0, h));
  const Eigen::VectorXd f = sig(pre.segment(h, h));
  const Eigen::VectorXd g = pre.segment(2 * h, h).array().tanh().matrix();
  const Eigen::VectorXd o = sig(pre.segment(3 * h, h));
  Eigen::VectorXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
  Eigen::VectorXd hn = o.cwiseProduct(c.array().tanh().matrix());
  return {std::move(hn), std::move(c)};
}

/// tanh(W x + b) for one feature vector.
inline Eigen::VectorXd embed(const LstmParams& p, const Eigen::VectorXd& x) {
  if (x.size() != p.feature_dim())
    throw InvalidArgument(fmt::format("embed: input length {} != feature_dim {}", x.size(), p.feature_dim()));
  return (p.embed_weights * x + p.embed_bias.col(0)).array().tanh().matrix();
}

}  // namespace stepwise::model
