#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "introspect/nn.hpp"

namespace introspect {

struct TrainConfig {
  int epochs = 200;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // (first epoch, learning rate); epochs are 1-based and starts strictly increase from 1.
  std::vector<std::pair<int, double>> lr_schedule = {{1, 0.1}, {61, 0.02}, {121, 0.004}, {161, 0.0008}};
  int batch_size = 128;
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ParameterError("epochs must be non-negative");
    if (batch_size <= 0) throw ParameterError("batch_size must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ParameterError("dropout_rate must lie in [0,1)");
    if (lr_schedule.empty()) throw ParameterError("lr_schedule must not be empty");
    if (lr_schedule.front().first != 1) throw ParameterError("lr_schedule must start at epoch 1");
    for (std::size_t i = 1; i < lr_schedule.size(); ++i)
      if (lr_schedule[i].first <= lr_schedule[i - 1].first)
        throw ParameterError("lr_schedule epoch starts must strictly increase");
  }

  double learning_rate(int epoch) const {
    double lr = lr_schedule.front().second;
    for (const auto& [start, rate] : lr_schedule)
      if (epoch >= start) lr = rate;
    return lr;
  }

  /// Maps the 200-epoch milestones (1/61/121/161) proportionally onto `n` epochs,
  /// keeping the x0.2 decay at each milestone.
  static std::vector<std::pair<int, double>> scaled_schedule(int n, double base = 0.1) {
    std::vector<std::pair<int, double>> s = {{1, base}};
    const int m1 = 1 + (60 * n) / 200, m2 = 1 + (120 * n) / 200, m3 = 1 + (160 * n) / 200;
    if (m1 > 1) s.emplace_back(m1, base * 0.2);
    if (m2 > s.back().first) s.emplace_back(m2, base * 0.04);
    if (m3 > s.back().first) s.emplace_back(m3, base * 0.008);
    return s;
  }
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double learning_rate = 0.0;
};

/// SGD with momentum; weight decay applies to weights only, never biases:
///   v <- mu v + (g + lambda w);  w <- w - lr v
class SgdMomentum {
 public:
  SgdMomentum(const Network& net, double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& l : net.layers()) {
      vel_w_.push_back(Matrix::Zero(l.fan_in(), l.fan_out()));
      vel_b_.push_back(Vector::Zero(l.fan_out()));
    }
  }

  void step(Network& net, const GradientSet& g, double lr) {
    auto& layers = net.mutable_layers();
    if (g.weights.size() != layers.size() || vel_w_.size() != layers.size())
      throw ShapeError("gradient set does not match network depth");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      vel_w_[l] = momentum_ * vel_w_[l] + g.weights[l] + weight_decay_ * layers[l].weights;
      vel_b_[l] = momentum_ * vel_b_[l] + g.bias[l];
      layers[l].weights -= lr * vel_w_[l];
      layers[l].bias -= lr * vel_b_[l];
    }
  }

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Matrix> vel_w_;
  std::vector<Vector> vel_b_;
};

/// All-zero gradients shaped like `net`.
inline GradientSet zero_gradients(const Network& net) {
  GradientSet g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Matrix::Zero(l.fan_in(), l.fan_out()));
    g.bias.push_back(Vector::Zero(l.fan_out()));
  }
  return g;
}

struct TrainHooks {
  int checkpoint_every = 0;  // 0 disables
  std::function<void(int epoch, const Network&)> on_checkpoint;
};

/// Mini-batch training with SgdMomentum. Deterministic given cfg.seed: shuffle order
/// and dropout masks come from derived streams.
inline std::vector<EpochStats> train(Network& net, const Matrix& samples, std::span<const int> labels,
                                     const LossSpec& loss, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  net.validate();
  const Eigen::Index n = samples.cols();
  if (n == 0) throw ParameterError("training set is empty");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw ShapeError("label count does not match sample count");
  if (samples.rows() != net.input_dim()) throw ShapeError("sample length does not match network input");
  const Eigen::Index classes = net.num_classes();
  for (int y : labels)
    if (y < 0 || y >= classes) throw ParameterError("label " + std::to_string(y) + " out of range");

  SgdMomentum opt(net, cfg.momentum, cfg.weight_decay);

  SplitMix64 order_rng(derive_seed(cfg.seed, "shuffle"));
  SplitMix64 dropout_rng(derive_seed(cfg.seed, "dropout"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  const double target_scale = loss.target_scale();

  std::vector<EpochStats> curve;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate(epoch);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    shuffle(order, order_rng);

    double loss_sum = 0.0;
    Eigen::Index correct = 0;
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Matrix batch(samples.rows(), b);
      for (Eigen::Index i = 0; i < b; ++i) batch.col(i) = samples.col(order[start + i]);

      const ForwardTrace trace = forward(net, batch, Dropout{cfg.dropout_rate, &dropout_rng});
      Matrix dlogits(classes, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        const int y = labels[static_cast<std::size_t>(order[start + i])];
        const Vector z = trace.pre.back().col(i);
        if (!z.allFinite()) throw DivergenceError(epoch, "non-finite logits");
        LossGrad lg = loss_and_logit_grad(loss, z, one_hot(classes, y, target_scale));
        if (!std::isfinite(lg.loss)) throw DivergenceError(epoch, "non-finite loss");
        loss_sum += lg.loss;
        if (argmax(z) == y) ++correct;
        dlogits.col(i) = lg.dlogits / static_cast<double>(b);
      }
      opt.step(net, backward(net, trace, dlogits), lr);
    }
    const double mean_loss = loss_sum / static_cast<double>(n);
    if (!std::isfinite(mean_loss)) throw DivergenceError(epoch, "non-finite epoch loss");
    curve.push_back({epoch, mean_loss, static_cast<double>(correct) / static_cast<double>(n), lr});
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && epoch % hooks.checkpoint_every == 0)
      hooks.on_checkpoint(epoch, net);
  }
  return curve;
}

/// Logits for every column of `samples`, evaluated in fixed-size chunks.
inline Matrix predict_logits(const Network& net, const Matrix& samples, Eigen::Index chunk = 256) {
  Matrix out(net.num_classes(), samples.cols());
  for (Eigen::Index s = 0; s < samples.cols(); s += chunk) {
    const Eigen::Index b = std::min(chunk, samples.cols() - s);
    out.middleCols(s, b) = forward(net, Matrix(samples.middleCols(s, b))).logits();
  }
  return out;
}

/// Fraction of columns whose argmax logit equals the label.
inline double accuracy(const Network& net, const Matrix& samples, std::span<const int> labels) {
  if (samples.cols() == 0) return 0.0;
  const Matrix z = predict_logits(net, samples);
  Eigen::Index hit = 0;
  for (Eigen::Index i = 0; i < z.cols(); ++i)
    if (argmax(z.col(i)) == labels[static_cast<std::size_t>(i)]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(z.cols());
}

/// K stochastic forward passes with independent inverted-dropout masks on hidden
/// activations; returns the softmax of each pass.
inline std::vector<Vector> forward_mc_dropout(const Network& net, const Vector& x, int passes, double rate,
                                              std::uint64_t seed) {
  if (passes < 1) throw ParameterError("MC dropout needs at least one pass");
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout rate must lie in [0,1)");
  SplitMix64 rng(seed);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(passes));
  for (int k = 0; k < passes; ++k) out.push_back(softmax(forward(net, x, Dropout{rate, &rng}).logit_vector()));
  return out;
}

}  // namespace introspect
