#pragma once

// Dense feed-forward networks with manual reverse-mode differentiation. One type
// serves both as the sensing network and as the second-stage head.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "introspect/error.hpp"
#include "introspect/rng.hpp"

namespace introspect {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { Identity, Sigmoid, ReLU };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::ReLU: return "relu";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::ReLU;
  throw ParameterError("unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weights;  // fan_in x fan_out; column j is the filter of output unit j
  Vector bias;     // fan_out
  Activation activation = Activation::Identity;

  Eigen::Index fan_in() const { return weights.rows(); }
  Eigen::Index fan_out() const { return weights.cols(); }
};

class Network {
 public:
  Network() = default;

  explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  /// Builds a network with layer widths `dims` (input first, classes last).
  /// Weights and biases are drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static Network make(std::span<const int> dims, Activation hidden, std::uint64_t seed) {
    if (dims.size() < 2) throw ParameterError("network needs at least input and output widths");
    for (int d : dims)
      if (d <= 0) throw ParameterError("layer widths must be positive");
    SplitMix64 rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      DenseLayer layer;
      const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      layer.weights.resize(dims[l], dims[l + 1]);
      // Row-major fill order keeps initialization independent of storage order.
      for (int i = 0; i < dims[l]; ++i)
        for (int j = 0; j < dims[l + 1]; ++j) layer.weights(i, j) = rng.uniform(-bound, bound);
      layer.bias.resize(dims[l + 1]);
      for (int j = 0; j < dims[l + 1]; ++j) layer.bias(j) = rng.uniform(-bound, bound);
      layer.activation = (l + 2 == dims.size()) ? Activation::Identity : hidden;
      layers.push_back(std::move(layer));
    }
    return Network(std::move(layers));
  }

  static Network make(std::initializer_list<int> dims, Activation hidden, std::uint64_t seed) {
    std::vector<int> v(dims);
    return make(std::span<const int>(v), hidden, seed);
  }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  Eigen::Index input_dim() const { return layers_.front().fan_in(); }
  Eigen::Index num_classes() const { return layers_.back().fan_out(); }
  Eigen::Index penultimate_dim() const { return layers_.back().fan_in(); }

  const DenseLayer& final_layer() const { return layers_.back(); }

  std::vector<int> dims() const {
    std::vector<int> d;
    if (layers_.empty()) return d;
    d.push_back(static_cast<int>(layers_.front().fan_in()));
    for (const auto& l : layers_) d.push_back(static_cast<int>(l.fan_out()));
    return d;
  }

  void validate() const {
    if (layers_.empty()) throw ShapeError("network has no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      if (layer.fan_in() <= 0 || layer.fan_out() <= 0)
        throw ShapeError("layer " + std::to_string(l) + " has an empty dimension");
      if (layer.bias.size() != layer.fan_out())
        throw ShapeError("layer " + std::to_string(l) + " bias length does not match fan_out");
      if (l > 0 && layer.fan_in() != layers_[l - 1].fan_out())
        throw ShapeError("layer " + std::to_string(l) + " fan_in does not match previous fan_out");
      if (!layer.weights.allFinite() || !layer.bias.allFinite())
        throw NumericError("layer " + std::to_string(l) + " has non-finite parameters");
    }
    if (layers_.back().activation != Activation::Identity)
      throw ShapeError("final layer must have identity activation (raw logits)");
  }

  bool operator==(const Network& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& a = layers_[l];
      const auto& b = other.layers_[l];
      if (a.activation != b.activation || a.weights.rows() != b.weights.rows() ||
          a.weights.cols() != b.weights.cols() || a.weights != b.weights || a.bias != b.bias)
        return false;
    }
    return true;
  }

 private:
  std::vector<DenseLayer> layers_;
};

/// Activations recorded by a forward pass over a batch (one column per sample).
struct ForwardTrace {
  std::vector<Matrix> inputs;  // inputs[l] feeds layer l; inputs[0] is the batch itself
  std::vector<Matrix> pre;     // pre[l] = W_l^T inputs[l] + b_l
  std::vector<Matrix> masks;   // dropout multipliers on hidden outputs; empty when disabled

  const Matrix& penultimate() const { return inputs.back(); }
  const Matrix& logits() const { return pre.back(); }
  Vector penultimate_features(Eigen::Index sample = 0) const { return inputs.back().col(sample); }
  Vector logit_vector(Eigen::Index sample = 0) const { return pre.back().col(sample); }
  Eigen::Index batch_size() const { return inputs.empty() ? 0 : inputs.front().cols(); }
};

/// Inverted dropout on hidden activations: kept units are scaled by 1/(1-rate).
struct Dropout {
  double rate = 0.0;
  SplitMix64* rng = nullptr;
};

namespace detail {

inline void apply_activation(Matrix& m, Activation a) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Sigmoid: m = (1.0 + (-m.array()).exp()).inverse().matrix(); break;
    case Activation::ReLU: m = m.cwiseMax(0.0); break;
  }
}

// Multiplies `upstream` in place by the activation derivative at `pre`.
inline void apply_activation_grad(Matrix& upstream, const Matrix& pre, Activation a) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Sigmoid: {
      const Eigen::ArrayXXd s = (1.0 + (-pre.array()).exp()).inverse();
      upstream.array() *= s * (1.0 - s);
      break;
    }
    case Activation::ReLU: upstream.array() *= (pre.array() > 0.0).cast<double>(); break;
  }
}

}  // namespace detail

inline ForwardTrace forward(const Network& net, const Matrix& batch, const Dropout& dropout = {}) {
  if (net.empty()) throw ShapeError("forward on an empty network");
  if (batch.rows() != net.input_dim())
    throw ShapeError("input length " + std::to_string(batch.rows()) + " does not match network input " +
                     std::to_string(net.input_dim()));
  if (!batch.allFinite()) throw NumericError("non-finite input to forward");
  if (dropout.rate < 0.0 || dropout.rate >= 1.0) throw ParameterError("dropout rate must lie in [0,1)");
  const bool drop = dropout.rate > 0.0 && dropout.rng != nullptr;

  ForwardTrace trace;
  const auto& layers = net.layers();
  trace.inputs.reserve(layers.size());
  trace.pre.reserve(layers.size());
  trace.inputs.push_back(batch);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    Matrix z = layer.weights.transpose() * trace.inputs.back();
    z.colwise() += layer.bias;
    trace.pre.push_back(z);
    if (l + 1 == layers.size()) break;
    detail::apply_activation(z, layer.activation);
    if (drop) {
      const double keep_scale = 1.0 / (1.0 - dropout.rate);
      Matrix mask(z.rows(), z.cols());
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
          mask(r, c) = dropout.rng->uniform() >= dropout.rate ? keep_scale : 0.0;
      z.array() *= mask.array();
      trace.masks.push_back(std::move(mask));
    }
    trace.inputs.push_back(std::move(z));
  }
  return trace;
}

inline ForwardTrace forward(const Network& net, const Vector& x, const Dropout& dropout = {}) {
  return forward(net, Matrix(x), dropout);
}

inline Vector logits(const Network& net, const Vector& x) { return forward(net, x).logit_vector(); }

inline Vector softmax(const Vector& z) {
  const double m = z.maxCoeff();
  Vector e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

inline double logsumexp(const Vector& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

enum class LossKind { CrossEntropy, MseM };

/// Loss used both for training and for introspective extraction.
/// CrossEntropy: J = -<t, z> + logsumexp(z).  MseM: J = sum_j (z_j - M t_j)^2.
struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  double m_scale = 1.0;

  static LossSpec cross_entropy() { return {LossKind::CrossEntropy, 1.0}; }
  static LossSpec mse_m(double m) {
    if (!(m > 0.0)) throw ParameterError("MSE-M scale M must be positive");
    return {LossKind::MseM, m};
  }

  // Scale applied to a one-hot (or all-ones) target before it enters the loss.
  double target_scale() const { return kind == LossKind::MseM ? m_scale : 1.0; }
};

inline std::string to_string(LossKind k) { return k == LossKind::MseM ? "mse-m" : "ce"; }

inline LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ce" || s == "cross-entropy") return LossKind::CrossEntropy;
  if (s == "mse-m" || s == "msem") return LossKind::MseM;
  throw ParameterError("unknown loss kind '" + s + "'");
}

struct LossGrad {
  double loss = 0.0;
  Vector dlogits;
};

/// Loss value and gradient with respect to the logits. `target` is used as given;
/// callers scale by M for MseM targets (see LossSpec::target_scale).
inline LossGrad loss_and_logit_grad(const LossSpec& spec, const Vector& z, const Vector& target) {
  if (target.size() != z.size()) throw ShapeError("target length does not match logits");
  if (!z.allFinite()) throw NumericError("non-finite logits");
  LossGrad out;
  if (spec.kind == LossKind::CrossEntropy) {
    out.loss = -target.dot(z) + logsumexp(z);
    out.dlogits = softmax(z) - target;
  } else {
    if (!(spec.m_scale > 0.0)) throw ParameterError("MSE-M scale M must be positive");
    const Vector r = z - target;
    out.loss = r.squaredNorm();
    out.dlogits = 2.0 * r;
  }
  return out;
}

inline Vector one_hot(Eigen::Index n, Eigen::Index k, double value = 1.0) {
  Vector v = Vector::Zero(n);
  v(k) = value;
  return v;
}

struct GradientSet {
  std::vector<Matrix> weights;  // same shapes as the layer weights
  std::vector<Vector> bias;
  Matrix input;  // dJ/dx, one column per sample
};

/// Reverse pass. `dlogits` is dJ/dlogits (N x B). An optional `dpenultimate` (d x B)
/// injects additional gradient at the final layer's input. Gradients are summed over
/// the batch. A positive `stop_layer` ends the pass after that layer's parameter
/// gradients: shallower entries and `input` stay empty.
inline GradientSet backward(const Network& net, const ForwardTrace& trace, const Matrix& dlogits,
                            const Matrix* dpenultimate = nullptr, std::size_t stop_layer = 0) {
  const auto& layers = net.layers();
  const std::size_t L = layers.size();
  if (trace.inputs.size() != L || trace.pre.size() != L)
    throw ShapeError("trace depth does not match network");
  const Eigen::Index B = trace.batch_size();
  for (std::size_t l = 0; l < L; ++l)
    if (trace.inputs[l].rows() != layers[l].fan_in() || trace.pre[l].rows() != layers[l].fan_out() ||
        trace.inputs[l].cols() != B || trace.pre[l].cols() != B)
      throw ShapeError("stale trace: layer " + std::to_string(l) + " dimensions differ from network");
  if (dlogits.rows() != net.num_classes() || dlogits.cols() != B)
    throw ShapeError("dJ/dlogits shape does not match trace");
  if (dpenultimate && (dpenultimate->rows() != net.penultimate_dim() || dpenultimate->cols() != B))
    throw ShapeError("dJ/dpenultimate shape does not match trace");

  GradientSet g;
  g.weights.resize(L);
  g.bias.resize(L);
  Matrix upstream = dlogits;  // dJ/d(output of layer l)
  for (std::size_t k = L; k-- > 0;) {
    const auto& layer = layers[k];
    detail::apply_activation_grad(upstream, trace.pre[k], layer.activation);
    g.weights[k].noalias() = trace.inputs[k] * upstream.transpose();
    g.bias[k] = upstream.rowwise().sum();
    if (k == stop_layer && k > 0) return g;
    Matrix down = layer.weights * upstream;  // dJ/d inputs[k]
    if (k + 1 == L && dpenultimate) down += *dpenultimate;
    if (k > 0 && !trace.masks.empty()) down.array() *= trace.masks[k - 1].array();
    upstream = std::move(down);
  }
  g.input = std::move(upstream);
  return g;
}

inline GradientSet backward(const Network& net, const ForwardTrace& trace, const Vector& dlogits) {
  return backward(net, trace, Matrix(dlogits));
}

inline int argmax(const Vector& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace introspect
