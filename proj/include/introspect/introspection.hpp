#pragma once

// Introspective gradient features: the loss gradient with respect to the final
// layer's weights when the network is asked to explain every class at once.
//
// For a final layer z = W^T a + b, dJ/dW = a (dJ/dz)^T, so column j (filter j) only
// sees residual j. With target 1_N the residual of column I equals the residual of
// the one-hot target e_I for both supported losses:
//   CrossEntropy: softmax(z)_I - 1      MseM: 2 (z_I - M)
// which is why the single pass reproduces the N-pass oracle column by column.

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <span>
#include <thread>
#include <vector>

#include "introspect/nn.hpp"

namespace introspect {

/// Scaled d x N gradient matrix. Column j holds the gradient for filter j.
struct IntrospectiveFeature {
  Matrix matrix;
  double scale_factor = 1.0;

  /// Column-major flattening: entries [j*d, (j+1)*d) are column j.
  Vector vectorized() const { return Eigen::Map<const Vector>(matrix.data(), matrix.size()); }
};

/// Divides by the largest absolute entry. All-zero input passes through with scale 1.
inline IntrospectiveFeature scale_feature(const Matrix& raw) {
  if (!raw.allFinite()) throw NumericError("non-finite entry in introspective feature");
  IntrospectiveFeature f;
  const double m = raw.size() == 0 ? 0.0 : raw.cwiseAbs().maxCoeff();
  if (m > 0.0) {
    f.matrix = raw / m;
    f.scale_factor = m;
  } else {
    f.matrix = raw;
    f.scale_factor = 1.0;
  }
  return f;
}

/// Full final-layer gradients, one per introspective class I, each from its own
/// reverse pass with target e_I (scaled by M for MseM).
inline std::vector<Matrix> exact_gradient_matrices(const Network& net, const Vector& x, const LossSpec& spec) {
  const ForwardTrace trace = forward(net, x);
  const Vector z = trace.logit_vector();
  const Eigen::Index n = net.num_classes();
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const LossGrad lg = loss_and_logit_grad(spec, z, one_hot(n, i, spec.target_scale()));
    GradientSet g = backward(net, trace, lg.dlogits);
    out.push_back(std::move(g.weights.back()));
  }
  return out;
}

/// N-pass oracle: r_I is column I of the gradient for target e_I.
inline std::vector<Vector> extract_exact(const Network& net, const Vector& x, const LossSpec& spec) {
  const ForwardTrace trace = forward(net, x);
  const Vector z = trace.logit_vector();
  const Eigen::Index n = net.num_classes();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const LossGrad lg = loss_and_logit_grad(spec, z, one_hot(n, i, spec.target_scale()));
    const GradientSet g = backward(net, trace, lg.dlogits);
    out.push_back(g.weights.back().col(i));
  }
  return out;
}

/// How far the reverse pass of the single-pass extractor runs. Both settings give
/// bit-identical features; Full mirrors a generic autodiff reverse pass (the cost
/// model of the oracle), FinalLayer skips the gradients the feature never uses.
enum class ReversePass { Full, FinalLayer };

/// Unscaled single-pass gradient for target 1_N (M * 1_N for MseM).
inline Matrix extract_fast_raw(const Network& net, const Vector& x, const LossSpec& spec,
                               ReversePass pass = ReversePass::Full) {
  const ForwardTrace trace = forward(net, x);
  const Vector target = Vector::Constant(net.num_classes(), spec.target_scale());
  const LossGrad lg = loss_and_logit_grad(spec, trace.logit_vector(), target);
  const std::size_t stop = pass == ReversePass::FinalLayer ? net.num_layers() - 1 : 0;
  GradientSet g = backward(net, trace, Matrix(lg.dlogits), nullptr, stop);
  return std::move(g.weights.back());
}

inline IntrospectiveFeature extract_fast(const Network& net, const Vector& x, const LossSpec& spec,
                                         ReversePass pass = ReversePass::Full) {
  return scale_feature(extract_fast_raw(net, x, spec, pass));
}

/// Residual vector g such that the raw feature equals a g^T, computed from the logits.
inline Vector feature_residual(const LossSpec& spec, const Vector& logits) {
  return loss_and_logit_grad(spec, logits, Vector::Constant(logits.size(), spec.target_scale())).dlogits;
}

/// Vector-Jacobian product of the scaled feature map with the scale held fixed.
/// Given dL/d(vectorized feature), returns dL/d(penultimate) and dL/d(logits).
struct FeatureCotangent {
  Vector d_penultimate;
  Vector d_logits;
};

inline FeatureCotangent feature_vjp(const LossSpec& spec, const Vector& penultimate, const Vector& logits,
                                    double scale, const Vector& d_vectorized) {
  const Eigen::Index d = penultimate.size(), n = logits.size();
  if (d_vectorized.size() != d * n) throw ShapeError("feature cotangent length does not match d*N");
  const Eigen::Map<const Matrix> u(d_vectorized.data(), d, n);
  const Vector g = feature_residual(spec, logits);
  FeatureCotangent out;
  out.d_penultimate = (u * g) / scale;
  const Vector dg = (u.transpose() * penultimate) / scale;
  if (spec.kind == LossKind::MseM) {
    out.d_logits = 2.0 * dg;
  } else {
    const Vector p = softmax(logits);
    out.d_logits = p.cwiseProduct(dg) - p * p.dot(dg);
  }
  return out;
}

/// Order-preserving batch extraction. Each worker owns a contiguous block of output
/// slots, so results do not depend on the worker count.
inline std::vector<IntrospectiveFeature> extract_batch(const Network& net, const Matrix& samples,
                                                       const LossSpec& spec, unsigned workers = 1) {
  const Eigen::Index count = samples.cols();
  std::vector<IntrospectiveFeature> out(static_cast<std::size_t>(count));
  if (count == 0) return out;
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  auto run = [&](Eigen::Index begin, Eigen::Index end) {
    for (Eigen::Index i = begin; i < end; ++i)
      out[static_cast<std::size_t>(i)] = extract_fast(net, samples.col(i), spec, ReversePass::FinalLayer);
  };
  if (workers == 1) {
    run(0, count);
    return out;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(workers);
  const Eigen::Index block = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const Eigen::Index b = std::min<Eigen::Index>(count, w * block), e = std::min<Eigen::Index>(count, b + block);
    pool.emplace_back([&, w, b, e] {
      try {
        run(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Stacks vectorized features as columns (d*N x count).
inline Matrix feature_matrix(std::span<const IntrospectiveFeature> features) {
  if (features.empty()) return Matrix(0, 0);
  Matrix m(features.front().matrix.size(), static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = features[i].vectorized();
  return m;
}

inline Matrix extract_feature_matrix(const Network& net, const Matrix& samples, const LossSpec& spec,
                                     unsigned workers = 1) {
  const auto f = extract_batch(net, samples, spec, workers);
  if (f.empty()) return Matrix(net.penultimate_dim() * net.num_classes(), 0);
  return feature_matrix(f);
}

// ---------------------------------------------------------------------------
// Diagnostics

struct SparsityProbe {
  int predicted = 0;
  std::vector<double> ratios;  // per introspective class I
};

struct SparsityReport {
  std::vector<SparsityProbe> probes;

  double mean_ratio() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& p : probes)
      for (double r : p.ratios) {
        s += r;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

/// Fraction of squared Frobenius energy of `grad` lying outside filters {i, predicted}.
inline double off_support_ratio(const Matrix& grad, Eigen::Index i, Eigen::Index predicted) {
  const double total = grad.squaredNorm();
  if (total <= 0.0) return 0.0;
  double off = 0.0;
  for (Eigen::Index j = 0; j < grad.cols(); ++j)
    if (j != i && j != predicted) off += grad.col(j).squaredNorm();
  return std::clamp(off / total, 0.0, 1.0);
}

inline SparsityReport sparsity_report(const Network& net, const Matrix& probes, const LossSpec& spec) {
  if (probes.cols() == 0) throw ParameterError("sparsity report needs at least one probe");
  SparsityReport report;
  for (Eigen::Index p = 0; p < probes.cols(); ++p) {
    const Vector x = probes.col(p);
    SparsityProbe probe;
    probe.predicted = argmax(logits(net, x));
    const auto grads = exact_gradient_matrices(net, x, spec);
    for (std::size_t i = 0; i < grads.size(); ++i)
      probe.ratios.push_back(off_support_ratio(grads[i], static_cast<Eigen::Index>(i), probe.predicted));
    report.probes.push_back(std::move(probe));
  }
  return report;
}

/// Empirical Fisher metric over per-column gradients with ridge:
///   F = (1/(M N)) sum_m sum_j r_mj r_mj^T + lambda I.
class FisherMetric {
 public:
  FisherMetric(std::span<const IntrospectiveFeature> features, Eigen::Index dim, double ridge) : ridge_(ridge) {
    if (!(ridge > 0.0)) throw ParameterError("Fisher ridge must be positive");
    fisher_ = Matrix::Zero(dim, dim);
    Eigen::Index columns = 0;
    for (const auto& f : features) {
      if (f.matrix.rows() != dim) throw ShapeError("feature row count does not match Fisher dimension");
      fisher_.selfadjointView<Eigen::Lower>().rankUpdate(f.matrix);
      columns += f.matrix.cols();
    }
    fisher_ = fisher_.selfadjointView<Eigen::Lower>();
    if (columns > 0) fisher_ /= static_cast<double>(columns);
    fisher_.diagonal().array() += ridge;
    llt_.compute(fisher_);
    if (llt_.info() != Eigen::Success) throw NumericError("Fisher matrix is not positive definite");
  }

  /// sum_j r_j^T F^{-1} r_j over the columns of `r`.
  double score(const Matrix& r) const {
    if (r.rows() != fisher_.rows()) throw ShapeError("probe row count does not match Fisher dimension");
    const Matrix x = llt_.solve(r);
    return std::max(0.0, (r.array() * x.array()).sum());
  }

  const Matrix& fisher() const { return fisher_; }
  double ridge() const { return ridge_; }

 private:
  double ridge_;
  Matrix fisher_;
  Eigen::LLT<Matrix> llt_;
};

struct FisherDiagnostic {
  Matrix fisher;
  double score = 0.0;
  double ridge = 0.0;
};

inline FisherDiagnostic fisher_variance(std::span<const IntrospectiveFeature> features,
                                        const IntrospectiveFeature& probe, double ridge) {
  const FisherMetric metric(features, probe.matrix.rows(), ridge);
  return {metric.fisher(), metric.score(probe.matrix), ridge};
}

}  // namespace introspect
