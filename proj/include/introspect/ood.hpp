#pragma once

// Out-of-distribution scoring (MSP, ODIN) and detection metrics.
//
// Scores are "higher = more in-distribution". Inputs are in model space; ODIN's
// epsilon is given in pixel units and divided by the per-channel std.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "introspect/second_stage.hpp"

namespace introspect {

enum class OodMethod { MSP, ODIN };

inline std::string to_string(OodMethod m) { return m == OodMethod::MSP ? "msp" : "odin"; }

inline OodMethod ood_method_from_string(const std::string& s) {
  if (s == "msp") return OodMethod::MSP;
  if (s == "odin") return OodMethod::ODIN;
  throw ParameterError("unknown OOD method '" + s + "'");
}

namespace detail {

inline Vector predictor_logits(const TwoStagePipeline& p, Mode mode, const Vector& x) {
  if (mode == Mode::FeedForward) return logits(p.sensing, x);
  return logits(p.head.network, extract_fast(p.sensing, x, p.extraction, ReversePass::FinalLayer).vectorized());
}

inline double temperature_msp(const Vector& z, double temperature) { return softmax(z / temperature).maxCoeff(); }

/// Per-coordinate step size: epsilon in pixel units mapped to model space.
inline Vector model_space_step(const ChannelStats& stats, Eigen::Index dim, double epsilon) {
  Vector step = Vector::Constant(dim, epsilon);
  const auto channels = static_cast<Eigen::Index>(stats.stddev.size());
  if (channels == 0 || dim % channels != 0) return step;
  const Eigen::Index per = dim / channels;
  for (Eigen::Index c = 0; c < channels; ++c) step.segment(c * per, per) /= stats.stddev[static_cast<std::size_t>(c)];
  return step;
}

}  // namespace detail

/// Max softmax probability of the mode's predictor.
inline double msp_score(Mode mode, const TwoStagePipeline& p, const Vector& x) {
  return detail::temperature_msp(detail::predictor_logits(p, mode, x), 1.0);
}

/// Gradient with respect to x of -ln max_j softmax(logits(x)/T)_j. In introspective
/// mode the gradient flows through the head, the extraction closed form (feature
/// scale held fixed) and f.
inline Vector odin_input_gradient(Mode mode, const TwoStagePipeline& p, const Vector& x, double temperature) {
  auto upstream = [&](const Vector& z) {
    Vector g = softmax(z / temperature);
    g(argmax(z)) -= 1.0;
    return Vector(g / temperature);
  };
  const ForwardTrace ft = forward(p.sensing, x);
  if (mode == Mode::FeedForward) return backward(p.sensing, ft, upstream(ft.logit_vector())).input.col(0);

  const Vector a = ft.penultimate_features(), zf = ft.logit_vector();
  const IntrospectiveFeature feat = scale_feature(a * feature_residual(p.extraction, zf).transpose());
  const ForwardTrace ht = forward(p.head.network, feat.vectorized());
  const Vector dv = backward(p.head.network, ht, upstream(ht.logit_vector())).input.col(0);
  const FeatureCotangent ct = feature_vjp(p.extraction, a, zf, feat.scale_factor, dv);
  const Matrix dpen = ct.d_penultimate;
  return backward(p.sensing, ft, Matrix(ct.d_logits), &dpen).input.col(0);
}

/// x - eps * sign(grad), the ODIN / one-step PGD perturbation toward a higher score.
inline Vector odin_perturb(Mode mode, const TwoStagePipeline& p, const Vector& x, double temperature, double epsilon) {
  const Vector g = odin_input_gradient(mode, p, x, temperature);
  const Vector step = detail::model_space_step(p.normalization, x.size(), epsilon);
  return x - step.cwiseProduct(g.array().sign().matrix());
}

/// ODIN: temperature-scaled MSP after an input perturbation. epsilon = 0 skips the
/// perturbation, so T = 1, epsilon = 0 reproduces msp_score bit for bit.
inline double odin_score(Mode mode, const TwoStagePipeline& p, const Vector& x, double temperature, double epsilon) {
  if (!(temperature > 0.0)) throw ParameterError("ODIN temperature must be positive");
  if (epsilon < 0.0) throw ParameterError("ODIN epsilon must be non-negative");
  const Vector xp = epsilon == 0.0 ? x : odin_perturb(mode, p, x, temperature, epsilon);
  return detail::temperature_msp(detail::predictor_logits(p, mode, xp), temperature);
}

// ---------------------------------------------------------------------------
// Detection metrics

struct DetectionMetrics {
  double fpr_at_95_tpr = 0.0;
  double detection_error = 0.0;
  double auroc = 0.0;
};

/// AUROC by pairwise counting (ties count one half), FPR at the largest threshold
/// whose TPR reaches 0.95, and min over thresholds of (1 - TPR)/2 + FPR/2.
/// A score >= threshold is classified in-distribution.
inline DetectionMetrics detection_metrics(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) throw ParameterError("detection metrics need non-empty score lists");
  for (double s : in_scores)
    if (std::isnan(s)) throw NumericError("NaN in-distribution score");
  for (double s : out_scores)
    if (std::isnan(s)) throw NumericError("NaN OOD score");
  std::vector<double> in(in_scores.begin(), in_scores.end()), out(out_scores.begin(), out_scores.end());
  std::sort(in.begin(), in.end());
  std::sort(out.begin(), out.end());
  const auto n_in = static_cast<std::int64_t>(in.size()), n_out = static_cast<std::int64_t>(out.size());
  auto count_ge = [](const std::vector<double>& v, double t) {
    return static_cast<std::int64_t>(v.end() - std::lower_bound(v.begin(), v.end(), t));
  };

  DetectionMetrics m;
  // Twice the number of (in, out) pairs ordered correctly, ties counted once.
  std::int64_t twice_wins = 0;
  for (double s : in) {
    const auto below = std::lower_bound(out.begin(), out.end(), s) - out.begin();
    const auto not_above = std::upper_bound(out.begin(), out.end(), s) - out.begin();
    twice_wins += 2 * below + (not_above - below);
  }
  m.auroc = static_cast<double>(twice_wins) / (2.0 * static_cast<double>(n_in) * static_cast<double>(n_out));

  // Thresholds at distinct in-scores; TPR is non-increasing in the threshold.
  double best_t = in.front();
  for (auto it = in.rbegin(); it != in.rend(); ++it)
    if (20 * count_ge(in, *it) >= 19 * n_in) {
      best_t = *it;
      break;
    }
  m.fpr_at_95_tpr = static_cast<double>(count_ge(out, best_t)) / static_cast<double>(n_out);

  m.detection_error = 0.5;  // threshold above every score
  auto consider = [&](double t) {
    const double tpr = static_cast<double>(count_ge(in, t)) / static_cast<double>(n_in);
    const double fpr = static_cast<double>(count_ge(out, t)) / static_cast<double>(n_out);
    m.detection_error = std::min(m.detection_error, 0.5 * (1.0 - tpr) + 0.5 * fpr);
  };
  for (double t : in) consider(t);
  for (double t : out) consider(t);
  return m;
}

// ---------------------------------------------------------------------------
// Harness

struct OodSet {
  std::string name;
  Matrix samples;  // model space
};

struct OodConfig {
  std::vector<OodMethod> methods = {OodMethod::MSP, OodMethod::ODIN};
  std::vector<Mode> modes = {Mode::FeedForward, Mode::Introspective};
  double temperature = 1000.0;
  double epsilon = 0.0014;
  bool adversarial = false;           // adds "<name>+adv" sets, perturbed toward higher score
  double adversarial_epsilon = 0.0014;
};

struct OodRow {
  OodMethod method = OodMethod::MSP;
  Mode mode = Mode::FeedForward;
  std::string ood_set;
  DetectionMetrics metrics;
};

inline std::vector<double> score_all(OodMethod method, Mode mode, const TwoStagePipeline& p, const Matrix& samples,
                                     const OodConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index i = 0; i < samples.cols(); ++i)
    out[static_cast<std::size_t>(i)] = method == OodMethod::MSP
                                           ? msp_score(mode, p, samples.col(i))
                                           : odin_score(mode, p, samples.col(i), cfg.temperature, cfg.epsilon);
  return out;
}

/// One-step sign perturbation of every column toward a higher MSP of the mode's predictor.
inline Matrix adversarial_shift(Mode mode, const TwoStagePipeline& p, const Matrix& samples, double epsilon) {
  Matrix out(samples.rows(), samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i) out.col(i) = odin_perturb(mode, p, samples.col(i), 1.0, epsilon);
  return out;
}

/// Full cross product method x mode x ood_set, in that nesting order.
inline std::vector<OodRow> run_ood(const TwoStagePipeline& p, const Matrix& in_test, std::span<const OodSet> ood_sets,
                                   const OodConfig& cfg) {
  std::vector<OodRow> rows;
  if (ood_sets.empty()) return rows;
  for (const auto& s : ood_sets)
    if (s.samples.rows() != in_test.rows()) throw ShapeError("OOD set '" + s.name + "' has a different dimensionality");
  for (OodMethod method : cfg.methods)
    for (Mode mode : cfg.modes) {
      const auto in_scores = score_all(method, mode, p, in_test, cfg);
      for (const auto& s : ood_sets) {
        rows.push_back({method, mode, s.name, detection_metrics(in_scores, score_all(method, mode, p, s.samples, cfg))});
        if (cfg.adversarial) {
          const Matrix adv = adversarial_shift(mode, p, s.samples, cfg.adversarial_epsilon);
          rows.push_back({method, mode, s.name + "+adv", detection_metrics(in_scores, score_all(method, mode, p, adv, cfg))});
        }
      }
    }
  return rows;
}

inline std::string ood_rows_csv(std::span<const OodRow> rows) {
  std::string out = "method,mode,ood_set,fpr95,det_err,auroc\n";
  for (const auto& r : rows)
    out += to_string(r.method) + "," + to_string(r.mode) + "," + r.ood_set + "," +
           io::format_double(r.metrics.fpr_at_95_tpr) + "," + io::format_double(r.metrics.detection_error) + "," +
           io::format_double(r.metrics.auroc) + "\n";
  return out;
}

inline nlohmann::json ood_rows_json(std::span<const OodRow> rows) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : rows)
    a.push_back({{"method", to_string(r.method)},
                 {"mode", to_string(r.mode)},
                 {"ood_set", r.ood_set},
                 {"fpr95", r.metrics.fpr_at_95_tpr},
                 {"det_err", r.metrics.detection_error},
                 {"auroc", r.metrics.auroc}});
  return a;
}

}  // namespace introspect
