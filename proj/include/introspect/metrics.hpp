#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "introspect/nn.hpp"

namespace introspect {

struct ScoredPrediction {
  Vector probabilities;
  int predicted_class = 0;
  double confidence = 0.0;
  int true_label = -1;  // -1 when unknown

  bool correct() const { return predicted_class == true_label; }
};

inline ScoredPrediction score_probabilities(Vector probabilities, int true_label = -1) {
  ScoredPrediction p;
  Eigen::Index k = 0;
  p.confidence = probabilities.maxCoeff(&k);
  p.predicted_class = static_cast<int>(k);
  p.probabilities = std::move(probabilities);
  p.true_label = true_label;
  return p;
}

inline ScoredPrediction score_logits(const Vector& logits, int true_label = -1) {
  return score_probabilities(softmax(logits), true_label);
}

enum class BinReference { MeanConfidence, Midpoint };

struct CalibrationBin {
  Eigen::Index count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  static constexpr int kBins = 10;
  std::array<CalibrationBin, kBins> bins{};
  double ece = 0.0;
  double mce = 0.0;
};

/// Right-closed bins (b/10, (b+1)/10]; confidence 0 falls in the first bin.
inline int calibration_bin(double confidence) {
  constexpr int n = CalibrationReport::kBins;
  int b = static_cast<int>(std::ceil(confidence * n)) - 1;
  b = std::clamp(b, 0, n - 1);
  // Correct for rounding in confidence * n near an edge.
  while (b > 0 && confidence <= static_cast<double>(b) / n) --b;
  while (b < n - 1 && confidence > static_cast<double>(b + 1) / n) ++b;
  return b;
}

/// ECE = sum_b (n_b/n) |acc_b - ref_b|, MCE = max_b |acc_b - ref_b| over non-empty bins,
/// where ref_b is the bin's mean confidence (default) or its midpoint.
inline CalibrationReport ece_mce(std::span<const ScoredPrediction> preds,
                                 BinReference reference = BinReference::MeanConfidence) {
  if (preds.empty()) throw ParameterError("calibration needs at least one prediction");
  CalibrationReport r;
  std::array<double, CalibrationReport::kBins> conf_sum{}, hits{};
  for (const auto& p : preds) {
    const int b = calibration_bin(p.confidence);
    ++r.bins[b].count;
    conf_sum[b] += p.confidence;
    hits[b] += p.correct() ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(preds.size());
  for (int b = 0; b < CalibrationReport::kBins; ++b) {
    auto& bin = r.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / bin.count;
    bin.accuracy = hits[b] / bin.count;
    const double ref = reference == BinReference::Midpoint ? (b + 0.5) / CalibrationReport::kBins : bin.mean_confidence;
    const double gap = std::abs(bin.accuracy - ref);
    r.ece += (bin.count / n) * gap;
    r.mce = std::max(r.mce, gap);
  }
  return r;
}

inline double accuracy(std::span<const ScoredPrediction> preds) {
  if (preds.empty()) return 0.0;
  const auto hits = std::count_if(preds.begin(), preds.end(), [](const auto& p) { return p.correct(); });
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

/// Mean over samples of sum_j (p_j - [j == y])^2.
inline double brier(std::span<const ScoredPrediction> preds) {
  if (preds.empty()) throw ParameterError("Brier score needs at least one prediction");
  double total = 0.0;
  for (const auto& p : preds) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < p.probabilities.size(); ++j) {
      const double d = p.probabilities(j) - (j == p.true_label ? 1.0 : 0.0);
      s += d * d;
    }
    total += s;
  }
  return total / static_cast<double>(preds.size());
}

inline constexpr double kLogLikelihoodFloor = 1e-12;

/// Mean of ln(max(p_true, 1e-12)).
inline double log_likelihood(std::span<const ScoredPrediction> preds) {
  if (preds.empty()) throw ParameterError("log-likelihood needs at least one prediction");
  double total = 0.0;
  for (const auto& p : preds) {
    if (p.true_label < 0 || p.true_label >= p.probabilities.size())
      throw ParameterError("prediction has no valid true label");
    total += std::log(std::max(p.probabilities(p.true_label), kLogLikelihoodFloor));
  }
  return total / static_cast<double>(preds.size());
}

}  // namespace introspect
