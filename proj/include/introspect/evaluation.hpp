#pragma once

// Clean and corrupted evaluation of both predictors, with CSV/JSON emitters.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "introspect/corruptions.hpp"
#include "introspect/second_stage.hpp"
#include "json.hpp"

namespace introspect {

struct EvalRow {
  std::string corruption = "clean";
  int severity = 0;  // 0 for the clean condition
  Mode mode = Mode::FeedForward;
  double accuracy = 0.0;
  double ece = 0.0;
  double mce = 0.0;
  double brier = 0.0;
  double log_likelihood = 0.0;
  Eigen::Index n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  const EvalRow* find(const std::string& corruption, int severity, Mode mode) const {
    for (const auto& r : rows)
      if (r.corruption == corruption && r.severity == severity && r.mode == mode) return &r;
    return nullptr;
  }

  /// Mean of `field` over rows of `mode` whose corruption is in `kinds` and severity in [lo, hi].
  template <typename Field>
  double mean_over(Mode mode, const std::vector<std::string>& kinds, int lo, int hi, Field field) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : rows)
      if (r.mode == mode && r.severity >= lo && r.severity <= hi &&
          std::find(kinds.begin(), kinds.end(), r.corruption) != kinds.end()) {
        s += field(r);
        ++n;
      }
    return n ? s / n : 0.0;
  }
};

struct EvalOptions {
  std::uint64_t seed = 0;
  unsigned workers = 1;
  BinReference bins = BinReference::MeanConfidence;
};

/// Seed of the corruption stream for one (kind, severity) condition.
inline std::uint64_t condition_seed(std::uint64_t seed, CorruptionKind kind, int severity) {
  return derive_seed(derive_seed(seed, "corruption"), to_string(kind) + "/" + std::to_string(severity));
}

inline void append_rows(EvalReport& report, const std::string& name, int severity,
                        const std::vector<TwoStagePrediction>& preds, BinReference bins) {
  std::vector<ScoredPrediction> ff, in;
  ff.reserve(preds.size());
  in.reserve(preds.size());
  for (const auto& p : preds) {
    ff.push_back(p.feed_forward);
    in.push_back(p.introspective);
  }
  for (Mode mode : {Mode::FeedForward, Mode::Introspective}) {
    const auto& v = mode == Mode::FeedForward ? ff : in;
    EvalRow row;
    row.corruption = name;
    row.severity = severity;
    row.mode = mode;
    row.n = static_cast<Eigen::Index>(v.size());
    if (!v.empty()) {
      const CalibrationReport cal = ece_mce(v, bins);
      row.accuracy = accuracy(v);
      row.ece = cal.ece;
      row.mce = cal.mce;
      row.brier = brier(v);
      row.log_likelihood = log_likelihood(v);
    }
    report.rows.push_back(row);
  }
}

/// Scores both modes on the clean raw test set and on every corrupted condition.
/// `raw_test` holds pixel data in [0,1]; normalization uses the pipeline's training
/// statistics. Corruption seeds derive from opts.seed (seeds on the individual CorruptionSpecs are ignored).
inline EvalReport evaluate(const TwoStagePipeline& pipeline, const LabeledDataset& raw_test,
                           std::vector<CorruptionSpec> conditions, const EvalOptions& opts = {}) {
  pipeline.validate();
  std::sort(conditions.begin(), conditions.end(), [](const auto& a, const auto& b) {
    return std::pair(static_cast<int>(a.kind), a.severity) < std::pair(static_cast<int>(b.kind), b.severity);
  });
  conditions.erase(std::unique(conditions.begin(), conditions.end(),
                               [](const auto& a, const auto& b) { return a.kind == b.kind && a.severity == b.severity; }),
                   conditions.end());

  EvalReport report;
  auto score = [&](const LabeledDataset& raw) {
    const LabeledDataset ds = normalize(raw, pipeline.normalization);
    return predict_batch(pipeline, ds.samples, ds.labels, opts.workers);
  };
  append_rows(report, "clean", 0, score(raw_test), opts.bins);
  for (auto spec : conditions) {
    spec.seed = condition_seed(opts.seed, spec.kind, spec.severity);
    append_rows(report, to_string(spec.kind), spec.severity, score(corrupt(raw_test, spec)), opts.bins);
  }
  return report;
}

inline std::vector<CorruptionSpec> all_conditions(const std::vector<CorruptionKind>& kinds, int lo = 1, int hi = 5) {
  std::vector<CorruptionSpec> out;
  for (auto k : kinds)
    for (int s = lo; s <= hi; ++s) out.push_back({k, s, 0});
  return out;
}

inline std::string eval_report_csv(const EvalReport& r) {
  std::string out = "corruption,severity,mode,accuracy,ece,mce,brier,log_likelihood,n\n";
  for (const auto& row : r.rows)
    out += row.corruption + "," + std::to_string(row.severity) + "," + to_string(row.mode) + "," +
           io::format_double(row.accuracy) + "," + io::format_double(row.ece) + "," + io::format_double(row.mce) + "," +
           io::format_double(row.brier) + "," + io::format_double(row.log_likelihood) + "," + std::to_string(row.n) +
           "\n";
  return out;
}

inline nlohmann::json eval_report_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"corruption", row.corruption},
                    {"severity", row.severity},
                    {"mode", to_string(row.mode)},
                    {"accuracy", row.accuracy},
                    {"ece", row.ece},
                    {"mce", row.mce},
                    {"brier", row.brier},
                    {"log_likelihood", row.log_likelihood},
                    {"n", row.n}});
  return {{"rows", rows}, {"note", "desk-scale corruption suite; aggregates are not comparable to CIFAR-10C"}};
}

/// Accuracy-vs-ECE scatter data, one point per mode and condition.
inline std::string eval_plot_csv(const EvalReport& r) {
  std::string out = "mode,condition,accuracy,ece\n";
  for (const auto& row : r.rows)
    out += to_string(row.mode) + "," + row.corruption + "/" + std::to_string(row.severity) + "," +
           io::format_double(row.accuracy) + "," + io::format_double(row.ece) + "\n";
  return out;
}

}  // namespace introspect
