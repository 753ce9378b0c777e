#pragma once

// The introspective head and the two-stage pipeline built around it.

#include <filesystem>
#include <string>
#include <vector>

#include "introspect/checkpoint.hpp"
#include "introspect/data.hpp"
#include "introspect/introspection.hpp"
#include "introspect/metrics.hpp"
#include "introspect/train.hpp"

namespace introspect {

struct IntrospectiveHead {
  Network network;
  std::vector<int> hidden_dims;
  Activation activation = Activation::Sigmoid;

  Eigen::Index input_dim() const { return network.input_dim(); }
};

/// MLP from the d*N feature vector to N classes; hidden layers use `activation`,
/// the output is raw logits. An empty `hidden` gives a single linear map.
inline IntrospectiveHead build_head(int penultimate_dim, int num_classes, std::vector<int> hidden, std::uint64_t seed,
                                    Activation activation = Activation::Sigmoid) {
  if (penultimate_dim <= 0 || num_classes <= 0) throw ParameterError("head dimensions must be positive");
  std::vector<int> dims{penultimate_dim * num_classes};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(num_classes);
  return {Network::make(std::span<const int>(dims), activation, seed), std::move(hidden), activation};
}

/// Head training reuses the generic trainer; the head's own loss is independent of
/// the extraction loss.
inline std::vector<EpochStats> train_head(IntrospectiveHead& head, const Matrix& features, std::span<const int> labels,
                                          const TrainConfig& cfg, const LossSpec& loss = LossSpec::cross_entropy()) {
  if (static_cast<Eigen::Index>(labels.size()) != features.cols())
    throw ShapeError("feature count does not match label count");
  if (features.rows() != head.input_dim()) throw ShapeError("feature length does not match head input");
  return train(head.network, features, labels, loss, cfg);
}

struct TwoStagePipeline {
  Network sensing;
  LossSpec extraction;
  IntrospectiveHead head;
  ChannelStats normalization;  // applied by callers holding raw pixel data

  void validate() const {
    sensing.validate();
    head.network.validate();
    if (head.input_dim() != sensing.penultimate_dim() * sensing.num_classes())
      throw ShapeError("head input does not equal penultimate_dim * num_classes");
    if (head.network.num_classes() != sensing.num_classes())
      throw ShapeError("head output does not match sensing classes");
  }

  Eigen::Index num_classes() const { return sensing.num_classes(); }
};

/// Which predictor a harness scores: the sensing network alone or the head.
enum class Mode { FeedForward, Introspective };

inline std::string to_string(Mode m) { return m == Mode::FeedForward ? "feed-forward" : "introspective"; }

inline Mode mode_from_string(const std::string& s) {
  if (s == "feed-forward" || s == "ff") return Mode::FeedForward;
  if (s == "introspective" || s == "intro") return Mode::Introspective;
  throw ParameterError("unknown mode '" + s + "'");
}

struct TwoStagePrediction {
  ScoredPrediction feed_forward;
  ScoredPrediction introspective;
};

/// `x` is in model space (already normalized). Never reads a label: the extraction
/// target is the constant all-ones vector.
inline TwoStagePrediction predict_two_stage(const TwoStagePipeline& p, const Vector& x) {
  TwoStagePrediction out;
  out.feed_forward = score_logits(logits(p.sensing, x));
  const IntrospectiveFeature f = extract_fast(p.sensing, x, p.extraction, ReversePass::FinalLayer);
  out.introspective = score_logits(logits(p.head.network, f.vectorized()));
  return out;
}

/// Batched version over columns of `samples`; labels (if given) are attached to the
/// scored predictions only.
inline std::vector<TwoStagePrediction> predict_batch(const TwoStagePipeline& p, const Matrix& samples,
                                                     std::span<const int> labels = {}, unsigned workers = 1) {
  const Matrix ff = predict_logits(p.sensing, samples);
  const Matrix feats = extract_feature_matrix(p.sensing, samples, p.extraction, workers);
  const Matrix hl = predict_logits(p.head.network, feats);
  std::vector<TwoStagePrediction> out(static_cast<std::size_t>(samples.cols()));
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    const int y = labels.empty() ? -1 : labels[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {score_logits(ff.col(i), y), score_logits(hl.col(i), y)};
  }
  return out;
}

/// Mean over `samples` of the largest logit; the M of the MSE-M extraction loss.
inline double mean_max_logit(const Network& net, const Matrix& samples) {
  if (samples.cols() == 0) throw ParameterError("M needs at least one sample");
  const Matrix z = predict_logits(net, samples);
  return z.colwise().maxCoeff().mean();
}

/// Everything needed to (re)build a pipeline from data.
struct PipelineRecipe {
  std::vector<int> sensing_hidden = {256, 50};
  Activation sensing_activation = Activation::ReLU;
  TrainConfig sensing_train;
  std::vector<int> head_hidden = {300, 100};
  Activation head_activation = Activation::Sigmoid;
  TrainConfig head_train = [] {
    TrainConfig c;
    c.weight_decay = 5e-3;
    return c;
  }();
  LossKind extraction = LossKind::MseM;
  double held_out_fraction = 0.0;  // >0 trains the head on a split disjoint from f's data
  unsigned workers = 1;
  bool fit_head = true;  // false stops after f (feed-forward only runs)
};

struct FitResult {
  TwoStagePipeline pipeline;
  std::vector<EpochStats> sensing_curve;
  std::vector<EpochStats> head_curve;
  double sensing_train_accuracy = 0.0;
};

inline Network build_sensing(const PipelineRecipe& r, int input_dim, int num_classes, std::uint64_t seed) {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), r.sensing_hidden.begin(), r.sensing_hidden.end());
  dims.push_back(num_classes);
  return Network::make(std::span<const int>(dims), r.sensing_activation, derive_seed(seed, "init-f"));
}

/// Extraction loss for a trained sensing net: M is the training-set mean max logit.
/// A non-positive mean (possible only for untrained nets) falls back to M = 1.
inline LossSpec extraction_loss_for(LossKind kind, const Network& sensing, const Matrix& train_samples) {
  if (kind == LossKind::CrossEntropy) return LossSpec::cross_entropy();
  const double m = mean_max_logit(sensing, train_samples);
  return LossSpec::mse_m(m > 0.0 ? m : 1.0);
}

/// Fits f, then the head on features of f's training set (or of a held-out split).
/// `train_set` must already be normalized with `stats`.
/// (f's training data, H's training data). Identical unless held_out_fraction > 0.
inline std::pair<LabeledDataset, LabeledDataset> fit_splits(const PipelineRecipe& r, const LabeledDataset& train_set,
                                                            std::uint64_t seed) {
  if (r.held_out_fraction > 0.0) return split(train_set, r.held_out_fraction, derive_seed(seed, "split"));
  return {train_set, train_set};
}

inline FitResult fit_pipeline(const PipelineRecipe& r, const LabeledDataset& train_set, const ChannelStats& stats,
                              std::uint64_t seed, const Network* initial_sensing = nullptr,
                              const TrainHooks& sensing_hooks = {}) {
  train_set.validate();
  const auto [f_data, h_data] = fit_splits(r, train_set, seed);
  FitResult out;
  out.pipeline.normalization = stats;
  out.pipeline.sensing = initial_sensing ? *initial_sensing
                                         : build_sensing(r, static_cast<int>(train_set.dim()), train_set.num_classes, seed);
  TrainConfig fcfg = r.sensing_train;
  fcfg.seed = derive_seed(seed, "train-f");
  out.sensing_curve =
      train(out.pipeline.sensing, f_data.samples, f_data.labels, LossSpec::cross_entropy(), fcfg, sensing_hooks);
  out.sensing_train_accuracy = accuracy(out.pipeline.sensing, f_data.samples, f_data.labels);

  out.pipeline.extraction = extraction_loss_for(r.extraction, out.pipeline.sensing, f_data.samples);
  if (!r.fit_head) return out;
  const Matrix features = extract_feature_matrix(out.pipeline.sensing, h_data.samples, out.pipeline.extraction, r.workers);
  out.pipeline.head = build_head(static_cast<int>(out.pipeline.sensing.penultimate_dim()), train_set.num_classes,
                                 r.head_hidden, derive_seed(seed, "init-h"), r.head_activation);
  TrainConfig hcfg = r.head_train;
  hcfg.seed = derive_seed(seed, "train-h");
  out.head_curve = train_head(out.pipeline.head, features, h_data.labels, hcfg);
  return out;
}

// ---------------------------------------------------------------------------
// Bundle: sensing.json + head.json + pipeline.json manifest

inline void save_pipeline(const TwoStagePipeline& p, const std::filesystem::path& dir) {
  p.validate();
  std::filesystem::create_directories(dir);
  save_network(p.sensing, dir / "sensing.json");
  save_network(p.head.network, dir / "head.json");
  nlohmann::json m;
  m["format"] = "introspect-pipeline";
  m["version"] = 1;
  m["extraction_loss"] = to_string(p.extraction.kind);
  m["m_scale"] = p.extraction.m_scale;
  m["head_hidden"] = p.head.hidden_dims;
  m["head_activation"] = to_string(p.head.activation);
  m["normalization"] = {{"mean", p.normalization.mean}, {"std", p.normalization.stddev}};
  m["feature_scale"] = "per-sample max-abs, all-zero -> factor 1";
  m["vectorization"] = "column-major (column j = filter j)";
  m["penultimate_dim"] = p.sensing.penultimate_dim();
  m["num_classes"] = p.sensing.num_classes();
  m["files"] = {{"sensing.json", io::file_sha256(dir / "sensing.json")},
                {"head.json", io::file_sha256(dir / "head.json")}};
  io::write_file(dir / "pipeline.json", m.dump(2) + "\n");
}

inline TwoStagePipeline load_pipeline(const std::filesystem::path& dir) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(dir / "pipeline.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("pipeline.json at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    if (m.at("format") != "introspect-pipeline") throw FormatError("not a pipeline manifest");
    for (const auto& [name, hash] : m.at("files").items())
      if (io::file_sha256(dir / name) != hash.get<std::string>())
        throw FormatError("content hash mismatch for " + name);
    TwoStagePipeline p;
    p.sensing = load_network(dir / "sensing.json");
    p.head.network = load_network(dir / "head.json");
    p.head.hidden_dims = m.at("head_hidden").get<std::vector<int>>();
    p.head.activation = activation_from_string(m.at("head_activation").get<std::string>());
    const LossKind kind = loss_kind_from_string(m.at("extraction_loss").get<std::string>());
    p.extraction = kind == LossKind::MseM ? LossSpec::mse_m(m.at("m_scale").get<double>()) : LossSpec::cross_entropy();
    p.normalization.mean = m.at("normalization").at("mean").get<std::vector<double>>();
    p.normalization.stddev = m.at("normalization").at("std").get<std::vector<double>>();
    p.validate();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed pipeline manifest: ") + e.what());
  }
}

}  // namespace introspect
