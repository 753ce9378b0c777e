#pragma once

// Pool-based active learning against either predictor of a two-stage pipeline.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "introspect/second_stage.hpp"

namespace introspect {

// ---------------------------------------------------------------------------
// Acquisition scores. Higher always means more uncertain.

inline double score_entropy(const Vector& p) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p(j) > 0.0) h -= p(j) * std::log(p(j));
  return h;
}

inline double score_least_confidence(const Vector& p) { return 1.0 - p.maxCoeff(); }

/// Negated gap between the two largest probabilities.
inline double score_margin(const Vector& p) {
  if (p.size() < 2) throw ParameterError("margin needs at least two classes");
  double first = -1.0, second = -1.0;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) > first) {
      second = first;
      first = p(j);
    } else if (p(j) > second) {
      second = p(j);
    }
  }
  return -(first - second);
}

/// Mutual information between the prediction and the dropout mask:
/// H(mean_k p_k) - mean_k H(p_k).
inline double score_bald(std::span<const Vector> mc_probs) {
  if (mc_probs.size() < 2) throw ParameterError("BALD needs at least two passes");
  Vector mean = Vector::Zero(mc_probs.front().size());
  double mean_entropy = 0.0;
  for (const auto& p : mc_probs) {
    if (p.size() != mean.size()) throw ShapeError("MC passes disagree on class count");
    mean += p;
    mean_entropy += score_entropy(p);
  }
  const double k = static_cast<double>(mc_probs.size());
  return score_entropy(mean / k) - mean_entropy / k;
}

enum class Strategy { Entropy, LeastConfidence, Margin, BALD, BADGE };

inline constexpr std::array<Strategy, 5> kAllStrategies = {Strategy::Entropy, Strategy::LeastConfidence,
                                                           Strategy::Margin, Strategy::BALD, Strategy::BADGE};

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Entropy: return "entropy";
    case Strategy::LeastConfidence: return "least-confidence";
    case Strategy::Margin: return "margin";
    case Strategy::BALD: return "bald";
    case Strategy::BADGE: return "badge";
  }
  return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
  for (Strategy k : kAllStrategies)
    if (to_string(k) == s) return k;
  throw ParameterError("unknown strategy '" + s + "'");
}

// ---------------------------------------------------------------------------
// BADGE

/// Gradient embedding (p - e_yhat) (x) a, where a is the input of the scoring
/// network's final layer. Flattened column-major (class-major blocks of length d).
inline Vector badge_embedding(const Network& scorer, const Vector& input) {
  const ForwardTrace t = forward(scorer, input);
  Vector residual = softmax(t.logit_vector());
  residual(argmax(t.logit_vector())) -= 1.0;
  const Matrix outer = t.penultimate_features() * residual.transpose();
  return Eigen::Map<const Vector>(outer.data(), outer.size());
}

inline Vector badge_embedding(Mode mode, const TwoStagePipeline& p, const Vector& x) {
  if (mode == Mode::FeedForward) return badge_embedding(p.sensing, x);
  return badge_embedding(p.head.network, extract_fast(p.sensing, x, p.extraction, ReversePass::FinalLayer).vectorized());
}

/// k-means++ seeding over the columns of `embeddings`. When every remaining point
/// has zero distance to the chosen centers the next pick is uniform among them.
inline std::vector<Eigen::Index> kmeanspp_select(const Matrix& embeddings, Eigen::Index k, std::uint64_t seed) {
  const Eigen::Index n = embeddings.cols();
  if (k < 0 || k > n) throw ParameterError("cannot select " + std::to_string(k) + " of " + std::to_string(n) + " points");
  std::vector<Eigen::Index> chosen;
  if (k == 0) return chosen;
  SplitMix64 rng(seed);
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);

  auto pick = [&](Eigen::Index i) {
    chosen.push_back(i);
    taken[static_cast<std::size_t>(i)] = 1;
    for (Eigen::Index j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(j)] =
          std::min(dist[static_cast<std::size_t>(j)], (embeddings.col(j) - embeddings.col(i)).squaredNorm());
  };

  pick(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  while (static_cast<Eigen::Index>(chosen.size()) < k) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!taken[static_cast<std::size_t>(j)]) total += dist[static_cast<std::size_t>(j)];
    Eigen::Index next = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (taken[static_cast<std::size_t>(j)] || dist[static_cast<std::size_t>(j)] == 0.0) continue;
        acc += dist[static_cast<std::size_t>(j)];
        next = j;
        if (u < acc) break;
      }
    } else {
      const auto remaining = static_cast<std::uint64_t>(n) - chosen.size();
      auto r = rng.below(remaining);
      for (Eigen::Index j = 0; j < n; ++j)
        if (!taken[static_cast<std::size_t>(j)] && r-- == 0) {
          next = j;
          break;
        }
    }
    pick(next);
  }
  return chosen;
}

// ---------------------------------------------------------------------------
// Harness

struct Pool {
  LabeledDataset dataset;  // normalized
  std::vector<Eigen::Index> labeled;
  std::vector<Eigen::Index> unlabeled;

  static Pool fresh(LabeledDataset ds) {
    Pool p;
    p.unlabeled.resize(static_cast<std::size_t>(ds.size()));
    std::iota(p.unlabeled.begin(), p.unlabeled.end(), Eigen::Index{0});
    p.dataset = std::move(ds);
    return p;
  }

  /// Moves `picked` from the unlabeled to the labeled set. Each must be unlabeled.
  void label(std::vector<Eigen::Index> picked) {
    std::sort(picked.begin(), picked.end());
    if (std::adjacent_find(picked.begin(), picked.end()) != picked.end())
      throw ParameterError("query contains a duplicate index");
    std::vector<Eigen::Index> rest;
    rest.reserve(unlabeled.size());
    std::set_difference(unlabeled.begin(), unlabeled.end(), picked.begin(), picked.end(), std::back_inserter(rest));
    if (rest.size() + picked.size() != unlabeled.size()) throw ParameterError("query index is not in the unlabeled pool");
    unlabeled = std::move(rest);
    labeled.insert(labeled.end(), picked.begin(), picked.end());
  }
};

struct ALConfig {
  Strategy strategy = Strategy::Margin;
  Mode mode = Mode::FeedForward;
  int rounds = 10;
  int query_batch = 200;
  int initial_random = 100;
  std::uint64_t seed = 0;
  int bald_passes = 10;
  double bald_rate = 0.3;
  bool warm_start = false;

  void validate(Eigen::Index pool_size) const {
    if (rounds < 0 || query_batch < 1 || initial_random < 1) throw ParameterError("invalid active-learning budget");
    if (static_cast<Eigen::Index>(initial_random) + static_cast<Eigen::Index>(rounds) * query_batch > pool_size)
      throw ParameterError("active-learning budget exceeds the pool size");
    if (bald_passes < 2) throw ParameterError("BALD needs at least two passes");
    if (bald_rate < 0.0 || bald_rate >= 1.0) throw ParameterError("BALD dropout rate must lie in [0,1)");
  }
};

struct ALRow {
  int round = 0;
  Strategy strategy = Strategy::Margin;
  Mode mode = Mode::FeedForward;
  Eigen::Index labeled_count = 0;
  double clean_accuracy = 0.0;
  double corrupted_accuracy = 0.0;
};

struct ALResult {
  std::vector<ALRow> rows;
  std::vector<std::vector<Eigen::Index>> queries;  // queries[r] = indices labeled in round r
};

/// The round-0 labeled set: depends only on the seed and pool size, never on mode
/// or strategy.
inline std::vector<Eigen::Index> initial_indices(Eigen::Index pool_size, int count, std::uint64_t seed) {
  std::vector<Eigen::Index> all(static_cast<std::size_t>(pool_size));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  SplitMix64 rng(derive_seed(seed, "al-init"));
  shuffle(all, rng);
  all.resize(static_cast<std::size_t>(count));
  return all;
}

/// Indices of the `k` largest scores, ties broken by ascending index.
inline std::vector<Eigen::Index> top_k(std::span<const double> scores, std::span<const Eigen::Index> ids, int k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<Eigen::Index> out;
  for (int i = 0; i < k; ++i) out.push_back(ids[order[static_cast<std::size_t>(i)]]);
  return out;
}

namespace detail {

/// Inputs of the mode's predictor for each column of `samples`.
inline Matrix predictor_inputs(const TwoStagePipeline& p, Mode mode, const Matrix& samples, unsigned workers) {
  return mode == Mode::FeedForward ? samples : extract_feature_matrix(p.sensing, samples, p.extraction, workers);
}

inline const Network& predictor(const TwoStagePipeline& p, Mode mode) {
  return mode == Mode::FeedForward ? p.sensing : p.head.network;
}

inline double mode_accuracy(const TwoStagePipeline& p, Mode mode, const LabeledDataset& ds, unsigned workers) {
  return accuracy(predictor(p, mode), predictor_inputs(p, mode, ds.samples, workers), ds.labels);
}

}  // namespace detail

/// Scores the unlabeled pool and returns the query for the next round.
inline std::vector<Eigen::Index> select_queries(const TwoStagePipeline& p, const ALConfig& cfg, const Pool& pool,
                                                std::uint64_t round_seed, unsigned workers) {
  const LabeledDataset cand = pool.dataset.subset(pool.unlabeled);
  const Matrix inputs = detail::predictor_inputs(p, cfg.mode, cand.samples, workers);
  const Network& net = detail::predictor(p, cfg.mode);
  const Eigen::Index n = inputs.cols();

  if (cfg.strategy == Strategy::BADGE) {
    Matrix emb(net.penultimate_dim() * net.num_classes(), n);
    for (Eigen::Index i = 0; i < n; ++i) emb.col(i) = badge_embedding(net, inputs.col(i));
    std::vector<Eigen::Index> out;
    for (Eigen::Index i : kmeanspp_select(emb, cfg.query_batch, derive_seed(round_seed, "badge")))
      out.push_back(pool.unlabeled[static_cast<std::size_t>(i)]);
    return out;
  }

  std::vector<double> scores(static_cast<std::size_t>(n));
  if (cfg.strategy == Strategy::BALD) {
    const std::uint64_t bald_seed = derive_seed(round_seed, "bald");
    for (Eigen::Index i = 0; i < n; ++i) {
      // Seeded by pool index so the score does not depend on scan order.
      const auto idx = static_cast<std::uint64_t>(pool.unlabeled[static_cast<std::size_t>(i)]);
      const auto mc = forward_mc_dropout(net, inputs.col(i), cfg.bald_passes, cfg.bald_rate, derive_seed(bald_seed, idx));
      scores[static_cast<std::size_t>(i)] = score_bald(mc);
    }
  } else {
    const Matrix z = predict_logits(net, inputs);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector prob = softmax(z.col(i));
      double s = 0.0;
      switch (cfg.strategy) {
        case Strategy::Entropy: s = score_entropy(prob); break;
        case Strategy::LeastConfidence: s = score_least_confidence(prob); break;
        default: s = score_margin(prob); break;
      }
      scores[static_cast<std::size_t>(i)] = s;
    }
  }
  return top_k(scores, pool.unlabeled, cfg.query_batch);
}

/// Runs round 0 plus `cfg.rounds` query rounds. Every round retrains f (and, in
/// introspective mode, the head) on the labeled set and records the mode's
/// accuracy on `clean_test` and `corrupted_test`. All datasets are normalized.
inline ALResult run_active_learning(const LabeledDataset& pool_data, const LabeledDataset& clean_test,
                                    const LabeledDataset& corrupted_test, PipelineRecipe recipe, const ALConfig& cfg,
                                    const ChannelStats& stats = {}) {
  cfg.validate(pool_data.size());
  recipe.fit_head = cfg.mode == Mode::Introspective;
  Pool pool = Pool::fresh(pool_data);
  ALResult result;

  std::vector<Eigen::Index> query = initial_indices(pool_data.size(), cfg.initial_random, cfg.seed);
  std::optional<Network> previous;
  for (int round = 0; round <= cfg.rounds; ++round) {
    pool.label(query);
    result.queries.push_back(query);
    const std::uint64_t round_seed = derive_seed(derive_seed(cfg.seed, "al-round"), static_cast<std::uint64_t>(round));
    const LabeledDataset labeled = pool.dataset.subset(pool.labeled);
    const FitResult fit = fit_pipeline(recipe, labeled, stats, round_seed,
                                       cfg.warm_start && previous ? &*previous : nullptr);
    previous = fit.pipeline.sensing;

    ALRow row;
    row.round = round;
    row.strategy = cfg.strategy;
    row.mode = cfg.mode;
    row.labeled_count = static_cast<Eigen::Index>(pool.labeled.size());
    row.clean_accuracy = detail::mode_accuracy(fit.pipeline, cfg.mode, clean_test, recipe.workers);
    row.corrupted_accuracy = detail::mode_accuracy(fit.pipeline, cfg.mode, corrupted_test, recipe.workers);
    result.rows.push_back(row);

    if (round < cfg.rounds) query = select_queries(fit.pipeline, cfg, pool, round_seed, recipe.workers);
  }
  return result;
}

inline std::string al_rows_csv(std::span<const ALRow> rows) {
  std::string out = "round,strategy,mode,labeled_count,clean_acc,corrupted_acc\n";
  for (const auto& r : rows)
    out += std::to_string(r.round) + "," + to_string(r.strategy) + "," + to_string(r.mode) + "," +
           std::to_string(r.labeled_count) + "," + io::format_double(r.clean_accuracy) + "," +
           io::format_double(r.corrupted_accuracy) + "\n";
  return out;
}

/// Mean corrupted-test accuracy over all rounds.
inline double mean_corrupted_accuracy(std::span<const ALRow> rows) {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.corrupted_accuracy;
  return s / static_cast<double>(rows.size());
}

}  // namespace introspect
