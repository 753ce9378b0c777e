#include <gtest/gtest.h>

#include "introspect/evaluation.hpp"
#include "test_util.hpp"

using namespace introspect;

namespace {

// Two-class prediction with the given confidence, correct or not.
ScoredPrediction binary(double confidence, bool correct) {
  return score_probabilities(Vector{{confidence, 1.0 - confidence}}, correct ? 0 : 1);
}

std::vector<ScoredPrediction> repeat(double confidence, int correct, int wrong) {
  std::vector<ScoredPrediction> v;
  for (int i = 0; i < correct; ++i) v.push_back(binary(confidence, true));
  for (int i = 0; i < wrong; ++i) v.push_back(binary(confidence, false));
  return v;
}

std::vector<ScoredPrediction> random_predictions(int count, int classes, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<ScoredPrediction> v;
  for (int i = 0; i < count; ++i)
    v.push_back(score_logits(introspect::testing::random_vector(classes, rng, -3.0, 3.0),
                             static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)))));
  return v;
}

TwoStagePipeline tiny_image_pipeline() {
  const LabeledDataset raw = synth_digits(6, 2, 12);
  const ChannelStats stats = channel_stats(raw);
  PipelineRecipe r;
  r.sensing_hidden = {16};
  r.head_hidden = {8};
  r.sensing_train.epochs = 3;
  r.sensing_train.batch_size = 10;
  r.head_train.epochs = 3;
  r.head_train.batch_size = 10;
  return fit_pipeline(r, normalize(raw, stats), stats, 1).pipeline;
}

}  // namespace

TEST(Calibration, PerfectPredictionsHaveZeroError) {
  const auto v = repeat(1.0, 10, 0);
  const CalibrationReport r = ece_mce(v);
  EXPECT_EQ(r.ece, 0.0);
  EXPECT_EQ(r.mce, 0.0);
}

TEST(Calibration, SingleBinFixture) {
  const auto v = repeat(0.95, 8, 2);
  const CalibrationReport r = ece_mce(v);
  EXPECT_NEAR(r.ece, 0.15, 1e-12);
  EXPECT_NEAR(r.mce, 0.15, 1e-12);
  EXPECT_EQ(r.bins[9].count, 10);
}

TEST(Calibration, TwoBinFixture) {
  // 30 at confidence 0.5 with accuracy 0.6 (gap 0.1), 70 at 0.9 with accuracy 0.7 (gap 0.2).
  auto v = repeat(0.5, 18, 12);
  const auto b = repeat(0.9, 49, 21);
  v.insert(v.end(), b.begin(), b.end());
  const CalibrationReport r = ece_mce(v);
  EXPECT_NEAR(r.ece, 0.17, 1e-12);
  EXPECT_NEAR(r.mce, 0.2, 1e-12);
}

TEST(Calibration, BinsAreRightClosed) {
  EXPECT_EQ(calibration_bin(0.0), 0);
  EXPECT_EQ(calibration_bin(0.1), 0);
  EXPECT_EQ(calibration_bin(0.1000001), 1);
  EXPECT_EQ(calibration_bin(0.3), 2);
  EXPECT_EQ(calibration_bin(0.7), 6);
  EXPECT_EQ(calibration_bin(1.0), 9);
  for (int b = 1; b <= 10; ++b) EXPECT_EQ(calibration_bin(b / 10.0), b - 1) << b;
}

TEST(Calibration, CountsSumAndEceBoundedByMce) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto v = random_predictions(200, 5, s);
    const CalibrationReport r = ece_mce(v);
    Eigen::Index total = 0;
    for (const auto& bin : r.bins) total += bin.count;
    EXPECT_EQ(total, 200);
    EXPECT_LE(r.ece, r.mce + 1e-15);
    EXPECT_GE(r.ece, 0.0);
    EXPECT_LE(r.mce, 1.0);
  }
}

TEST(Calibration, InvariantToOrder) {
  auto v = random_predictions(100, 4, 3);
  const CalibrationReport a = ece_mce(v);
  std::reverse(v.begin(), v.end());
  const CalibrationReport b = ece_mce(v);
  EXPECT_NEAR(a.ece, b.ece, 1e-15);
  EXPECT_EQ(a.mce, b.mce);
}

TEST(Calibration, MidpointVariantUsesBinCentre) {
  const auto v = repeat(0.95, 8, 2);
  EXPECT_NEAR(ece_mce(v, BinReference::Midpoint).ece, 0.15, 1e-15);  // midpoint of (0.9,1] is 0.95
  const auto w = repeat(0.92, 10, 0);
  EXPECT_NEAR(ece_mce(w, BinReference::Midpoint).ece, 0.05, 1e-15);
  EXPECT_NEAR(ece_mce(w).ece, 0.08, 1e-15);
}

TEST(Calibration, EmptyInputIsParameterError) {
  EXPECT_THROW(ece_mce(std::vector<ScoredPrediction>{}), ParameterError);
  EXPECT_THROW(brier(std::vector<ScoredPrediction>{}), ParameterError);
  EXPECT_THROW(log_likelihood(std::vector<ScoredPrediction>{}), ParameterError);
}

TEST(Brier, KnownValues) {
  EXPECT_EQ(brier(repeat(1.0, 5, 0)), 0.0);
  const std::vector<ScoredPrediction> uniform{score_probabilities(Vector{{0.5, 0.5}}, 0),
                                              score_probabilities(Vector{{0.5, 0.5}}, 1)};
  EXPECT_EQ(brier(uniform), 0.5);
}

TEST(Brier, MatchesIndependentSummation) {
  const auto v = random_predictions(100, 7, 12);
  double total = 0.0;
  for (const auto& p : v)
    for (Eigen::Index j = 0; j < 7; ++j) {
      const double t = j == p.true_label ? 1.0 : 0.0;
      total += (p.probabilities(j) - t) * (p.probabilities(j) - t);
    }
  EXPECT_NEAR(brier(v), total / 100.0, 1e-12);
  EXPECT_GE(brier(v), 0.0);
  EXPECT_LE(brier(v), 2.0);
}

TEST(LogLikelihood, KnownValues) {
  EXPECT_EQ(log_likelihood(repeat(1.0, 4, 0)), 0.0);
  const double e1 = std::exp(-1.0);
  const std::vector<ScoredPrediction> v{score_probabilities(Vector{{e1, 1.0 - e1}}, 0)};
  EXPECT_NEAR(log_likelihood(v), -1.0, 1e-15);
}

TEST(LogLikelihood, FloorAvoidsInfinity) {
  const std::vector<ScoredPrediction> v{score_probabilities(Vector{{1.0, 0.0}}, 1)};
  EXPECT_NEAR(log_likelihood(v), std::log(1e-12), 1e-12);
  EXPECT_NEAR(log_likelihood(v), -27.631, 1e-3);
}

TEST(LogLikelihood, MatchesIndependentSummation) {
  const auto v = random_predictions(100, 5, 8);
  double total = 0.0;
  for (const auto& p : v) total += std::log(p.probabilities(p.true_label));
  EXPECT_NEAR(log_likelihood(v), total / 100.0, 1e-12);
  EXPECT_LE(log_likelihood(v), 0.0);
}

TEST(LogLikelihood, MissingLabelIsParameterError) {
  EXPECT_THROW(log_likelihood(std::vector{score_probabilities(Vector{{0.3, 0.7}})}), ParameterError);
}

TEST(Scoring, ConfidenceIsMaxProbability) {
  const ScoredPrediction p = score_logits(Vector{{0.1, 2.0, -1.0}}, 1);
  EXPECT_EQ(p.predicted_class, 1);
  EXPECT_NEAR(p.confidence, p.probabilities.maxCoeff(), 1e-15);
  EXPECT_NEAR(p.probabilities.sum(), 1.0, 1e-15);
  EXPECT_TRUE(p.correct());
}

TEST(Evaluate, EmptyConditionListGivesCleanRowsOnly) {
  const TwoStagePipeline p = tiny_image_pipeline();
  const LabeledDataset test = synth_digits(3, 9, 12);
  const EvalReport r = evaluate(p, test, {});
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].corruption, "clean");
  EXPECT_EQ(r.rows[0].mode, Mode::FeedForward);
  EXPECT_EQ(r.rows[1].mode, Mode::Introspective);
  EXPECT_EQ(r.rows[0].n, 30);
}

TEST(Evaluate, EveryConditionHasBothModesAndIsDeterministic) {
  const TwoStagePipeline p = tiny_image_pipeline();
  const LabeledDataset test = synth_digits(2, 9, 12);
  EvalOptions o;
  o.seed = 4;
  const auto conds = all_conditions({kAllCorruptions.begin(), kAllCorruptions.end()}, 1, 5);
  const EvalReport a = evaluate(p, test, conds, o), b = evaluate(p, test, conds, o);
  EXPECT_EQ(a.rows.size(), 2u * (1 + 40));
  for (CorruptionKind k : kAllCorruptions)
    for (int s = 1; s <= 5; ++s)
      for (Mode m : {Mode::FeedForward, Mode::Introspective}) EXPECT_NE(a.find(to_string(k), s, m), nullptr);
  EXPECT_EQ(eval_report_csv(a), eval_report_csv(b));
}

TEST(Evaluate, AccuracyMatchesRecount) {
  const TwoStagePipeline p = tiny_image_pipeline();
  const LabeledDataset test = synth_digits(4, 9, 12);
  const EvalReport r = evaluate(p, test, {});
  const LabeledDataset norm = normalize(test, p.normalization);
  int ff = 0, in = 0;
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const TwoStagePrediction pred = predict_two_stage(p, norm.samples.col(i));
    ff += pred.feed_forward.predicted_class == test.labels[static_cast<std::size_t>(i)];
    in += pred.introspective.predicted_class == test.labels[static_cast<std::size_t>(i)];
  }
  EXPECT_EQ(r.find("clean", 0, Mode::FeedForward)->accuracy, ff / 40.0);
  EXPECT_EQ(r.find("clean", 0, Mode::Introspective)->accuracy, in / 40.0);
}
