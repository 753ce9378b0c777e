#include <gtest/gtest.h>

#include <filesystem>

#include "introspect/checkpoint.hpp"
#include "introspect/data.hpp"
#include "introspect/train.hpp"
#include "test_util.hpp"

using namespace introspect;
using introspect::testing::away_from_kinks;
using introspect::testing::central_difference;
using introspect::testing::random_vector;
using introspect::testing::relative_error;

namespace {

Network identity_net() {
  DenseLayer l;
  l.weights = Matrix::Identity(2, 2);
  l.bias = Vector::Zero(2);
  return Network({l});
}

double loss_at(const Network& net, const Vector& x, const LossSpec& spec, const Vector& target) {
  return loss_and_logit_grad(spec, logits(net, x), target).loss;
}

}  // namespace

TEST(Forward, IdentityLayerPassesInputThrough) {
  const Vector z = logits(identity_net(), Vector{{1.0, 2.0}});
  EXPECT_EQ(z(0), 1.0);
  EXPECT_EQ(z(1), 2.0);
}

TEST(Forward, ZeroNetworkGivesZeroLogits) {
  Network net = Network::make({4, 6, 3}, Activation::ReLU, 7);
  for (auto& l : net.mutable_layers()) {
    l.weights.setZero();
    l.bias.setZero();
  }
  EXPECT_TRUE(logits(net, Vector::Ones(4)).isZero(0.0));
}

TEST(Forward, MatchesScalarReference) {
  SplitMix64 rng(11);
  for (Activation act : {Activation::ReLU, Activation::Sigmoid, Activation::Identity}) {
    const Network net = Network::make({9, 7, 5, 4}, act, 3);
    const Vector x = random_vector(9, rng);
    const Vector z = logits(net, x);
    const auto ref = introspect::testing::reference_logits(net, std::vector<double>(x.data(), x.data() + x.size()));
    for (Eigen::Index j = 0; j < z.size(); ++j) EXPECT_NEAR(z(j), ref[static_cast<std::size_t>(j)], 1e-12);
  }
}

TEST(Forward, TraceInvariantLogitsFromPenultimate) {
  const Network net = Network::make({5, 8, 3}, Activation::Sigmoid, 2);
  SplitMix64 rng(1);
  const ForwardTrace t = forward(net, random_vector(5, rng));
  const Vector expect = net.final_layer().weights.transpose() * t.penultimate_features() + net.final_layer().bias;
  EXPECT_LE((expect - t.logit_vector()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Forward, RejectsWrongInputLength) {
  EXPECT_THROW(forward(identity_net(), Vector(Vector::Ones(3))), ShapeError);
}

TEST(Network, FinalLayerMustBeIdentity) {
  DenseLayer l;
  l.weights = Matrix::Ones(2, 2);
  l.bias = Vector::Zero(2);
  l.activation = Activation::ReLU;
  EXPECT_THROW(Network({l}), ShapeError);
}

TEST(Loss, CrossEntropySymmetricLogits) {
  const LossGrad g = loss_and_logit_grad(LossSpec::cross_entropy(), Vector::Zero(2), one_hot(2, 0));
  EXPECT_NEAR(g.loss, std::log(2.0), 1e-15);
  EXPECT_NEAR(g.dlogits(0), -0.5, 1e-15);
  EXPECT_NEAR(g.dlogits(1), 0.5, 1e-15);
}

TEST(Loss, MseMExactFit) {
  const LossSpec spec = LossSpec::mse_m(5.0);
  const LossGrad g = loss_and_logit_grad(spec, Vector{{5.0, 0.0}}, one_hot(2, 0, spec.target_scale()));
  EXPECT_EQ(g.loss, 0.0);
  EXPECT_TRUE(g.dlogits.isZero(0.0));
}

TEST(Loss, MseMRequiresPositiveScale) { EXPECT_THROW(LossSpec::mse_m(0.0), ParameterError); }

TEST(Loss, GradientMatchesFiniteDifferences) {
  SplitMix64 rng(5);
  for (const LossSpec spec : {LossSpec::cross_entropy(), LossSpec::mse_m(3.0)}) {
    for (int trial = 0; trial < 50; ++trial) {
      Vector z = random_vector(6, rng, -3.0, 3.0);
      const Vector t = random_vector(6, rng, 0.0, 1.0);
      const Vector g = loss_and_logit_grad(spec, z, t).dlogits;
      for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double fd = central_difference(z(j), 1e-5, [&] { return loss_and_logit_grad(spec, z, t).loss; });
        EXPECT_NEAR(g(j), fd, 1e-6);
      }
    }
  }
}

TEST(Loss, NonFiniteLogitsRaise) {
  Vector z = Vector::Zero(3);
  z(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(loss_and_logit_grad(LossSpec::cross_entropy(), z, one_hot(3, 0)), NumericError);
}

TEST(Softmax, NonNegativeAndNormalized) {
  SplitMix64 rng(9);
  for (int i = 0; i < 100; ++i) {
    const Vector p = softmax(random_vector(10, rng, -50.0, 50.0));
    EXPECT_GE(p.minCoeff(), 0.0);
    EXPECT_NEAR(p.sum(), 1.0, 1e-10);
  }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const Network net = Network::make({4, 5, 3}, Activation::Sigmoid, 1);
  const ForwardTrace t = forward(net, Vector(Vector::Ones(4)));
  const GradientSet g = backward(net, t, Vector(Vector::Zero(3)));
  for (const auto& w : g.weights) EXPECT_TRUE(w.isZero(0.0));
  for (const auto& b : g.bias) EXPECT_TRUE(b.isZero(0.0));
  EXPECT_TRUE(g.input.isZero(0.0));
}

TEST(Backward, SingleLayerOuterProduct) {
  const Network net = identity_net();
  const double a = 0.3, b = -1.7;
  const GradientSet g = backward(net, forward(net, Vector{{1.0, 0.0}}), Vector{{a, b}});
  EXPECT_EQ(g.weights[0](0, 0), a);
  EXPECT_EQ(g.weights[0](1, 0), 0.0);
  EXPECT_EQ(g.weights[0](0, 1), b);
  EXPECT_EQ(g.weights[0](1, 1), 0.0);
}

TEST(Backward, FinalLayerGradientIsRankOne) {
  const Network net = Network::make({6, 8, 5}, Activation::ReLU, 4);
  SplitMix64 rng(2);
  const ForwardTrace t = forward(net, random_vector(6, rng));
  const Vector up = random_vector(5, rng);
  const GradientSet g = backward(net, t, up);
  const Matrix outer = t.penultimate_features() * up.transpose();
  EXPECT_TRUE(g.weights.back() == outer);
}

TEST(Backward, StaleTraceRaises) {
  const Network a = Network::make({4, 5, 3}, Activation::ReLU, 1);
  const Network b = Network::make({4, 6, 3}, Activation::ReLU, 1);
  EXPECT_THROW(backward(b, forward(a, Vector(Vector::Ones(4))), Vector(Vector::Zero(3))), ShapeError);
}

TEST(Backward, AllGradientsMatchFiniteDifferences) {
  SplitMix64 rng(17);
  for (Activation act : {Activation::Sigmoid, Activation::ReLU}) {
    for (const LossSpec spec : {LossSpec::cross_entropy(), LossSpec::mse_m(2.0)}) {
      Network net = Network::make({5, 7, 6, 4}, act, rng.next());
      Vector x = random_vector(5, rng);
      while (!away_from_kinks(net, x)) x = random_vector(5, rng);
      const Vector target = one_hot(4, static_cast<Eigen::Index>(rng.below(4)), spec.target_scale());
      const ForwardTrace t = forward(net, x);
      const GradientSet g = backward(net, t, loss_and_logit_grad(spec, t.logit_vector(), target).dlogits);
      auto f = [&] { return loss_at(net, x, spec, target); };
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        auto& layer = net.mutable_layers()[l];
        for (Eigen::Index i = 0; i < layer.weights.size(); ++i)
          EXPECT_LE(relative_error(g.weights[l](i), central_difference(layer.weights(i), 1e-5, f)), 1e-5);
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
          EXPECT_LE(relative_error(g.bias[l](i), central_difference(layer.bias(i), 1e-5, f)), 1e-5);
      }
      for (Eigen::Index i = 0; i < x.size(); ++i)
        EXPECT_LE(relative_error(g.input(i), central_difference(x(i), 1e-5, f)), 1e-5);
    }
  }
}

TEST(Train, SeparableBlobsReachPerfectTrainAccuracy) {
  const LabeledDataset ds = synth_blobs(2, 4, 40, 0.05, 3);
  Network net = Network::make({4, 8, 2}, Activation::ReLU, 1);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.lr_schedule = {{1, 0.1}};
  const auto curve = train(net, ds.samples, ds.labels, LossSpec::cross_entropy(), cfg);
  EXPECT_EQ(curve.size(), 50u);
  EXPECT_EQ(accuracy(net, ds.samples, ds.labels), 1.0);
}

TEST(Train, ZeroEpochsLeavesNetworkUnchanged) {
  const LabeledDataset ds = synth_blobs(2, 4, 10, 0.1, 3);
  const Network before = Network::make({4, 8, 2}, Activation::ReLU, 1);
  Network net = before;
  TrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_TRUE(train(net, ds.samples, ds.labels, LossSpec::cross_entropy(), cfg).empty());
  EXPECT_TRUE(net == before);
}

TEST(Train, DeterministicGivenSeed) {
  const LabeledDataset ds = synth_blobs(3, 6, 30, 0.3, 8);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.dropout_rate = 0.2;
  cfg.seed = 99;
  Network a = Network::make({6, 10, 3}, Activation::ReLU, 4), b = a;
  train(a, ds.samples, ds.labels, LossSpec::cross_entropy(), cfg);
  train(b, ds.samples, ds.labels, LossSpec::cross_entropy(), cfg);
  EXPECT_TRUE(a == b);
}

TEST(Train, WeightDecayStepShrinksWeightsOnly) {
  Network net = Network::make({3, 4, 2}, Activation::Sigmoid, 6);
  const Network before = net;
  const double lr = 0.1, decay = 5e-4;
  SgdMomentum opt(net, 0.9, decay);
  opt.step(net, zero_gradients(net), lr);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Matrix expect = before.layers()[l].weights * (1.0 - lr * decay);
    EXPECT_LE((net.layers()[l].weights - expect).cwiseAbs().maxCoeff(), 1e-16);
    EXPECT_TRUE(net.layers()[l].bias == before.layers()[l].bias);
  }
}

TEST(Train, DivergenceReportsEpoch) {
  const LabeledDataset ds = synth_blobs(2, 4, 20, 1.0, 1);
  Network net = Network::make({4, 8, 2}, Activation::ReLU, 2);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.momentum = 0.0;
  cfg.lr_schedule = {{1, 1e200}};
  try {
    train(net, ds.samples, ds.labels, LossSpec::mse_m(1.0), cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1);
  }
}

TEST(Train, LearningRateSchedule) {
  TrainConfig cfg;
  EXPECT_EQ(cfg.learning_rate(1), 0.1);
  EXPECT_EQ(cfg.learning_rate(60), 0.1);
  EXPECT_EQ(cfg.learning_rate(61), 0.02);
  EXPECT_EQ(cfg.learning_rate(200), 0.0008);
  cfg.lr_schedule = {{2, 0.1}};
  EXPECT_THROW(cfg.validate(), ParameterError);
}

TEST(Train, TenClassBlobsGeneralize) {
  const LabeledDataset all = synth_blobs(10, 784, 60, 0.5, 21);
  const auto [train_set, test_set] = split(all, 0.25, 5);
  Network net = Network::make({784, 256, 50, 10}, Activation::ReLU, 3);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.lr_schedule = TrainConfig::scaled_schedule(10);
  train(net, train_set.samples, train_set.labels, LossSpec::cross_entropy(), cfg);
  EXPECT_GE(accuracy(net, test_set.samples, test_set.labels), 0.95);
}

TEST(McDropout, ZeroRateMatchesPlainForward) {
  const Network net = Network::make({4, 6, 3}, Activation::ReLU, 2);
  const Vector x = Vector::LinSpaced(4, -1.0, 1.0);
  const Vector p = softmax(logits(net, x));
  for (const auto& q : forward_mc_dropout(net, x, 3, 0.0, 1)) EXPECT_TRUE(q == p);
}

TEST(McDropout, SeededPassesAreReproducible) {
  const Network net = Network::make({4, 6, 3}, Activation::ReLU, 2);
  const Vector x = Vector::LinSpaced(4, -1.0, 1.0);
  const auto a = forward_mc_dropout(net, x, 5, 0.5, 42), b = forward_mc_dropout(net, x, 5, 0.5, 42);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_TRUE(a[k] == b[k]);
}

TEST(McDropout, SmallSampleMeanNearLargeSampleMean) {
  const LabeledDataset ds = synth_blobs(3, 8, 40, 0.3, 2);
  Network net = Network::make({8, 32, 3}, Activation::ReLU, 1);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.lr_schedule = {{1, 0.05}};
  train(net, ds.samples, ds.labels, LossSpec::cross_entropy(), cfg);
  const Vector x = ds.samples.col(0);
  auto mean = [&](int k, std::uint64_t seed) {
    Vector m = Vector::Zero(3);
    for (const auto& p : forward_mc_dropout(net, x, k, 0.5, seed)) m += p;
    return Vector(m / k);
  };
  EXPECT_LE((mean(100, 1) - mean(10000, 2)).cwiseAbs().maxCoeff(), 0.1);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Network net = Network::make({5, 7, 3}, Activation::Sigmoid, 12);
  const auto path = std::filesystem::temp_directory_path() / "introspect_ckpt_test.json";
  save_network(net, path);
  EXPECT_TRUE(load_network(path) == net);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsInconsistentShapes) {
  auto j = to_json(Network::make({3, 2}, Activation::ReLU, 1));
  j["layers"][0]["fan_in"] = 4;
  EXPECT_THROW(network_from_json(j), FormatError);
}
