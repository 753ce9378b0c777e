#include <gtest/gtest.h>

#include <filesystem>

#include "introspect/corruptions.hpp"
#include "introspect/data.hpp"
#include "introspect/train.hpp"

using namespace introspect;

namespace {

std::filesystem::path scratch(const std::string& name) { return std::filesystem::temp_directory_path() / ("introspect_" + name); }

std::string be32(std::uint32_t v) {
  return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

// Hand-assembled 4-image 2x3 IDX pair; image k has pixel p = 10*k + p, labels 3,1,4,1.
void write_idx_fixture(const std::filesystem::path& img, const std::filesystem::path& lab) {
  std::string i = be32(0x803) + be32(4) + be32(2) + be32(3);
  for (int k = 0; k < 4; ++k)
    for (int p = 0; p < 6; ++p) i.push_back(static_cast<char>(10 * k + p));
  std::string l = be32(0x801) + be32(4);
  for (int y : {3, 1, 4, 1}) l.push_back(static_cast<char>(y));
  io::write_file(img, i);
  io::write_file(lab, l);
}

LabeledDataset constant_images(int count, int size, double value) {
  LabeledDataset ds;
  ds.shape = {size, size, 1};
  ds.num_classes = 1;
  ds.samples = Matrix::Constant(size * size, count, value);
  ds.labels.assign(static_cast<std::size_t>(count), 0);
  return ds;
}

}  // namespace

TEST(Idx, ReadsHandAssembledFixture) {
  const auto img = scratch("idx_img"), lab = scratch("idx_lab");
  write_idx_fixture(img, lab);
  const LabeledDataset ds = load_idx(img, lab);
  EXPECT_EQ(ds.size(), 4);
  EXPECT_EQ(ds.shape, (ImageShape{2, 3, 1}));
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 1, 4, 1}));
  EXPECT_EQ(ds.num_classes, 5);
  EXPECT_EQ(ds.samples(0, 0), 0.0);
  EXPECT_EQ(ds.samples(1, 0), 1.0 / 255.0);
  EXPECT_EQ(ds.samples(0, 2), 20.0 / 255.0);
}

TEST(Idx, RoundTripsThroughWriter) {
  const auto img = scratch("idx_img2"), lab = scratch("idx_lab2");
  write_idx_fixture(img, lab);
  const LabeledDataset a = load_idx(img, lab);
  save_idx(a, scratch("idx_img3"), scratch("idx_lab3"));
  EXPECT_EQ(io::read_file(img), io::read_file(scratch("idx_img3")));
  EXPECT_EQ(io::read_file(lab), io::read_file(scratch("idx_lab3")));
}

TEST(Idx, EmptyCountGivesEmptyDataset) {
  const auto img = scratch("idx_empty_img"), lab = scratch("idx_empty_lab");
  io::write_file(img, be32(0x803) + be32(0) + be32(28) + be32(28));
  io::write_file(lab, be32(0x801) + be32(0));
  EXPECT_TRUE(load_idx(img, lab).empty());
}

TEST(Idx, BadMagicIsFormatError) {
  const auto img = scratch("idx_bad_img"), lab = scratch("idx_bad_lab");
  write_idx_fixture(img, lab);
  std::string bytes = io::read_file(img);
  bytes[3] = 0x01;
  io::write_file(img, bytes);
  EXPECT_THROW(load_idx(img, lab), FormatError);
}

TEST(Idx, CountMismatchIsFormatError) {
  const auto img = scratch("idx_mm_img"), lab = scratch("idx_mm_lab");
  write_idx_fixture(img, lab);
  io::write_file(lab, be32(0x801) + be32(3) + std::string("\x01\x02\x03", 3));
  try {
    load_idx(img, lab);
    FAIL() << "expected a count mismatch";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("count mismatch"), std::string::npos);
  }
}

TEST(Idx, TruncatedPixelsReportOffset) {
  const auto img = scratch("idx_tr_img"), lab = scratch("idx_tr_lab");
  write_idx_fixture(img, lab);
  std::string bytes = io::read_file(img);
  bytes.resize(bytes.size() - 5);
  io::write_file(img, bytes);
  try {
    load_idx(img, lab);
    FAIL() << "expected truncation";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset 35"), std::string::npos) << e.what();
  }
}

TEST(Csv, RoundTripsExactly) {
  const LabeledDataset a = synth_blobs(3, 4, 5, 0.7, 2);
  save_csv(a, scratch("data.csv"));
  const LabeledDataset b = load_csv(scratch("data.csv"));
  EXPECT_TRUE(a.samples == b.samples);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(Csv, BadCellReportsLine) {
  io::write_file(scratch("bad.csv"), "0,1.0,2.0\n1,abc,3.0\n");
  try {
    load_csv(scratch("bad.csv"));
    FAIL() << "expected a format error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Csv, RaggedRowsAndFractionalLabelsAreRejected) {
  io::write_file(scratch("ragged.csv"), "0,1.0,2.0\n1,3.0\n");
  EXPECT_THROW(load_csv(scratch("ragged.csv")), FormatError);
  io::write_file(scratch("frac.csv"), "0.5,1.0\n");
  EXPECT_THROW(load_csv(scratch("frac.csv")), FormatError);
}

TEST(Blobs, ZeroSpreadCollapsesToCenters) {
  const LabeledDataset d = synth_blobs(3, 5, 4, 0.0, 1);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const Eigen::Index first = (i / 4) * 4;
    EXPECT_TRUE(d.samples.col(i) == d.samples.col(first));
  }
}

TEST(Blobs, SameSeedSameData) {
  EXPECT_TRUE(synth_blobs(4, 6, 5, 0.3, 9).samples == synth_blobs(4, 6, 5, 0.3, 9).samples);
  EXPECT_FALSE(synth_blobs(4, 6, 5, 0.3, 9).samples == synth_blobs(4, 6, 5, 0.3, 10).samples);
}

TEST(Blobs, LinearProbeSeparatesTightClusters) {
  const LabeledDataset d = synth_blobs(10, 784, 20, 0.05, 3);
  Network probe = Network::make({784, 10}, Activation::ReLU, 1);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 20;
  cfg.lr_schedule = {{1, 0.05}};
  train(probe, d.samples, d.labels, LossSpec::cross_entropy(), cfg);
  EXPECT_EQ(accuracy(probe, d.samples, d.labels), 1.0);
}

TEST(Glyphs, DigitsAndLettersAreDeterministicImages) {
  const LabeledDataset a = synth_digits(3, 5), b = synth_digits(3, 5);
  EXPECT_TRUE(a.samples == b.samples);
  EXPECT_EQ(a.size(), 30);
  EXPECT_EQ(a.shape, (ImageShape{28, 28, 1}));
  EXPECT_GE(a.samples.minCoeff(), 0.0);
  EXPECT_LE(a.samples.maxCoeff(), 1.0);
  const LabeledDataset l = synth_letters(1, 5);
  for (unsigned d : glyphs::kDigits)
    for (unsigned x : glyphs::kLetters) EXPECT_NE(d, x);
  EXPECT_EQ(l.num_classes, 10);
}

TEST(Split, PartitionsWithoutOverlap) {
  const LabeledDataset d = synth_blobs(2, 3, 50, 0.5, 1);
  const auto [a, b] = split(d, 0.2, 4);
  EXPECT_EQ(b.size(), 20);
  EXPECT_EQ(a.size(), 80);
  EXPECT_THROW(split(d, 1.0, 4), ParameterError);
}

TEST(Normalize, UnitStatsAreIdentity) {
  const LabeledDataset d = synth_digits(2, 1);
  EXPECT_TRUE(normalize(d, {{0.0}, {1.0}}).samples == d.samples);
}

TEST(Normalize, InvertsWithinTolerance) {
  const LabeledDataset d = synth_digits(4, 1);
  const ChannelStats s = channel_stats(d);
  EXPECT_LE((denormalize(normalize(d, s), s).samples - d.samples).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Normalize, TrainSplitBecomesStandardized) {
  const LabeledDataset d = synth_digits(5, 2);
  const ChannelStats s = channel_stats(normalize(d, channel_stats(d)));
  EXPECT_LT(std::abs(s.mean[0]), 1e-10);
  EXPECT_NEAR(s.stddev[0], 1.0, 1e-10);
}

TEST(Normalize, ZeroStdIsParameterError) {
  EXPECT_THROW(normalize(synth_digits(1, 1), {{0.0}, {0.0}}), ParameterError);
}

TEST(Corrupt, GaussianSeverityOneStatistics) {
  const LabeledDataset d = corrupt(constant_images(16, 25, 0.5), {CorruptionKind::GaussianNoise, 1, 3});
  const auto a = d.samples.array();
  EXPECT_GE(a.minCoeff(), 0.5 - 5 * 0.04);
  EXPECT_LE(a.maxCoeff(), 0.5 + 5 * 0.04);
  const double mean = a.mean();
  const double sd = std::sqrt((a - mean).square().mean());
  EXPECT_NEAR(sd, 0.04, 0.004);
}

TEST(Corrupt, SaltPepperFlipFractionMatchesTable) {
  for (int level = 1; level <= 5; ++level) {
    const LabeledDataset d = corrupt(constant_images(4, 100, 0.5), {CorruptionKind::SaltPepper, level, 8});
    const double flipped = static_cast<double>((d.samples.array() != 0.5).count()) / static_cast<double>(d.samples.size());
    const double nominal = severity::kSaltPepperFraction[static_cast<std::size_t>(level - 1)];
    EXPECT_NEAR(flipped, nominal, 0.2 * nominal) << "level " << level;
  }
}

TEST(Corrupt, NoiseDistanceGrowsWithSeverity) {
  const LabeledDataset clean = synth_digits(100, 4);
  for (CorruptionKind k : {CorruptionKind::GaussianNoise, CorruptionKind::SaltPepper}) {
    double last = 0.0;
    for (int level = 1; level <= 5; ++level) {
      const LabeledDataset c = corrupt(clean, {k, level, 11});
      const double dist = (c.samples - clean.samples).colwise().norm().mean();
      EXPECT_GE(dist, last) << to_string(k) << " level " << level;
      last = dist;
    }
  }
}

TEST(Corrupt, ZeroShiftIsIdentity) {
  Vector x = Vector::LinSpaced(9, 0.0, 1.0);
  const Vector before = x;
  shift_intensity(x, 0.0);
  EXPECT_TRUE(x == before);
}

TEST(Corrupt, EveryKindKeepsLabelsCountAndRange) {
  const LabeledDataset clean = synth_digits(2, 6);
  for (CorruptionKind k : kAllCorruptions)
    for (int level = 1; level <= 5; ++level) {
      const LabeledDataset c = corrupt(clean, {k, level, 1});
      EXPECT_EQ(c.labels, clean.labels);
      EXPECT_EQ(c.size(), clean.size());
      EXPECT_GE(c.samples.minCoeff(), 0.0);
      EXPECT_LE(c.samples.maxCoeff(), 1.0);
    }
}

TEST(Corrupt, DeterministicAndSeedSensitive) {
  const LabeledDataset clean = synth_digits(1, 6);
  const CorruptionSpec s{CorruptionKind::SaltPepper, 3, 42};
  EXPECT_TRUE(corrupt(clean, s).samples == corrupt(clean, s).samples);
  EXPECT_FALSE(corrupt(clean, s).samples == corrupt(clean, {CorruptionKind::SaltPepper, 3, 43}).samples);
}

TEST(Corrupt, SamplesUseIndependentStreams) {
  const LabeledDataset clean = synth_digits(2, 6);
  const CorruptionSpec s{CorruptionKind::GaussianNoise, 2, 5};
  const LabeledDataset whole = corrupt(clean, s);
  // Sample i draws from stream i, so corrupting a prefix gives the same prefix.
  const std::vector<Eigen::Index> head{0, 1, 2};
  EXPECT_TRUE(corrupt(clean.subset(head), s).samples == whole.subset(head).samples);
}

TEST(Corrupt, BlurOnFlatDataIsShapeError) {
  const LabeledDataset flat = synth_blobs(2, 4, 2, 0.1, 1);
  EXPECT_THROW(corrupt(flat, {CorruptionKind::BoxBlur, 1, 0}), ShapeError);
  EXPECT_NO_THROW(corrupt(flat, {CorruptionKind::Brightness, 1, 0}));
}

TEST(Corrupt, SeverityOutsideRangeIsParameterError) {
  EXPECT_THROW(corrupt(synth_digits(1, 1), {CorruptionKind::Contrast, 0, 0}), ParameterError);
  EXPECT_THROW(corrupt(synth_digits(1, 1), {CorruptionKind::Contrast, 6, 0}), ParameterError);
}

TEST(Corrupt, BoxBlurAveragesWindow) {
  LabeledDataset d = constant_images(1, 5, 0.0);
  d.samples(12, 0) = 0.9;  // centre pixel
  const LabeledDataset b = corrupt(d, {CorruptionKind::BoxBlur, 2, 0});  // 3x3
  EXPECT_NEAR(b.samples(12, 0), 0.1, 1e-15);
  EXPECT_NEAR(b.samples(6, 0), 0.1, 1e-15);
  EXPECT_EQ(b.samples(0, 0), 0.0);
}

TEST(Corrupt, MotionBlurIsHorizontal) {
  LabeledDataset d = constant_images(1, 5, 0.0);
  d.samples(12, 0) = 0.9;
  const LabeledDataset b = corrupt(d, {CorruptionKind::MotionBlur, 1, 0});  // 1x3
  EXPECT_NEAR(b.samples(11, 0), 0.3, 1e-15);
  EXPECT_EQ(b.samples(7, 0), 0.0);
}

TEST(Corrupt, NamesRoundTrip) {
  for (CorruptionKind k : kAllCorruptions) EXPECT_EQ(corruption_from_string(to_string(k)), k);
  EXPECT_THROW(corruption_from_string("fog"), ParameterError);
}

TEST(Augment, ZeroCountKeepsOriginal) {
  const LabeledDataset d = synth_digits(2, 1);
  EXPECT_TRUE(augment_with_noise(d, {{CorruptionKind::GaussianNoise, 1, 0}}, 0, 3).samples == d.samples);
}

TEST(Augment, AddsCountPerSpec) {
  const LabeledDataset d = synth_digits(60, 1);
  std::vector<CorruptionSpec> six;
  for (CorruptionKind k : {CorruptionKind::GaussianNoise, CorruptionKind::SaltPepper, CorruptionKind::Brightness,
                           CorruptionKind::Contrast, CorruptionKind::OverExposure, CorruptionKind::UnderExposure})
    six.push_back({k, 3, 1});
  EXPECT_EQ(augment_with_noise(d, {six[0]}, 7, 3).size(), 607);
  EXPECT_EQ(augment_with_noise(d, six, 500, 3).size(), 600 + 3000);
}

TEST(Augment, CountAboveSetSizeIsParameterError) {
  EXPECT_THROW(augment_with_noise(synth_digits(1, 1), {{CorruptionKind::GaussianNoise, 1, 0}}, 11, 3), ParameterError);
}
