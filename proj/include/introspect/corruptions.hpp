#pragma once

// Eight corruption families at five severities. Pointwise kinds work on any data;
// blur kinds need image geometry. Every output pixel is clipped to [0,1].

#include <array>
#include <string>
#include <vector>

#include "introspect/data.hpp"

namespace introspect {

enum class CorruptionKind { GaussianNoise, SaltPepper, Brightness, Contrast, BoxBlur, MotionBlur, OverExposure, UnderExposure };

inline constexpr std::array<CorruptionKind, 8> kAllCorruptions = {
    CorruptionKind::GaussianNoise, CorruptionKind::SaltPepper, CorruptionKind::Brightness,   CorruptionKind::Contrast,
    CorruptionKind::BoxBlur,       CorruptionKind::MotionBlur, CorruptionKind::OverExposure, CorruptionKind::UnderExposure};

inline std::string to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::GaussianNoise: return "gaussian_noise";
    case CorruptionKind::SaltPepper: return "salt_pepper";
    case CorruptionKind::Brightness: return "brightness";
    case CorruptionKind::Contrast: return "contrast";
    case CorruptionKind::BoxBlur: return "box_blur";
    case CorruptionKind::MotionBlur: return "motion_blur";
    case CorruptionKind::OverExposure: return "over_exposure";
    case CorruptionKind::UnderExposure: return "under_exposure";
  }
  return "unknown";
}

inline CorruptionKind corruption_from_string(const std::string& s) {
  for (auto k : kAllCorruptions)
    if (to_string(k) == s) return k;
  throw ParameterError("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::GaussianNoise;
  int severity = 1;
  std::uint64_t seed = 0;
};

namespace severity {
inline constexpr std::array<double, 5> kGaussianSigma = {0.04, 0.08, 0.12, 0.18, 0.26};
inline constexpr std::array<double, 5> kSaltPepperFraction = {0.02, 0.05, 0.10, 0.15, 0.25};
inline constexpr std::array<double, 5> kBrightnessAdd = {0.05, 0.1, 0.15, 0.2, 0.3};
inline constexpr std::array<double, 5> kContrastScale = {0.85, 0.7, 0.55, 0.4, 0.25};
inline constexpr std::array<int, 5> kBoxBlurKernel = {2, 3, 4, 5, 7};
inline constexpr std::array<int, 5> kMotionBlurKernel = {3, 5, 7, 9, 11};
inline constexpr std::array<double, 5> kExposureShift = {0.1, 0.2, 0.3, 0.4, 0.5};
}  // namespace severity

inline bool is_spatial(CorruptionKind k) { return k == CorruptionKind::BoxBlur || k == CorruptionKind::MotionBlur; }

// ---------------------------------------------------------------------------
// Primitive per-image transforms (input and output in [0,1] pixel space)

inline void clip_unit(Vector& x) { x = x.cwiseMax(0.0).cwiseMin(1.0); }

inline void add_gaussian_noise(Vector& x, double sigma, SplitMix64& rng) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += sigma * rng.normal();
  clip_unit(x);
}

/// Each pixel independently becomes 0 or 1 (equal odds) with probability `fraction`.
inline void salt_and_pepper(Vector& x, double fraction, SplitMix64& rng) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = rng.uniform();
    const double v = rng.uniform();
    if (u < fraction) x(i) = v < 0.5 ? 0.0 : 1.0;
  }
}

inline void shift_intensity(Vector& x, double delta) {
  if (delta == 0.0) return;
  x.array() += delta;
  clip_unit(x);
}

/// Scales deviations from the per-image, per-channel mean by `factor`.
inline void scale_contrast(Vector& x, double factor, int channels) {
  const Eigen::Index plane = x.size() / channels;
  for (int c = 0; c < channels; ++c) {
    auto seg = x.segment(c * plane, plane);
    const double mean = seg.mean();
    seg = ((seg.array() - mean) * factor + mean).matrix();
  }
  clip_unit(x);
}

/// Mean filter over a kh x kw window with clamped borders. Even sizes extend one
/// pixel further toward +row/+col.
inline void window_blur(Vector& x, const ImageShape& shape, int kh, int kw) {
  const int H = shape.height, W = shape.width;
  const int r0 = -(kh - 1) / 2, r1 = kh / 2, c0 = -(kw - 1) / 2, c1 = kw / 2;
  const Vector src = x;
  const double norm = 1.0 / (kh * kw);
  for (int c = 0; c < shape.channels; ++c) {
    const Eigen::Index base = static_cast<Eigen::Index>(c) * H * W;
    for (int row = 0; row < H; ++row)
      for (int col = 0; col < W; ++col) {
        double s = 0.0;
        for (int dr = r0; dr <= r1; ++dr)
          for (int dc = c0; dc <= c1; ++dc) {
            const int rr = std::clamp(row + dr, 0, H - 1), cc = std::clamp(col + dc, 0, W - 1);
            s += src(base + rr * W + cc);
          }
        x(base + row * W + col) = s * norm;
      }
  }
  clip_unit(x);
}

// ---------------------------------------------------------------------------

/// Applies one corruption to a single sample in place.
inline void corrupt_sample(Vector& x, const ImageShape& shape, CorruptionKind kind, int level, SplitMix64& rng) {
  const std::size_t s = static_cast<std::size_t>(level - 1);
  const int channels = shape.is_image() ? shape.channels : 1;
  switch (kind) {
    case CorruptionKind::GaussianNoise: add_gaussian_noise(x, severity::kGaussianSigma[s], rng); break;
    case CorruptionKind::SaltPepper: salt_and_pepper(x, severity::kSaltPepperFraction[s], rng); break;
    case CorruptionKind::Brightness: shift_intensity(x, severity::kBrightnessAdd[s]); break;
    case CorruptionKind::Contrast: scale_contrast(x, severity::kContrastScale[s], channels); break;
    case CorruptionKind::BoxBlur: window_blur(x, shape, severity::kBoxBlurKernel[s], severity::kBoxBlurKernel[s]); break;
    case CorruptionKind::MotionBlur: window_blur(x, shape, 1, severity::kMotionBlurKernel[s]); break;
    case CorruptionKind::OverExposure: shift_intensity(x, severity::kExposureShift[s]); break;
    case CorruptionKind::UnderExposure: shift_intensity(x, -severity::kExposureShift[s]); break;
  }
  clip_unit(x);
}

/// Corrupts every sample; sample i draws from its own stream derive_seed(seed, i), so the
/// result does not depend on processing order.
inline LabeledDataset corrupt(LabeledDataset ds, const CorruptionSpec& spec) {
  if (spec.severity < 1 || spec.severity > 5) throw ParameterError("corruption severity must lie in [1,5]");
  if (is_spatial(spec.kind) && !ds.shape.is_image())
    throw ShapeError(to_string(spec.kind) + " needs image-shaped data");
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    SplitMix64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    Vector x = ds.samples.col(i);
    corrupt_sample(x, ds.shape, spec.kind, spec.severity, rng);
    ds.samples.col(i) = x;
  }
  return ds;
}

/// Original set plus `per_spec_count` corrupted copies per spec, drawn without replacement.
inline LabeledDataset augment_with_noise(const LabeledDataset& train, const std::vector<CorruptionSpec>& specs,
                                         Eigen::Index per_spec_count, std::uint64_t seed) {
  if (per_spec_count < 0 || per_spec_count > train.size())
    throw ParameterError("per-spec augmentation count exceeds the training set");
  LabeledDataset out = train;
  if (per_spec_count == 0) return out;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(train.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    shuffle(idx, rng);
    idx.resize(static_cast<std::size_t>(per_spec_count));
    out.append(corrupt(train.subset(idx), specs[k]));
  }
  return out;
}

}  // namespace introspect
