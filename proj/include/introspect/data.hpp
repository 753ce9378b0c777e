#pragma once

// Labeled datasets, IDX/CSV ingestion, seeded synthetic generators, and
// channel-wise normalization.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "introspect/io.hpp"
#include "introspect/nn.hpp"
#include "introspect/rng.hpp"

namespace introspect {

/// Image geometry. Pixels are stored channel-major: index = (c*H + row)*W + col.
/// A zero height marks flat (non-image) data.
struct ImageShape {
  int height = 0;
  int width = 0;
  int channels = 1;

  bool is_image() const { return height > 0 && width > 0 && channels > 0; }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(height) * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

struct LabeledDataset {
  Matrix samples;  // one column per sample
  std::vector<int> labels;
  ImageShape shape;
  int num_classes = 0;

  Eigen::Index size() const { return samples.cols(); }
  Eigen::Index dim() const { return samples.rows(); }
  bool empty() const { return samples.cols() == 0; }

  void validate() const {
    if (static_cast<Eigen::Index>(labels.size()) != samples.cols())
      throw ShapeError("label count does not match sample count");
    if (shape.is_image() && !empty() && shape.pixels() != samples.rows())
      throw ShapeError("image shape does not match sample length");
    for (int y : labels)
      if (y < 0 || y >= num_classes) throw ParameterError("label " + std::to_string(y) + " out of range");
  }

  LabeledDataset subset(std::span<const Eigen::Index> indices) const {
    LabeledDataset out;
    out.shape = shape;
    out.num_classes = num_classes;
    out.samples.resize(samples.rows(), static_cast<Eigen::Index>(indices.size()));
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      out.samples.col(static_cast<Eigen::Index>(i)) = samples.col(indices[i]);
      out.labels.push_back(labels[static_cast<std::size_t>(indices[i])]);
    }
    return out;
  }

  /// Appends the samples of `other` (same dimensionality).
  void append(const LabeledDataset& other) {
    if (other.empty()) return;
    if (!empty() && other.dim() != dim()) throw ShapeError("cannot append datasets of different dimensionality");
    Matrix joined(other.dim(), size() + other.size());
    if (!empty()) joined.leftCols(size()) = samples;
    joined.rightCols(other.size()) = other.samples;
    samples = std::move(joined);
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    num_classes = std::max(num_classes, other.num_classes);
    if (!shape.is_image()) shape = other.shape;
  }
};

// ---------------------------------------------------------------------------
// IDX (big-endian, magic 0x00000803 images / 0x00000801 labels)

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size())
    throw FormatError(what + ": truncated header at byte offset " + std::to_string(offset));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

inline void put_be32(std::string& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Reads an IDX image/label pair; pixels are scaled to [0,1].
inline LabeledDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const std::string img = io::read_file(images_path);
  const std::string lab = io::read_file(labels_path);
  const std::string iname = images_path.string(), lname = labels_path.string();

  const std::uint32_t imagic = detail::read_be32(img, 0, iname);
  if (imagic != kIdxImageMagic) throw FormatError(iname + ": bad image magic at byte offset 0");
  const std::uint32_t lmagic = detail::read_be32(lab, 0, lname);
  if (lmagic != kIdxLabelMagic) throw FormatError(lname + ": bad label magic at byte offset 0");

  const std::uint32_t count = detail::read_be32(img, 4, iname);
  const std::uint32_t rows = detail::read_be32(img, 8, iname);
  const std::uint32_t cols = detail::read_be32(img, 12, iname);
  const std::uint32_t lcount = detail::read_be32(lab, 4, lname);
  if (count != lcount)
    throw FormatError("count mismatch: " + std::to_string(count) + " images vs " + std::to_string(lcount) +
                      " labels (byte offset 4)");
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::size_t need_img = 16 + static_cast<std::size_t>(count) * pixels;
  if (img.size() < need_img)
    throw FormatError(iname + ": truncated pixel data, expected " + std::to_string(need_img) + " bytes, file ends at byte offset " +
                      std::to_string(img.size()));
  if (lab.size() < 8 + static_cast<std::size_t>(count))
    throw FormatError(lname + ": truncated label data, file ends at byte offset " + std::to_string(lab.size()));

  LabeledDataset ds;
  ds.shape = {static_cast<int>(rows), static_cast<int>(cols), 1};
  ds.samples.resize(static_cast<Eigen::Index>(pixels), count);
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t base = 16 + static_cast<std::size_t>(i) * pixels;
    for (std::size_t p = 0; p < pixels; ++p)
      ds.samples(static_cast<Eigen::Index>(p), i) = static_cast<unsigned char>(img[base + p]) / 255.0;
    ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    ds.num_classes = std::max(ds.num_classes, ds.labels[i] + 1);
  }
  return ds;
}

/// Writes an image dataset as an IDX pair; pixels are quantized to round(255 x).
inline void save_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  if (!ds.shape.is_image() || ds.shape.channels != 1) throw ShapeError("IDX output needs single-channel images");
  std::string img, lab;
  detail::put_be32(img, kIdxImageMagic);
  detail::put_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::put_be32(img, static_cast<std::uint32_t>(ds.shape.height));
  detail::put_be32(img, static_cast<std::uint32_t>(ds.shape.width));
  detail::put_be32(lab, kIdxLabelMagic);
  detail::put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    for (Eigen::Index p = 0; p < ds.dim(); ++p)
      img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(ds.samples(p, i), 0.0, 1.0) * 255.0))));
    lab.push_back(static_cast<char>(ds.labels[static_cast<std::size_t>(i)]));
  }
  io::write_file(images_path, img);
  io::write_file(labels_path, lab);
}

// ---------------------------------------------------------------------------
// Headerless CSV: label, then features.

inline LabeledDataset load_csv(const std::filesystem::path& path, ImageShape shape = {}) {
  const std::string text = io::read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::size_t line_no = 0, offset = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell = line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end == cell.c_str() || *end != '\0')
        throw FormatError(path.string() + ": line " + std::to_string(line_no) + " (byte offset " +
                          std::to_string(line_offset + pos) + "): bad number '" + cell + "'");
      vals.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (vals.size() < 2) throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has no features");
    const double label = vals.front();
    if (label < 0 || label != std::floor(label))
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has a non-integer label");
    if (!rows.empty() && vals.size() - 1 != rows.front().size())
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has a different column count");
    labels.push_back(static_cast<int>(label));
    rows.emplace_back(vals.begin() + 1, vals.end());
  }
  LabeledDataset ds;
  ds.shape = shape;
  if (rows.empty()) return ds;
  ds.samples.resize(static_cast<Eigen::Index>(rows.front().size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t p = 0; p < rows[i].size(); ++p)
      ds.samples(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) = rows[i][p];
  ds.labels = std::move(labels);
  ds.num_classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

inline void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  std::string out;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    out += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index p = 0; p < ds.dim(); ++p) {
      out += ',';
      out += io::format_double(ds.samples(p, i));
    }
    out += '\n';
  }
  io::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Gaussian clusters around seeded centers drawn uniformly from [0,1]^dim.
/// Samples are stored class-major.
inline LabeledDataset synth_blobs(int num_classes, int dim, int per_class, double spread, std::uint64_t seed) {
  if (num_classes <= 0 || dim <= 0 || per_class <= 0) throw ParameterError("synth_blobs arguments must be positive");
  if (spread < 0.0) throw ParameterError("spread must be non-negative");
  SplitMix64 center_rng(derive_seed(seed, "centers"));
  Matrix centers(dim, num_classes);
  for (int c = 0; c < num_classes; ++c)
    for (int p = 0; p < dim; ++p) centers(p, c) = center_rng.uniform();
  SplitMix64 rng(derive_seed(seed, "samples"));
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.samples.resize(dim, static_cast<Eigen::Index>(num_classes) * per_class);
  Eigen::Index k = 0;
  for (int c = 0; c < num_classes; ++c)
    for (int s = 0; s < per_class; ++s, ++k) {
      for (int p = 0; p < dim; ++p) ds.samples(p, k) = centers(p, c) + spread * rng.normal();
      ds.labels.push_back(c);
    }
  return ds;
}

/// Seven-segment glyph rendering. Segment bits: a=top, b=upper right, c=lower right,
/// d=bottom, e=lower left, f=upper left, g=middle.
namespace glyphs {

enum Segment : unsigned { A = 1, B = 2, C = 4, D = 8, E = 16, F = 32, G = 64 };

inline constexpr std::array<unsigned, 10> kDigits = {
    A | B | C | D | E | F,      // 0
    B | C,                      // 1
    A | B | D | E | G,          // 2
    A | B | C | D | G,          // 3
    B | C | F | G,              // 4
    A | C | D | F | G,          // 5
    A | C | D | E | F | G,      // 6
    A | B | C,                  // 7
    A | B | C | D | E | F | G,  // 8
    A | B | C | D | F | G,      // 9
};

// A b C d E F H L P U; none coincides with a digit pattern.
inline constexpr std::array<unsigned, 10> kLetters = {
    A | B | C | E | F | G, C | D | E | F | G, A | D | E | F, B | C | D | E | G, A | D | E | F | G,
    A | E | F | G,         B | C | E | F | G, D | E | F,     A | B | E | F | G, B | C | D | E | F,
};

struct Stroke {
  double x0, y0, x1, y1;
};

// Canonical segment endpoints on a 28x28 canvas (x right, y down).
inline Stroke canonical(unsigned seg) {
  constexpr double l = 9.0, r = 19.0, t = 5.0, m = 14.0, b = 23.0;
  switch (seg) {
    case A: return {l, t, r, t};
    case B: return {r, t, r, m};
    case C: return {r, m, r, b};
    case D: return {l, b, r, b};
    case E: return {l, m, l, b};
    case F: return {l, t, l, m};
    default: return {l, m, r, m};
  }
}

inline double segment_distance(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

/// Renders one handwriting-like instance: jittered endpoints, random affine
/// (rotation, shear, scale, translation), random stroke width and ink intensity.
inline Vector render(unsigned pattern, int size, SplitMix64& rng) {
  const double cx = size / 2.0, cy = size / 2.0, k = size / 28.0;
  const double theta = rng.uniform(-0.2, 0.2), shear = rng.uniform(-0.25, 0.25);
  const double scale = rng.uniform(0.85, 1.15);
  const double tx = rng.uniform(-2.5, 2.5) * k, ty = rng.uniform(-2.5, 2.5) * k;
  const double width = rng.uniform(1.2, 2.4) * k, ink = rng.uniform(0.75, 1.0);
  const double cs = std::cos(theta), sn = std::sin(theta);
  auto map = [&](double x, double y) {
    x = (x * k - cx) * scale;
    y = (y * k - cy) * scale;
    x += shear * y;
    return std::pair{cs * x - sn * y + cx + tx, sn * x + cs * y + cy + ty};
  };
  std::vector<Stroke> strokes;
  for (unsigned seg = A; seg <= G; seg <<= 1) {
    if (!(pattern & seg)) continue;
    Stroke s = canonical(seg);
    s.x0 += rng.normal(0.0, 0.7);
    s.y0 += rng.normal(0.0, 0.7);
    s.x1 += rng.normal(0.0, 0.7);
    s.y1 += rng.normal(0.0, 0.7);
    auto [x0, y0] = map(s.x0, s.y0);
    auto [x1, y1] = map(s.x1, s.y1);
    strokes.push_back({x0, y0, x1, y1});
  }
  Vector img = Vector::Zero(static_cast<Eigen::Index>(size) * size);
  for (int row = 0; row < size; ++row)
    for (int col = 0; col < size; ++col) {
      double d = 1e9;
      for (const auto& s : strokes) d = std::min(d, segment_distance(col + 0.5, row + 0.5, s));
      img(row * size + col) = ink * std::clamp(width / 2.0 + 0.5 - d, 0.0, 1.0);
    }
  return img;
}

}  // namespace glyphs

namespace detail {

inline LabeledDataset render_set(std::span<const unsigned> patterns, int per_class, int size, std::uint64_t seed) {
  if (per_class < 0 || size <= 0) throw ParameterError("glyph dataset arguments must be positive");
  LabeledDataset ds;
  ds.num_classes = static_cast<int>(patterns.size());
  ds.shape = {size, size, 1};
  ds.samples.resize(static_cast<Eigen::Index>(size) * size, static_cast<Eigen::Index>(patterns.size()) * per_class);
  Eigen::Index k = 0;
  // Interleave classes so any prefix is class-balanced.
  for (int s = 0; s < per_class; ++s)
    for (std::size_t c = 0; c < patterns.size(); ++c, ++k) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
      ds.samples.col(k) = glyphs::render(patterns[c], size, rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

}  // namespace detail

/// MNIST-style 10-class digit images (seven-segment handwriting stand-in), pixels in [0,1].
inline LabeledDataset synth_digits(int per_class, std::uint64_t seed, int size = 28) {
  return detail::render_set(glyphs::kDigits, per_class, size, seed);
}

/// Same renderer over ten letter glyphs never seen by a digit classifier.
inline LabeledDataset synth_letters(int per_class, std::uint64_t seed, int size = 28) {
  return detail::render_set(glyphs::kLetters, per_class, size, seed);
}

/// Uniform-noise images with the geometry of `like`; labels are 0.
inline LabeledDataset uniform_noise_images(const LabeledDataset& like, Eigen::Index count, std::uint64_t seed) {
  SplitMix64 rng(seed);
  LabeledDataset ds;
  ds.shape = like.shape;
  ds.num_classes = std::max(1, like.num_classes);
  ds.samples.resize(like.dim(), count);
  for (Eigen::Index i = 0; i < count; ++i)
    for (Eigen::Index p = 0; p < like.dim(); ++p) ds.samples(p, i) = rng.uniform();
  ds.labels.assign(static_cast<std::size_t>(count), 0);
  return ds;
}

/// Deterministic split into (first, second) where `second` receives round(fraction * n)
/// samples drawn without replacement.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double fraction, std::uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0) throw ParameterError("split fraction must lie in [0,1)");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  SplitMix64 rng(seed);
  shuffle(idx, rng);
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<Eigen::Index> second(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<Eigen::Index> first(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {ds.subset(first), ds.subset(second)};
}

// ---------------------------------------------------------------------------
// Normalization

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

namespace detail {
inline int channel_count(const LabeledDataset& ds) { return ds.shape.is_image() ? ds.shape.channels : 1; }
}  // namespace detail

/// Per-channel population mean and standard deviation. Flat data is one channel.
inline ChannelStats channel_stats(const LabeledDataset& ds) {
  if (ds.empty()) throw ParameterError("cannot compute statistics of an empty dataset");
  const int ch = detail::channel_count(ds);
  const Eigen::Index plane = ds.dim() / ch;
  ChannelStats s;
  for (int c = 0; c < ch; ++c) {
    const auto block = ds.samples.middleRows(c * plane, plane);
    const double n = static_cast<double>(block.size());
    const double mean = block.sum() / n;
    const double var = (block.array() - mean).square().sum() / n;
    s.mean.push_back(mean);
    s.stddev.push_back(std::sqrt(var));
  }
  return s;
}

/// x -> (x - mean) / std per channel.
inline LabeledDataset normalize(LabeledDataset ds, const ChannelStats& stats) {
  const int ch = detail::channel_count(ds);
  if (static_cast<int>(stats.mean.size()) != ch || static_cast<int>(stats.stddev.size()) != ch)
    throw ShapeError("normalization statistics do not match channel count");
  for (double s : stats.stddev)
    if (!(s > 0.0)) throw ParameterError("normalization std must be positive");
  const Eigen::Index plane = ds.dim() / ch;
  for (int c = 0; c < ch; ++c)
    ds.samples.middleRows(c * plane, plane) =
        ((ds.samples.middleRows(c * plane, plane).array() - stats.mean[c]) / stats.stddev[c]).matrix();
  return ds;
}

inline LabeledDataset denormalize(LabeledDataset ds, const ChannelStats& stats) {
  const int ch = detail::channel_count(ds);
  if (static_cast<int>(stats.mean.size()) != ch) throw ShapeError("normalization statistics do not match channel count");
  const Eigen::Index plane = ds.dim() / ch;
  for (int c = 0; c < ch; ++c)
    ds.samples.middleRows(c * plane, plane) =
        (ds.samples.middleRows(c * plane, plane).array() * stats.stddev[c] + stats.mean[c]).matrix();
  return ds;
}

}  // namespace introspect
