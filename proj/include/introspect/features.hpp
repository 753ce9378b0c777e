#pragma once

// Feature tables: one row per sample, d*N feature columns then the label.
// Stored as CSV or as raw little-endian float64 rows, with a JSON sidecar.

#include <bit>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "introspect/io.hpp"
#include "introspect/nn.hpp"
#include "json.hpp"

namespace introspect {

struct FeatureTableMeta {
  Eigen::Index penultimate_dim = 0;
  Eigen::Index num_classes = 0;
  LossSpec loss;
  std::string checkpoint_sha256;
  Eigen::Index count = 0;
  std::string encoding = "csv";  // "csv" or "f64"
};

struct FeatureTable {
  Matrix features;  // (d*N) x count
  std::vector<int> labels;
  FeatureTableMeta meta;
};

inline std::filesystem::path sidecar_path(const std::filesystem::path& table) {
  return std::filesystem::path(table.string() + ".json");
}

inline nlohmann::json to_json(const FeatureTableMeta& m) {
  nlohmann::json j{{"format", "introspect-features"},
                   {"version", 1},
                   {"encoding", m.encoding},
                   {"penultimate_dim", m.penultimate_dim},
                   {"num_classes", m.num_classes},
                   {"feature_length", m.penultimate_dim * m.num_classes},
                   {"count", m.count},
                   {"loss", to_string(m.loss.kind)},
                   {"scale", "per-sample max-abs, all-zero -> factor 1"},
                   {"vectorization", "column-major (column j = filter j)"},
                   {"label_column", "last"},
                   {"checkpoint_sha256", m.checkpoint_sha256}};
  if (m.loss.kind == LossKind::MseM) j["m_scale"] = m.loss.m_scale;
  return j;
}

inline void save_feature_table(const FeatureTable& t, const std::filesystem::path& path) {
  const Eigen::Index len = t.meta.penultimate_dim * t.meta.num_classes;
  if (t.features.cols() != static_cast<Eigen::Index>(t.labels.size()))
    throw ShapeError("feature count does not match label count");
  if (t.features.cols() > 0 && t.features.rows() != len) throw ShapeError("feature length does not match d*N");
  FeatureTableMeta meta = t.meta;
  meta.count = t.features.cols();
  std::string bytes;
  if (meta.encoding == "csv") {
    for (Eigen::Index i = 0; i < t.features.cols(); ++i) {
      for (Eigen::Index r = 0; r < len; ++r) bytes += io::format_double(t.features(r, i)) + ",";
      bytes += std::to_string(t.labels[static_cast<std::size_t>(i)]) + "\n";
    }
  } else if (meta.encoding == "f64") {
    static_assert(std::endian::native == std::endian::little, "f64 tables assume a little-endian host");
    bytes.resize(static_cast<std::size_t>(t.features.cols() * (len + 1)) * sizeof(double));
    char* out = bytes.data();
    for (Eigen::Index i = 0; i < t.features.cols(); ++i) {
      std::memcpy(out, t.features.col(i).data(), static_cast<std::size_t>(len) * sizeof(double));
      out += len * static_cast<Eigen::Index>(sizeof(double));
      const double y = t.labels[static_cast<std::size_t>(i)];
      std::memcpy(out, &y, sizeof(double));
      out += sizeof(double);
    }
  } else {
    throw ParameterError("unknown feature encoding '" + meta.encoding + "'");
  }
  io::write_file(path, bytes);
  io::write_file(sidecar_path(path), to_json(meta).dump(2) + "\n");
}

inline FeatureTable load_feature_table(const std::filesystem::path& path) {
  FeatureTable t;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(sidecar_path(path)));
    if (j.at("format") != "introspect-features") throw FormatError("not a feature-table sidecar");
    t.meta.penultimate_dim = j.at("penultimate_dim").get<Eigen::Index>();
    t.meta.num_classes = j.at("num_classes").get<Eigen::Index>();
    t.meta.count = j.at("count").get<Eigen::Index>();
    t.meta.encoding = j.at("encoding").get<std::string>();
    t.meta.checkpoint_sha256 = j.at("checkpoint_sha256").get<std::string>();
    const LossKind kind = loss_kind_from_string(j.at("loss").get<std::string>());
    t.meta.loss = kind == LossKind::MseM ? LossSpec::mse_m(j.at("m_scale").get<double>()) : LossSpec::cross_entropy();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed feature sidecar: ") + e.what());
  }
  const Eigen::Index len = t.meta.penultimate_dim * t.meta.num_classes;
  const std::string bytes = io::read_file(path);
  t.features.resize(len, t.meta.count);
  t.labels.resize(static_cast<std::size_t>(t.meta.count));
  if (t.meta.encoding == "f64") {
    if (bytes.size() != static_cast<std::size_t>(t.meta.count * (len + 1)) * sizeof(double))
      throw FormatError("feature table size does not match its sidecar");
    const char* in = bytes.data();
    for (Eigen::Index i = 0; i < t.meta.count; ++i) {
      std::memcpy(t.features.col(i).data(), in, static_cast<std::size_t>(len) * sizeof(double));
      in += len * static_cast<Eigen::Index>(sizeof(double));
      double y = 0;
      std::memcpy(&y, in, sizeof(double));
      in += sizeof(double);
      t.labels[static_cast<std::size_t>(i)] = static_cast<int>(y);
    }
    return t;
  }
  std::istringstream lines(bytes);
  std::string line;
  Eigen::Index row = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    if (row >= t.meta.count) throw FormatError("feature table has more rows than its sidecar");
    std::istringstream cells(line);
    std::string cell;
    Eigen::Index c = 0;
    while (std::getline(cells, cell, ',')) {
      try {
        if (c < len) t.features(c, row) = std::stod(cell);
        else if (c == len) t.labels[static_cast<std::size_t>(row)] = std::stoi(cell);
      } catch (const std::exception&) {
        throw FormatError("feature table line " + std::to_string(row + 1) + ": bad value '" + cell + "'");
      }
      ++c;
    }
    if (c != len + 1) throw FormatError("feature table line " + std::to_string(row + 1) + ": wrong column count");
    ++row;
  }
  if (row != t.meta.count) throw FormatError("feature table has fewer rows than its sidecar");
  return t;
}

}  // namespace introspect
