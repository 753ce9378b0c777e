#pragma once

// Network checkpoints as versioned JSON: layer dims, activation tags, row-major weights.

#include <filesystem>
#include <string>

#include "introspect/io.hpp"
#include "introspect/nn.hpp"
#include "json.hpp"

namespace introspect {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json j;
  j["format"] = "introspect-network";
  j["version"] = kCheckpointVersion;
  j["num_classes"] = net.num_classes();
  j["penultimate_dim"] = net.penultimate_dim();
  auto& layers = j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json lj;
    lj["fan_in"] = l.fan_in();
    lj["fan_out"] = l.fan_out();
    lj["activation"] = to_string(l.activation);
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    lj["weights"] = std::move(w);
    lj["bias"] = std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back(std::move(lj));
  }
  return j;
}

inline Network network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "introspect-network") throw FormatError("not a network checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    std::vector<DenseLayer> layers;
    for (const auto& lj : j.at("layers")) {
      const auto fan_in = lj.at("fan_in").get<Eigen::Index>();
      const auto fan_out = lj.at("fan_out").get<Eigen::Index>();
      if (fan_in <= 0 || fan_out <= 0) throw FormatError("checkpoint layer has non-positive dimension");
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != fan_in * fan_out)
        throw FormatError("checkpoint weight array length does not match fan_in*fan_out");
      if (static_cast<Eigen::Index>(b.size()) != fan_out)
        throw FormatError("checkpoint bias length does not match fan_out");
      DenseLayer layer;
      layer.weights.resize(fan_in, fan_out);
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < fan_in; ++r)
        for (Eigen::Index c = 0; c < fan_out; ++c) layer.weights(r, c) = w[k++];
      layer.bias = Eigen::Map<const Vector>(b.data(), fan_out);
      layer.activation = activation_from_string(lj.at("activation").get<std::string>());
      layers.push_back(std::move(layer));
    }
    Network net(std::move(layers));
    if (j.contains("num_classes") && j["num_classes"].get<Eigen::Index>() != net.num_classes())
      throw FormatError("checkpoint num_classes disagrees with its layers");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint violates network invariants: ") + e.what());
  }
}

inline void save_network(const Network& net, const std::filesystem::path& path) {
  io::write_file(path, to_json(net).dump(1) + "\n");
}

inline Network load_network(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path.string() + "' at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  return network_from_json(j);
}

}  // namespace introspect
