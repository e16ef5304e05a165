#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vquant/errors.hpp"
#include "vquant/mlp.hpp"
#include "vquant/tensor_io.hpp"
#include "vquant/version.hpp"

namespace vquant {

// Model checkpoint: a directory holding one .vqtn tensor per weight/bias and
// a manifest.json naming the layer shapes.
inline void save_model(const std::string& dir, const MlpNetwork& net) {
  net.validate();
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "vquant-mlp";
  manifest["version"] = kToolkitVersion;
  manifest["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const std::string w_name = "layer" + std::to_string(l) + "_weights.vqtn";
    const std::string b_name = "layer" + std::to_string(l) + "_bias.vqtn";
    write_tensor((fs::path(dir) / w_name).string(), net.layers[l].weights);
    write_tensor((fs::path(dir) / b_name).string(), net.layers[l].bias);
    manifest["layers"].push_back({{"weights", w_name},
                                  {"bias", b_name},
                                  {"fan_out", net.layers[l].weights.rows()},
                                  {"fan_in", net.layers[l].weights.cols()}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw FormatError(dir + ": cannot write manifest.json");
  out << manifest.dump(2) << "\n";
}

inline MlpNetwork load_model(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError(manifest_path.string() + ": cannot open");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "vquant-mlp")
    throw FormatError(manifest_path.string() + ": not a model manifest");
  if (!manifest.contains("layers") || !manifest["layers"].is_array() ||
      manifest["layers"].empty())
    throw FormatError(manifest_path.string() + ": missing layers");

  MlpNetwork net;
  for (const auto& entry : manifest["layers"]) {
    if (!entry.contains("weights") || !entry.contains("bias"))
      throw FormatError(manifest_path.string() + ": malformed layer entry");
    MlpLayer layer;
    layer.weights = read_tensor((fs::path(dir) / entry["weights"].get<std::string>()).string());
    layer.bias = read_tensor((fs::path(dir) / entry["bias"].get<std::string>()).string());
    if (entry.contains("fan_out") &&
        (layer.weights.rank() != 2 ||
         layer.weights.rows() != entry["fan_out"].get<std::size_t>() ||
         layer.weights.cols() != entry["fan_in"].get<std::size_t>()))
      throw FormatError(manifest_path.string() + ": tensor shape differs from manifest");
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace vquant
