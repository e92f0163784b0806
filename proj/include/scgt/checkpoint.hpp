#pragma once

// JSON checkpoints. Layout:
//
//   {
//     "format": "scgt-checkpoint", "version": 1,
//     "model": { "n_nodes", "d_pe", "layer_dims", "n_heads", "k_r",
//                "task", "mode", "tie_theta1" },
//     "target_scaler": { "mean", "scale" },
//     "threshold": <adjacency threshold the model was trained with>,
//     "tensors": [ { "name": "layers.0.theta1", "shape": [rows, cols],
//                    "data": [row-major values] }, ... ]
//   }
//
// Doubles are written in shortest round-trip form, so save/load is bit-exact.

#include "scgt/core.hpp"
#include "scgt/model.hpp"
#include "scgt/train.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace scgt {

inline constexpr const char* kCheckpointFormat = "scgt-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Params params;
  TargetScaler scaler;
  double threshold = 0.0;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"n_nodes", c.n_nodes}, {"d_pe", c.d_pe},
          {"layer_dims", c.layer_dims}, {"n_heads", c.n_heads},
          {"k_r", c.k_r}, {"task", std::string(to_string(c.task))},
          {"mode", std::string(to_string(c.mode))}, {"tie_theta1", c.tie_theta1}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_nodes = j.at("n_nodes").get<int>();
  c.d_pe = j.at("d_pe").get<int>();
  c.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  c.n_heads = j.at("n_heads").get<int>();
  c.k_r = j.at("k_r").get<int>();
  c.task = parse_task(j.at("task").get<std::string>());
  c.mode = parse_mode(j.at("mode").get<std::string>());
  c.tie_theta1 = j.at("tie_theta1").get<bool>();
  c.validate();
  return c;
}

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  nlohmann::json tensors = nlohmann::json::array();
  for_each_tensor(ck.params, [&](const std::string& name, const auto& t) {
    tensors.push_back({{"name", name},
                       {"shape", {t.rows(), t.cols()}},
                       {"data", std::vector<double>(t.data(), t.data() + t.size())}});
  });
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"model", model_config_to_json(ck.config)},
          {"target_scaler", {{"mean", ck.scaler.mean}, {"scale", ck.scaler.scale}}},
          {"threshold", ck.threshold},
          {"tensors", tensors}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != kCheckpointFormat) throw IoError("not an scgt checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw IoError("unsupported checkpoint version");
  Checkpoint ck;
  ck.config = model_config_from_json(j.at("model"));
  ck.scaler.mean = j.at("target_scaler").at("mean").get<double>();
  ck.scaler.scale = j.at("target_scaler").at("scale").get<double>();
  ck.threshold = j.value("threshold", 0.0);

  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;

  // Shapes come from the config; every expected tensor must be present.
  ck.params = init_params(ck.config, 0);
  std::size_t used = 0;
  for_each_tensor(ck.params, [&](const std::string& name, auto& t) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("checkpoint is missing tensor " + name);
    const auto& entry = *it->second;
    const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
    const auto data = entry.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() ||
        static_cast<Eigen::Index>(data.size()) != t.size()) {
      throw IoError("checkpoint tensor " + name + " has the wrong shape");
    }
    std::copy(data.begin(), data.end(), t.data());
    ++used;
  });
  if (used != by_name.size()) throw IoError("checkpoint has tensors the model does not use");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << checkpoint_to_json(ck).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace scgt
