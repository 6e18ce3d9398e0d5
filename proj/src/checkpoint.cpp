#include "metampc/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "metampc/errors.hpp"

namespace metampc {

using json = nlohmann::json;

void save_checkpoint(const MlpModel& model, const std::string& path) {
  json j;
  j["layer_sizes"] = model.layer_sizes;
  j["activation"] = to_string(model.activation);
  json weights = json::array();
  for (const auto& w : model.weights) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
  }
  j["weights"] = std::move(weights);
  json biases = json::array();
  for (const auto& b : model.biases) {
    json vec = json::array();
    for (Eigen::Index i = 0; i < b.size(); ++i) vec.push_back(b(i));
    biases.push_back(std::move(vec));
  }
  j["biases"] = std::move(biases);

  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << j.dump(1) << "\n";
}

MlpModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  MlpModel model;
  try {
    model.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    model.activation = activation_from_string(j.at("activation").get<std::string>());
    if (model.layer_sizes.size() < 2) throw ConfigError("checkpoint: need at least 2 layers");
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != model.layer_sizes.size() - 1 || biases.size() != weights.size()) {
      throw ConfigError("checkpoint: layer count mismatch");
    }
    for (std::size_t l = 0; l + 1 < model.layer_sizes.size(); ++l) {
      const int rows = model.layer_sizes[l + 1];
      const int cols = model.layer_sizes[l];
      Eigen::MatrixXd w(rows, cols);
      const auto& jw = weights.at(l);
      if (int(jw.size()) != rows) throw ConfigError("checkpoint: weight row count mismatch");
      for (int r = 0; r < rows; ++r) {
        const auto& jrow = jw.at(r);
        if (int(jrow.size()) != cols) throw ConfigError("checkpoint: weight col count mismatch");
        for (int c = 0; c < cols; ++c) w(r, c) = jrow.at(c).get<double>();
      }
      const auto& jb = biases.at(l);
      if (int(jb.size()) != rows) throw ConfigError("checkpoint: bias length mismatch");
      Eigen::VectorXd b(rows);
      for (int r = 0; r < rows; ++r) b(r) = jb.at(r).get<double>();
      model.weights.push_back(std::move(w));
      model.biases.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint '" + path + "': " + e.what());
  }
  if (!flatten_params(model).allFinite()) {
    throw NumericError("checkpoint '" + path + "': non-finite parameters");
  }
  return model;
}

}  // namespace metampc
