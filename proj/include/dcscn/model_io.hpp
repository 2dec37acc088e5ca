#pragma once

// JSON persistence for NetworkModel.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dcscn/errors.hpp"
#include "dcscn/network.hpp"

namespace dcscn {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix2D& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

inline Matrix2D matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw IoError("model json: matrix data length does not match rows x cols");
  Matrix2D m(rows, cols);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

}  // namespace detail

inline nlohmann::json model_to_json(const NetworkModel& model) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    nlohmann::json kernels = nlohmann::json::array();
    for (const auto& k : layer.kernels) {
      kernels.push_back({{"xi", k.xi}, {"r", k.r}, {"k", k.k}, {"bias", k.bias}, {"weights", k.weights.values()}});
    }
    layers.push_back({{"pool_after", layer.pool_after}, {"kernels", std::move(kernels)}});
  }
  nlohmann::json layout = nlohmann::json::array();
  for (const auto& e : model.layout) {
    layout.push_back({{"layer", e.layer}, {"kernel", e.kernel}, {"offset", e.offset}, {"len", e.length}});
  }
  return {{"version", kModelFormatVersion},
          {"input", {{"h", model.input.height}, {"w", model.input.width}, {"channels", model.input.channels}}},
          {"classes", model.class_names},
          {"layers", std::move(layers)},
          {"readout", detail::matrix_to_json(model.readout)},
          {"layout", std::move(layout)}};
}

inline NetworkModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw IoError("model json: unsupported version " + j.at("version").dump());
    }
    NetworkModel model;
    const auto& in = j.at("input");
    model.input = {in.at("h").get<std::size_t>(), in.at("w").get<std::size_t>(), in.at("channels").get<std::size_t>()};
    model.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const auto& jl : j.at("layers")) {
      LayerSpec layer;
      layer.pool_after = jl.at("pool_after").get<bool>();
      for (const auto& jk : jl.at("kernels")) {
        DoGKernel k;
        k.xi = jk.at("xi").get<double>();
        k.r = jk.at("r").get<double>();
        k.k = jk.at("k").get<std::size_t>();
        k.bias = jk.at("bias").get<double>();
        const auto w = jk.at("weights").get<std::vector<double>>();
        if (w.size() != k.k * k.k) throw IoError("model json: kernel weights do not match k");
        k.weights = Matrix2D(k.k, k.k);
        std::copy(w.begin(), w.end(), k.weights.values().begin());
        layer.kernels.push_back(std::move(k));
      }
      model.layers.push_back(std::move(layer));
    }
    model.readout = detail::matrix_from_json(j.at("readout"));
    for (const auto& je : j.at("layout")) {
      model.layout.push_back({je.at("layer").get<std::size_t>(), je.at("kernel").get<std::size_t>(),
                              je.at("offset").get<std::size_t>(), je.at("len").get<std::size_t>()});
    }
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model json: ") + e.what());
  } catch (const ShapeError& e) {
    throw IoError(std::string("model json: ") + e.what());
  }
}

inline void save_model(const NetworkModel& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << model_to_json(model).dump(1) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

inline NetworkModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dcscn
