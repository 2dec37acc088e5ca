#pragma once

// Run configuration: one flat JSON object with dotted keys.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dcscn/builder.hpp"
#include "dcscn/data.hpp"
#include "dcscn/errors.hpp"
#include "dcscn/interpret.hpp"
#include "dcscn/prune.hpp"

namespace dcscn {

/// Configuration problems detected before any work starts.
struct ConfigError : ArgumentError {
  using ArgumentError::ArgumentError;
};

struct RunConfig {
  std::uint64_t seed = 20240521;
  std::string out = "out";
  std::size_t workers = 1;

  // "synthetic" generates the splits in memory; "folder" reads root/{train,val,test}.
  std::string data_source = "synthetic";
  std::string data_root;
  std::size_t synth_train_per_class = 50;
  std::size_t synth_val_per_class = 15;
  std::size_t synth_test_per_class = 25;
  std::size_t synth_size = 64;
  std::size_t crop = 0;  // 0: largest centred square
  std::size_t resize = 64;
  bool augment = false;
  double eta = 0.02;

  BuildConfig build = desk_build();
  DdpgConfig ddpg;

  std::size_t cam_layer = 0;  // 0: last layer
  double cam_theta = kDefaultTheta;
  std::size_t explain_images = 16;

  std::vector<std::string> warnings;

  /// Build settings sized for single-machine runs on 64x64 images.
  static BuildConfig desk_build() {
    BuildConfig b;
    b.ridge = 1.0;
    b.c_max = 6;
    b.l_max = 3;
    return b;
  }

  void validate() {
    warnings.clear();
    try {
      build.validate();
      ddpg.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError(e.what());
    }
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (data_source != "synthetic" && data_source != "folder") fail("data.source must be 'synthetic' or 'folder'");
    if (data_source == "folder" && data_root.empty()) fail("data.root is required when data.source is 'folder'");
    if (data_source == "synthetic") {
      if (synth_size < 32) fail("data.synthetic.size must be >= 32");
      if (synth_train_per_class == 0) fail("data.synthetic.train_per_class must be >= 1");
    }
    if (resize < build.k) fail("data.resize must be at least the kernel size");
    if (!(eta >= 0.0)) fail("data.eta must be >= 0");
    if (!(cam_theta >= 0.0 && cam_theta <= 1.0)) fail("cam.theta must be in [0, 1]");
    if (workers == 0) fail("workers must be >= 1");
    if (out.empty()) fail("out must not be empty");
    if (build.r_lo <= 1.0 && build.r_hi >= 1.0) {
      warnings.push_back("build.r range contains 1, where the DoG kernel is identically zero");
    }
  }
};

namespace detail {

template <typename T>
T config_value(const std::string& key, const nlohmann::json& v) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) throw ConfigError("");
    } else {
      if (!v.is_number()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' has the wrong type (" + v.dump() + ")");
  }
}

using Binder = std::function<void(RunConfig&, const std::string&, const nlohmann::json&)>;
using Getter = std::function<nlohmann::json(const RunConfig&)>;

struct KeyInfo {
  Binder set;
  Getter get;
};

template <typename T>
KeyInfo bind_key(T RunConfig::*field) {
  return {[field](RunConfig& c, const std::string& k, const nlohmann::json& v) { c.*field = config_value<T>(k, v); },
          [field](const RunConfig& c) { return nlohmann::json(c.*field); }};
}

template <typename S, typename T>
KeyInfo bind_key(S RunConfig::*section, T S::*field) {
  return {[section, field](RunConfig& c, const std::string& k, const nlohmann::json& v) {
            (c.*section).*field = config_value<T>(k, v);
          },
          [section, field](const RunConfig& c) { return nlohmann::json((c.*section).*field); }};
}

inline const std::map<std::string, KeyInfo>& config_keys() {
  static const std::map<std::string, KeyInfo> keys = {
      {"seed", bind_key(&RunConfig::seed)},
      {"out", bind_key(&RunConfig::out)},
      {"workers", bind_key(&RunConfig::workers)},
      {"data.source", bind_key(&RunConfig::data_source)},
      {"data.root", bind_key(&RunConfig::data_root)},
      {"data.synthetic.train_per_class", bind_key(&RunConfig::synth_train_per_class)},
      {"data.synthetic.val_per_class", bind_key(&RunConfig::synth_val_per_class)},
      {"data.synthetic.test_per_class", bind_key(&RunConfig::synth_test_per_class)},
      {"data.synthetic.size", bind_key(&RunConfig::synth_size)},
      {"data.crop", bind_key(&RunConfig::crop)},
      {"data.resize", bind_key(&RunConfig::resize)},
      {"data.augment", bind_key(&RunConfig::augment)},
      {"data.eta", bind_key(&RunConfig::eta)},
      {"build.error_limit", bind_key(&RunConfig::build, &BuildConfig::error_limit)},
      {"build.t_max", bind_key(&RunConfig::build, &BuildConfig::t_max)},
      {"build.xi_lo", bind_key(&RunConfig::build, &BuildConfig::xi_lo)},
      {"build.xi_hi", bind_key(&RunConfig::build, &BuildConfig::xi_hi)},
      {"build.r_lo", bind_key(&RunConfig::build, &BuildConfig::r_lo)},
      {"build.r_hi", bind_key(&RunConfig::build, &BuildConfig::r_hi)},
      {"build.k", bind_key(&RunConfig::build, &BuildConfig::k)},
      {"build.l_max", bind_key(&RunConfig::build, &BuildConfig::l_max)},
      {"build.c_max", bind_key(&RunConfig::build, &BuildConfig::c_max)},
      {"build.pool_every", bind_key(&RunConfig::build, &BuildConfig::pool_every)},
      {"build.r_max", bind_key(&RunConfig::build, &BuildConfig::r_max)},
      {"build.ridge", bind_key(&RunConfig::build, &BuildConfig::ridge)},
      {"build.gate_relax", bind_key(&RunConfig::build, &BuildConfig::gate_relax)},
      {"ddpg.gamma", bind_key(&RunConfig::ddpg, &DdpgConfig::gamma)},
      {"ddpg.replay_capacity", bind_key(&RunConfig::ddpg, &DdpgConfig::replay_capacity)},
      {"ddpg.step_size", bind_key(&RunConfig::ddpg, &DdpgConfig::step_size)},
      {"ddpg.tau", bind_key(&RunConfig::ddpg, &DdpgConfig::tau)},
      {"ddpg.batch_size", bind_key(&RunConfig::ddpg, &DdpgConfig::batch_size)},
      {"ddpg.episodes", bind_key(&RunConfig::ddpg, &DdpgConfig::episodes)},
      {"ddpg.hidden", bind_key(&RunConfig::ddpg, &DdpgConfig::hidden)},
      {"ddpg.noise_start", bind_key(&RunConfig::ddpg, &DdpgConfig::noise_start)},
      {"ddpg.noise_end", bind_key(&RunConfig::ddpg, &DdpgConfig::noise_end)},
      {"ddpg.beta", bind_key(&RunConfig::ddpg, &DdpgConfig::beta)},
      {"ddpg.a_max", bind_key(&RunConfig::ddpg, &DdpgConfig::a_max)},
      {"cam.layer", bind_key(&RunConfig::cam_layer)},
      {"cam.theta", bind_key(&RunConfig::cam_theta)},
      {"explain.images", bind_key(&RunConfig::explain_images)},
  };
  return keys;
}

}  // namespace detail

/// Applies a flat JSON object on top of the defaults. Unknown keys are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig cfg;
  const auto& keys = detail::config_keys();
  for (const auto& [key, value] : j.items()) {
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(cfg, key, value);
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot read " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, info] : detail::config_keys()) j[key] = info.get(cfg);
  return j;
}

}  // namespace dcscn
