#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcsd/common.hpp"
#include "mcsd/loss.hpp"
#include "mcsd/model.hpp"
#include "mcsd/optim.hpp"
#include "mcsd/synth.hpp"

namespace mcsd {

// Every tunable of a run in one flat JSON object. Each key has the default
// below; a file needs to list only what it changes. Unknown keys are fatal,
// so a typo cannot silently fall back to a default.
struct RunConfig {
  uint64_t seed = 7;
  std::string dtype = "f32";  // f32 | f64

  // model
  int64_t levels = 4;
  std::vector<int64_t> channels = {16, 32, 64, 128};
  int64_t input_channels = 1;
  std::string stmu = "dsta";
  int64_t stmu_depth = 2;
  std::vector<int64_t> atrous_rates = {1, 2, 4};
  int64_t heads = 4;
  double threshold = 0.5;
  int64_t seq_len = 6;
  int64_t input_height = 64;
  int64_t input_width = 64;
  bool multiscale = true;
  bool use_decoder = true;
  bool dsta_temporal = true;
  bool dsta_spatial = true;

  // loss
  double gamma_focal = 2.0;
  double prob_clamp = 1e-7;

  // optimizer
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // learning-rate schedule
  double plateau_factor = 0.5;
  int64_t plateau_patience = 3;
  double min_lr = 1e-6;
  double plateau_threshold = 1e-4;

  // training loop
  int64_t epochs = 10;
  int64_t batch_size = 2;

  // data
  std::string manifest;
  int64_t cadence_minutes = 0;  // 0 infers the cadence from the manifest
  int64_t interval_minutes = 30;
  int64_t groups = 5;
  int64_t test_group = 4;

  // synthetic generator
  int64_t synth_scenes = 8;
  int64_t synth_frames = 12;
  int64_t synth_image_size = 64;
  int64_t synth_blobs_min = 1;
  int64_t synth_blobs_max = 3;
  double synth_speed_min = 0.3;
  double synth_speed_max = 1.5;
  double synth_growth_min = 0.99;
  double synth_growth_max = 1.02;
  double synth_flicker_rate = 1.0;
  double synth_coverage_lo = 0.02;
  double synth_coverage_hi = 0.12;

  ModelConfig model_config() const {
    ModelConfig cfg;
    cfg.levels = levels;
    cfg.channels = channels;
    cfg.input_channels = input_channels;
    cfg.stmu_kind = parse_stmu_kind(stmu);
    cfg.stmu_depth = stmu_depth;
    cfg.atrous_rates = atrous_rates;
    cfg.heads = heads;
    cfg.threshold = threshold;
    cfg.seq_len = seq_len;
    cfg.input_height = input_height;
    cfg.input_width = input_width;
    cfg.multiscale = multiscale;
    cfg.use_decoder = use_decoder;
    cfg.dsta_temporal = dsta_temporal;
    cfg.dsta_spatial = dsta_spatial;
    return cfg;
  }

  FocalLossConfig focal_config() const {
    FocalLossConfig cfg;
    cfg.gamma = gamma_focal;
    cfg.clamp = prob_clamp;
    return cfg;
  }

  AdamConfig adam_config() const {
    AdamConfig cfg;
    cfg.lr = lr;
    cfg.beta1 = beta1;
    cfg.beta2 = beta2;
    cfg.eps = adam_eps;
    return cfg;
  }

  PlateauConfig plateau_config() const {
    PlateauConfig cfg;
    cfg.factor = plateau_factor;
    cfg.patience = plateau_patience;
    cfg.min_lr = min_lr;
    cfg.threshold = plateau_threshold;
    return cfg;
  }

  SyntheticConfig synthetic_config() const {
    SyntheticConfig cfg;
    cfg.seed = seed;
    cfg.scenes = synth_scenes;
    cfg.frames_per_scene = synth_frames;
    cfg.image_size = synth_image_size;
    cfg.blobs_min = synth_blobs_min;
    cfg.blobs_max = synth_blobs_max;
    cfg.speed_min = synth_speed_min;
    cfg.speed_max = synth_speed_max;
    cfg.growth_min = synth_growth_min;
    cfg.growth_max = synth_growth_max;
    cfg.flicker_rate = synth_flicker_rate;
    cfg.coverage_lo = synth_coverage_lo;
    cfg.coverage_hi = synth_coverage_hi;
    cfg.cadence_minutes = cadence_minutes > 0 ? cadence_minutes : 15;
    return cfg;
  }

  void validate() const {
    if (dtype != "f32" && dtype != "f64")
      throw ConfigError("dtype must be f32 or f64, got '" + dtype + "'");
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (cadence_minutes < 0) throw ConfigError("cadence_minutes must be nonnegative");
    model_config().validate();
    focal_config().validate();
    adam_config().validate();
    plateau_config().validate();
    synthetic_config().validate();
  }
};

namespace detail {

template <typename V>
V json_get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  std::map<std::string, std::function<void(const nlohmann::json&)>> keys;
  auto bind = [&keys](const std::string& key, auto* field) {
    keys[key] = [key, field](const nlohmann::json& v) {
      *field = detail::json_get<std::remove_pointer_t<decltype(field)>>(v, key);
    };
  };
  bind("seed", &cfg.seed);
  bind("dtype", &cfg.dtype);
  bind("levels", &cfg.levels);
  bind("channels", &cfg.channels);
  bind("input_channels", &cfg.input_channels);
  bind("stmu", &cfg.stmu);
  bind("stmu_depth", &cfg.stmu_depth);
  bind("atrous_rates", &cfg.atrous_rates);
  bind("heads", &cfg.heads);
  bind("threshold", &cfg.threshold);
  bind("seq_len", &cfg.seq_len);
  bind("input_height", &cfg.input_height);
  bind("input_width", &cfg.input_width);
  bind("multiscale", &cfg.multiscale);
  bind("use_decoder", &cfg.use_decoder);
  bind("dsta_temporal", &cfg.dsta_temporal);
  bind("dsta_spatial", &cfg.dsta_spatial);
  bind("gamma_focal", &cfg.gamma_focal);
  bind("prob_clamp", &cfg.prob_clamp);
  bind("lr", &cfg.lr);
  bind("beta1", &cfg.beta1);
  bind("beta2", &cfg.beta2);
  bind("adam_eps", &cfg.adam_eps);
  bind("plateau_factor", &cfg.plateau_factor);
  bind("plateau_patience", &cfg.plateau_patience);
  bind("min_lr", &cfg.min_lr);
  bind("plateau_threshold", &cfg.plateau_threshold);
  bind("epochs", &cfg.epochs);
  bind("batch_size", &cfg.batch_size);
  bind("manifest", &cfg.manifest);
  bind("cadence_minutes", &cfg.cadence_minutes);
  bind("interval_minutes", &cfg.interval_minutes);
  bind("groups", &cfg.groups);
  bind("test_group", &cfg.test_group);
  bind("synth_scenes", &cfg.synth_scenes);
  bind("synth_frames", &cfg.synth_frames);
  bind("synth_image_size", &cfg.synth_image_size);
  bind("synth_blobs_min", &cfg.synth_blobs_min);
  bind("synth_blobs_max", &cfg.synth_blobs_max);
  bind("synth_speed_min", &cfg.synth_speed_min);
  bind("synth_speed_max", &cfg.synth_speed_max);
  bind("synth_growth_min", &cfg.synth_growth_min);
  bind("synth_growth_max", &cfg.synth_growth_max);
  bind("synth_flicker_rate", &cfg.synth_flicker_rate);
  bind("synth_coverage_lo", &cfg.synth_coverage_lo);
  bind("synth_coverage_hi", &cfg.synth_coverage_hi);
  for (const auto& [key, value] : j.items()) {
    auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(value);
  }
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

// Full resolved configuration, every key explicit, keys sorted.
inline nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["dtype"] = cfg.dtype;
  j["levels"] = cfg.levels;
  j["channels"] = cfg.channels;
  j["input_channels"] = cfg.input_channels;
  j["stmu"] = cfg.stmu;
  j["stmu_depth"] = cfg.stmu_depth;
  j["atrous_rates"] = cfg.atrous_rates;
  j["heads"] = cfg.heads;
  j["threshold"] = cfg.threshold;
  j["seq_len"] = cfg.seq_len;
  j["input_height"] = cfg.input_height;
  j["input_width"] = cfg.input_width;
  j["multiscale"] = cfg.multiscale;
  j["use_decoder"] = cfg.use_decoder;
  j["dsta_temporal"] = cfg.dsta_temporal;
  j["dsta_spatial"] = cfg.dsta_spatial;
  j["gamma_focal"] = cfg.gamma_focal;
  j["prob_clamp"] = cfg.prob_clamp;
  j["lr"] = cfg.lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["adam_eps"] = cfg.adam_eps;
  j["plateau_factor"] = cfg.plateau_factor;
  j["plateau_patience"] = cfg.plateau_patience;
  j["min_lr"] = cfg.min_lr;
  j["plateau_threshold"] = cfg.plateau_threshold;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["manifest"] = cfg.manifest;
  j["cadence_minutes"] = cfg.cadence_minutes;
  j["interval_minutes"] = cfg.interval_minutes;
  j["groups"] = cfg.groups;
  j["test_group"] = cfg.test_group;
  j["synth_scenes"] = cfg.synth_scenes;
  j["synth_frames"] = cfg.synth_frames;
  j["synth_image_size"] = cfg.synth_image_size;
  j["synth_blobs_min"] = cfg.synth_blobs_min;
  j["synth_blobs_max"] = cfg.synth_blobs_max;
  j["synth_speed_min"] = cfg.synth_speed_min;
  j["synth_speed_max"] = cfg.synth_speed_max;
  j["synth_growth_min"] = cfg.synth_growth_min;
  j["synth_growth_max"] = cfg.synth_growth_max;
  j["synth_flicker_rate"] = cfg.synth_flicker_rate;
  j["synth_coverage_lo"] = cfg.synth_coverage_lo;
  j["synth_coverage_hi"] = cfg.synth_coverage_hi;
  return j;
}

}  // namespace mcsd
