#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcsd/common.hpp"
#include "mcsd/model.hpp"
#include "mcsd/optim.hpp"
#include "mcsd/tensor.hpp"

namespace mcsd {

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["levels"] = cfg.levels;
  j["channels"] = cfg.channels;
  j["input_channels"] = cfg.input_channels;
  j["stmu"] = stmu_kind_name(cfg.stmu_kind);
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
  return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "levels",     "channels",     "input_channels", "stmu",       "stmu_depth",
      "atrous_rates", "heads",      "threshold",      "seq_len",    "input_height",
      "input_width", "multiscale",  "use_decoder",    "dsta_temporal", "dsta_spatial"};
  if (!j.is_object()) throw DataError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw DataError("unknown model config key '" + key + "'");
  }
  for (const auto& k : known)
    if (!j.contains(k)) throw DataError("model config missing key '" + k + "'");
  ModelConfig cfg;
  try {
    cfg.levels = j.at("levels").get<int64_t>();
    cfg.channels = j.at("channels").get<std::vector<int64_t>>();
    cfg.input_channels = j.at("input_channels").get<int64_t>();
    cfg.stmu_kind = parse_stmu_kind(j.at("stmu").get<std::string>());
    cfg.stmu_depth = j.at("stmu_depth").get<int64_t>();
    cfg.atrous_rates = j.at("atrous_rates").get<std::vector<int64_t>>();
    cfg.heads = j.at("heads").get<int64_t>();
    cfg.threshold = j.at("threshold").get<double>();
    cfg.seq_len = j.at("seq_len").get<int64_t>();
    cfg.input_height = j.at("input_height").get<int64_t>();
    cfg.input_width = j.at("input_width").get<int64_t>();
    cfg.multiscale = j.at("multiscale").get<bool>();
    cfg.use_decoder = j.at("use_decoder").get<bool>();
    cfg.dsta_temporal = j.at("dsta_temporal").get<bool>();
    cfg.dsta_spatial = j.at("dsta_spatial").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
  return cfg;
}

// Everything needed to resume training bit-exactly.
template <typename T>
struct Checkpoint {
  ModelConfig model;
  Params<T> params;
  AdamConfig adam;
  int64_t adam_steps = 0;
  std::vector<Tensor<T>> m, v;
  PlateauConfig sched;
  double sched_best = 0.0;
  int64_t sched_bad = 0;
  int64_t epoch = 0;
  uint64_t rng_state = 0;
};

namespace detail {

constexpr char kCkptMagic[4] = {'M', 'C', 'K', 'P'};
constexpr uint32_t kCkptVersion = 1;

inline void write_string(std::ostream& out, const std::string& s) {
  write_le(out, static_cast<uint64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const uint64_t len = read_le<uint64_t>(in);
  if (len > (1u << 20)) throw DataError("unreasonable string length in checkpoint");
  std::string s(static_cast<size_t>(len), '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint string");
  return s;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  check(ckpt.m.size() == ckpt.params.size() && ckpt.v.size() == ckpt.params.size(),
        "checkpoint moment buffers do not match parameters");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(detail::kCkptMagic, 4);
  detail::write_le(out, detail::kCkptVersion);
  out.put(static_cast<char>(dtype_of<T>()));
  detail::write_string(out, model_config_to_json(ckpt.model).dump());
  detail::write_le(out, static_cast<uint64_t>(ckpt.epoch));
  detail::write_le(out, ckpt.rng_state);
  detail::write_f64(out, ckpt.adam.lr);
  detail::write_f64(out, ckpt.adam.beta1);
  detail::write_f64(out, ckpt.adam.beta2);
  detail::write_f64(out, ckpt.adam.eps);
  detail::write_le(out, static_cast<uint64_t>(ckpt.adam_steps));
  detail::write_f64(out, ckpt.sched.factor);
  detail::write_le(out, static_cast<uint64_t>(ckpt.sched.patience));
  detail::write_f64(out, ckpt.sched.min_lr);
  detail::write_f64(out, ckpt.sched.threshold);
  detail::write_f64(out, ckpt.sched_best);
  detail::write_le(out, static_cast<uint64_t>(ckpt.sched_bad));
  detail::write_le(out, static_cast<uint64_t>(ckpt.params.size()));
  for (const auto& [name, p] : ckpt.params) {
    detail::write_string(out, name);
    write_tensor(out, p);
  }
  for (const auto& t : ckpt.m) write_tensor(out, t);
  for (const auto& t : ckpt.v) write_tensor(out, t);
  if (!out) throw DataError("write failed for checkpoint " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != std::string(detail::kCkptMagic, 4))
    throw DataError("bad checkpoint magic in " + path);
  const uint32_t version = detail::read_le<uint32_t>(in);
  if (version != detail::kCkptVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
  const int dtype = in.get();
  if (dtype != static_cast<int>(dtype_of<T>()))
    throw DataError("checkpoint dtype mismatch in " + path);
  Checkpoint<T> ckpt;
  try {
    ckpt.model = model_config_from_json(nlohmann::json::parse(detail::read_string(in)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("unparseable config in checkpoint: ") + e.what());
  }
  ckpt.model.validate();
  ckpt.epoch = static_cast<int64_t>(detail::read_le<uint64_t>(in));
  ckpt.rng_state = detail::read_le<uint64_t>(in);
  ckpt.adam.lr = detail::read_f64(in);
  ckpt.adam.beta1 = detail::read_f64(in);
  ckpt.adam.beta2 = detail::read_f64(in);
  ckpt.adam.eps = detail::read_f64(in);
  ckpt.adam_steps = static_cast<int64_t>(detail::read_le<uint64_t>(in));
  ckpt.sched.factor = detail::read_f64(in);
  ckpt.sched.patience = static_cast<int64_t>(detail::read_le<uint64_t>(in));
  ckpt.sched.min_lr = detail::read_f64(in);
  ckpt.sched.threshold = detail::read_f64(in);
  ckpt.sched_best = detail::read_f64(in);
  ckpt.sched_bad = static_cast<int64_t>(detail::read_le<uint64_t>(in));
  if (!in) throw DataError("truncated checkpoint " + path);
  const uint64_t count = detail::read_le<uint64_t>(in);
  if (count > (1u << 20)) throw DataError("unreasonable parameter count in " + path);
  ckpt.params.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = detail::read_string(in);
    ckpt.params.emplace_back(std::move(name), read_tensor<T>(in));
  }
  ckpt.m.reserve(count);
  ckpt.v.reserve(count);
  for (uint64_t i = 0; i < count; ++i) ckpt.m.push_back(read_tensor<T>(in));
  for (uint64_t i = 0; i < count; ++i) ckpt.v.push_back(read_tensor<T>(in));
  if (!in) throw DataError("truncated checkpoint " + path);
  for (uint64_t i = 0; i < count; ++i) {
    check(ckpt.m[i].shape() == ckpt.params[i].second.shape() && ckpt.v[i].shape() == ckpt.params[i].second.shape(),
          "moment shape mismatch in checkpoint for " + ckpt.params[i].first);
  }
  return ckpt;
}

// Copies checkpoint parameter values into a model built from the same config.
template <typename T>
void restore_model(const Checkpoint<T>& ckpt, McsdNet<T>& model) {
  check(model.params().size() == ckpt.params.size(),
        "checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
            std::to_string(model.params().size()));
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    auto& [mname, mp] = model.params()[i];
    const auto& [cname, cp] = ckpt.params[i];
    if (mname != cname) throw DataError("checkpoint parameter order mismatch: " + cname + " vs " + mname);
    check(mp.shape() == cp.shape(), "shape mismatch for " + mname + ": " + shape_str(cp.shape()) + " vs " +
                                        shape_str(mp.shape()));
    mp.copy_values_from(cp);
  }
}

}  // namespace mcsd
