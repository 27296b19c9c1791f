#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "ibn/errors.hpp"
#include "ibn/pipeline/model.hpp"
#include "ibn/pipeline/training.hpp"

namespace ibn::service {

struct ServiceConfig {
  pipeline::ModelGeometry geometry = pipeline::ModelGeometry::desk();

  // optimizer
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  double clip_norm = 5.0;

  // training
  pipeline::Mode mode = pipeline::Mode::fine_tune;
  std::size_t corpus_size = 2000;
  std::size_t vocab_size = 2000;
  std::size_t pretrain_epochs = 0;
  std::size_t initial_epochs = 4;
  std::size_t retrain_epochs = 2;
  std::size_t correction_repeats = 20; // copies of each correction per retrain epoch

  // thresholds
  double confidence_threshold = 0.8;
  std::size_t max_text_length = 512;

  std::size_t trigger_k = 10; // retrain after this many new corrections, 0 = manual only
  std::string host = "127.0.0.1";
  int port = 8080;
  std::uint64_t seed = 42;
  std::string data_dir = "data";
  std::string inventory = "samples/inventory.json";

  pipeline::TrainConfig train_config(std::size_t epochs) const {
    pipeline::TrainConfig c;
    c.epochs = epochs;
    c.learning_rate = learning_rate;
    c.momentum = momentum;
    c.batch_size = batch_size;
    c.clip_norm = clip_norm;
    c.seed = seed;
    return c;
  }

  void validate() const {
    geometry.validate();
    train_config(1).validate();
    if (corpus_size < 10)
      throw ValidationError("training.corpus_size must be at least 10");
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
      throw ValidationError("thresholds.confidence must lie in [0, 1]");
    if (max_text_length == 0)
      throw ValidationError("thresholds.max_text_length must be positive");
    if (port < 0 || port > 65535)
      throw ValidationError("port out of range");
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object())
    throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ValidationError("unknown config key '" + where + "." + key + "'");
}

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key))
    out = j.at(key).get<T>();
}

} // namespace detail

inline ServiceConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::take;
  ServiceConfig c;
  try {
    check_keys(j,
               {"geometry", "optimizer", "training", "thresholds", "trigger_k", "host", "port",
                "seed", "data_dir", "inventory"},
               "config");
    if (j.contains("geometry")) {
      const auto& g = j.at("geometry");
      check_keys(g, {"d_model", "heads", "layers", "d_ff", "max_len"}, "geometry");
      take(g, "d_model", c.geometry.d_model);
      take(g, "heads", c.geometry.heads);
      take(g, "layers", c.geometry.layers);
      take(g, "d_ff", c.geometry.d_ff);
      take(g, "max_len", c.geometry.max_len);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      check_keys(o, {"learning_rate", "momentum", "batch_size", "clip_norm"}, "optimizer");
      take(o, "learning_rate", c.learning_rate);
      take(o, "momentum", c.momentum);
      take(o, "batch_size", c.batch_size);
      take(o, "clip_norm", c.clip_norm);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      check_keys(t,
                 {"mode", "corpus_size", "vocab_size", "pretrain_epochs", "initial_epochs",
                  "retrain_epochs", "correction_repeats"},
                 "training");
      if (t.contains("mode"))
        c.mode = pipeline::mode_from_string(t.at("mode").get<std::string>());
      take(t, "corpus_size", c.corpus_size);
      take(t, "vocab_size", c.vocab_size);
      take(t, "pretrain_epochs", c.pretrain_epochs);
      take(t, "initial_epochs", c.initial_epochs);
      take(t, "retrain_epochs", c.retrain_epochs);
      take(t, "correction_repeats", c.correction_repeats);
    }
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      check_keys(t, {"confidence", "max_text_length"}, "thresholds");
      take(t, "confidence", c.confidence_threshold);
      take(t, "max_text_length", c.max_text_length);
    }
    take(j, "trigger_k", c.trigger_k);
    take(j, "host", c.host);
    take(j, "port", c.port);
    take(j, "seed", c.seed);
    take(j, "data_dir", c.data_dir);
    take(j, "inventory", c.inventory);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

/// IBN_PORT, IBN_DATA_DIR and IBN_SEED take precedence over the file.
inline void apply_env_overrides(ServiceConfig& c) {
  auto number = [](const char* name, const char* value) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(value, &used);
      if (used != std::string(value).size())
        throw std::invalid_argument(name);
      return v;
    } catch (const std::exception&) {
      throw ValidationError(std::string(name) + " is not a number: '" + value + "'");
    }
  };
  if (const char* v = std::getenv("IBN_PORT"))
    c.port = static_cast<int>(number("IBN_PORT", v));
  if (const char* v = std::getenv("IBN_DATA_DIR"))
    c.data_dir = v;
  if (const char* v = std::getenv("IBN_SEED"))
    c.seed = number("IBN_SEED", v);
  c.validate();
}

inline ServiceConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return config_from_json(j);
}

} // namespace ibn::service
