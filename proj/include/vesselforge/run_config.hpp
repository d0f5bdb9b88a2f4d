#pragma once

// Run configuration for the command-line pipeline: one JSON document, every
// field optional, defaults below.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vesselforge/error.hpp"
#include "vesselforge/preprocess.hpp"
#include "vesselforge/train.hpp"
#include "vesselforge/unet.hpp"

namespace vf {

struct PatchingConfig {
  int n_per_image = 9500;
  int size = 48;
  int stride = 5;
  std::uint64_t seed = 0;
  /// Use only the first N training images (0 = all).
  int max_images = 0;
};

struct EvaluationConfig {
  double threshold = 0.5;
  bool fov_only = true;
  /// Use only the first N test images (0 = all).
  int max_images = 0;
  int batch_size = 32;
};

struct RunConfig {
  std::string dataset_root;
  PreprocessConfig preprocessing;
  PatchingConfig patching;
  ModelSpec model;
  TrainConfig training;
  EvaluationConfig evaluation;
  int threads = 1;

  void validate() const;
};

inline const char* se_shape_name(SeShape s) { return s == SeShape::Disk ? "disk" : "square"; }

inline SeShape parse_se_shape(const std::string& s) {
  if (s == "disk") return SeShape::Disk;
  if (s == "square") return SeShape::Square;
  fail(Errc::ConfigError, "se_shape must be 'disk' or 'square', got '" + s + "'");
}

inline void RunConfig::validate() const {
  require(preprocessing.se_radius >= 0, Errc::ConfigError, "se_radius must be >= 0");
  require(preprocessing.clahe.tiles_x >= 1 && preprocessing.clahe.tiles_y >= 1, Errc::ConfigError,
          "clahe tiles must be >= 1");
  require(preprocessing.clahe.clip_limit > 0.0, Errc::ConfigError, "clahe clip must be positive");
  require(patching.n_per_image >= 1, Errc::ConfigError, "n_per_image must be >= 1");
  require(patching.size >= 4 && patching.size % 4 == 0, Errc::ConfigError, "patch size must be a positive multiple of 4");
  require(patching.stride >= 1, Errc::ConfigError, "stride must be >= 1");
  require(patching.max_images >= 0 && evaluation.max_images >= 0, Errc::ConfigError, "max_images must be >= 0");
  require(model.base_channels >= 1, Errc::ConfigError, "base_channels must be >= 1");
  require(model.depth == 3, Errc::ConfigError, "only depth 3 is supported");
  require(evaluation.threshold >= 0.0 && evaluation.threshold <= 1.0, Errc::ConfigError, "threshold must be in [0, 1]");
  require(evaluation.batch_size >= 1, Errc::ConfigError, "evaluation batch_size must be >= 1");
  require(threads >= 1, Errc::ConfigError, "threads must be >= 1");
  training.validate();
}

// JSON ----------------------------------------------------------------------

inline nlohmann::json dataset_json(const RunConfig& c) { return {{"dataset_root", c.dataset_root}}; }

inline nlohmann::json preprocessing_json(const RunConfig& c) {
  const auto& p = c.preprocessing;
  return {{"se_shape", se_shape_name(p.se_shape)},
          {"se_radius", p.se_radius},
          {"clahe_tiles", {p.clahe.tiles_x, p.clahe.tiles_y}},
          {"clahe_clip", p.clahe.clip_limit}};
}

inline nlohmann::json patching_json(const RunConfig& c) {
  const auto& p = c.patching;
  return {{"n_per_image", p.n_per_image},
          {"size", p.size},
          {"stride", p.stride},
          {"seed", p.seed},
          {"max_images", p.max_images}};
}

inline nlohmann::json model_json(const RunConfig& c) {
  return {{"depth", c.model.depth}, {"base_channels", c.model.base_channels}};
}

inline nlohmann::json training_json(const RunConfig& c) {
  const auto& t = c.training;
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"val_fraction", t.val_fraction},
          {"lr", t.schedule.initial_lr},
          {"lr_decay", t.schedule.decay},
          {"lr_decay_every", t.schedule.period},
          {"seed", t.seed}};
}

inline nlohmann::json evaluation_json(const RunConfig& c) {
  const auto& e = c.evaluation;
  return {{"threshold", e.threshold}, {"fov_only", e.fov_only}, {"max_images", e.max_images}, {"batch_size", e.batch_size}};
}

inline nlohmann::json to_json(const RunConfig& c) {
  auto j = dataset_json(c);
  j["preprocessing"] = preprocessing_json(c);
  j["patching"] = patching_json(c);
  j["model"] = model_json(c);
  j["training"] = training_json(c);
  j["evaluation"] = evaluation_json(c);
  j["threads"] = c.threads;
  return j;
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::ConfigError, where + "." + key + ": " + e.what());
  }
}

inline const nlohmann::json* section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nullptr;
  require(j.at(key).is_object(), Errc::ConfigError, std::string("config section '") + key + "' must be an object");
  return &j.at(key);
}

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, v] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    require(ok, Errc::ConfigError, "unknown config key " + where + "." + k);
  }
}

}  // namespace detail

/// Applies the fields present in `j` on top of `c`. Unknown keys are an
/// error so typos do not silently fall back to defaults.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  using detail::read_field;
  require(j.is_object(), Errc::ConfigError, "config must be a JSON object");
  detail::reject_unknown(
      j, {"dataset_root", "preprocessing", "patching", "model", "training", "evaluation", "threads"}, "config");
  read_field(j, "dataset_root", c.dataset_root, "config");
  read_field(j, "threads", c.threads, "config");
  if (const auto* s = detail::section(j, "preprocessing")) {
    detail::reject_unknown(*s, {"se_shape", "se_radius", "clahe_tiles", "clahe_clip"}, "preprocessing");
    std::string shape = se_shape_name(c.preprocessing.se_shape);
    read_field(*s, "se_shape", shape, "preprocessing");
    c.preprocessing.se_shape = parse_se_shape(shape);
    read_field(*s, "se_radius", c.preprocessing.se_radius, "preprocessing");
    std::array<int, 2> tiles{c.preprocessing.clahe.tiles_x, c.preprocessing.clahe.tiles_y};
    read_field(*s, "clahe_tiles", tiles, "preprocessing");
    c.preprocessing.clahe.tiles_x = tiles[0];
    c.preprocessing.clahe.tiles_y = tiles[1];
    read_field(*s, "clahe_clip", c.preprocessing.clahe.clip_limit, "preprocessing");
  }
  if (const auto* s = detail::section(j, "patching")) {
    detail::reject_unknown(*s, {"n_per_image", "size", "stride", "seed", "max_images"}, "patching");
    read_field(*s, "n_per_image", c.patching.n_per_image, "patching");
    read_field(*s, "size", c.patching.size, "patching");
    read_field(*s, "stride", c.patching.stride, "patching");
    read_field(*s, "seed", c.patching.seed, "patching");
    read_field(*s, "max_images", c.patching.max_images, "patching");
  }
  if (const auto* s = detail::section(j, "model")) {
    detail::reject_unknown(*s, {"depth", "base_channels"}, "model");
    read_field(*s, "depth", c.model.depth, "model");
    read_field(*s, "base_channels", c.model.base_channels, "model");
  }
  if (const auto* s = detail::section(j, "training")) {
    detail::reject_unknown(*s, {"epochs", "batch_size", "val_fraction", "lr", "lr_decay", "lr_decay_every", "seed"},
                           "training");
    read_field(*s, "epochs", c.training.epochs, "training");
    read_field(*s, "batch_size", c.training.batch_size, "training");
    read_field(*s, "val_fraction", c.training.val_fraction, "training");
    read_field(*s, "lr", c.training.schedule.initial_lr, "training");
    read_field(*s, "lr_decay", c.training.schedule.decay, "training");
    read_field(*s, "lr_decay_every", c.training.schedule.period, "training");
    read_field(*s, "seed", c.training.seed, "training");
  }
  if (const auto* s = detail::section(j, "evaluation")) {
    detail::reject_unknown(*s, {"threshold", "fov_only", "max_images", "batch_size"}, "evaluation");
    read_field(*s, "threshold", c.evaluation.threshold, "evaluation");
    read_field(*s, "fov_only", c.evaluation.fov_only, "evaluation");
    read_field(*s, "max_images", c.evaluation.max_images, "evaluation");
    read_field(*s, "batch_size", c.evaluation.batch_size, "evaluation");
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::MissingFiles, "missing config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(Errc::ConfigError, path.string() + ": " + e.what());
  }
  RunConfig c;
  apply_json(c, j);
  return c;
}

}  // namespace vf
