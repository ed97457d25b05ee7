// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagelab/common.hpp"
#include "stagelab/dataset.hpp"
#include "stagelab/energy.hpp"
#include "stagelab/trainer.hpp"

namespace stagelab {

// Run configuration: one strict JSON document. Unknown keys are rejected
// with their field path so typos fail before any work starts.

namespace cfgdetail {

using nlohmann::json;

inline void check_keys(const json& obj, const std::string& path,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) raise_config(concat(path, " must be an object"));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed)
      if (it.key() == key) ok = true;
    if (!ok) {
      std::string keys;
      for (const char* key : allowed) keys += (keys.empty() ? "" : ", ") + std::string(key);
      raise_config(concat("unknown key '", it.key(), "' at ", path, "; allowed keys: ", keys));
    }
  }
}

template <typename T>
T require(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) raise_config(concat("missing required key '", key, "' at ", path));
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    raise_config(concat("bad value for '", key, "' at ", path));
  }
}

template <typename T>
T optional_or(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    raise_config(concat("bad value for '", key, "' at ", path));
  }
}

}  // namespace cfgdetail

struct DatasetSource {
  std::optional<SynthSpec> synthetic;
  std::optional<std::string> directory;
  std::optional<std::string> cache;
};

struct SplitConfig {
  double ratio = 0.8;
  std::uint64_t seed = 0;
};

struct ArchiveSource {
  std::optional<std::string> path;
  std::optional<std::uint64_t> generate_seed;  // deterministic stand-in weights
};

struct DownstreamRunConfig {
  std::string model = "model1";
  int classes = 0;
  DownstreamConfig train;
  DatasetSource dataset;
  SplitConfig split;
  std::optional<DatasetSource> external;
};

struct RunConfig {
  std::string strategy;
  std::string preset;
  std::uint64_t seed = 0;
  std::string precision = "f32";  // or "f64"
  std::string output_dir;
  ArchiveSource archive;
  DatasetSource dataset;
  SplitConfig split;
  std::optional<DatasetSource> external;
  TrainOverrides overrides;
  std::optional<DownstreamRunConfig> downstream;
  EnergyConfig energy;
  nlohmann::json raw;
};

namespace cfgdetail {

inline SynthSpec parse_synth(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"kind", "n", "classes", "channels", "height", "width", "seed", "difficulty", "shift"});
  SynthSpec s;
  s.kind = require<std::string>(obj, path, "kind");
  s.n = require<int>(obj, path, "n");
  s.classes = optional_or<int>(obj, path, "classes", s.kind == "binary_blobs" ? 2 : 3);
  s.channels = optional_or<int>(obj, path, "channels", 3);
  s.height = optional_or<int>(obj, path, "height", 64);
  s.width = optional_or<int>(obj, path, "width", 64);
  s.seed = optional_or<std::uint64_t>(obj, path, "seed", 0);
  s.difficulty = optional_or<double>(obj, path, "difficulty", 0.0);
  s.shift = optional_or<double>(obj, path, "shift", 0.0);
  if (s.n < s.classes) raise_config(concat(path, ": n must be at least the class count"));
  return s;
}

inline DatasetSource parse_dataset(const json& obj, const std::string& path) {
  check_keys(obj, path, {"synthetic", "directory", "cache"});
  DatasetSource src;
  int sources = 0;
  if (obj.contains("synthetic")) {
    src.synthetic = parse_synth(obj.at("synthetic"), path + ".synthetic");
    ++sources;
  }
  if (obj.contains("directory")) {
    src.directory = require<std::string>(obj, path, "directory");
    ++sources;
  }
  if (obj.contains("cache")) {
    src.cache = require<std::string>(obj, path, "cache");
    ++sources;
  }
  if (sources != 1)
    raise_config(concat(path, " must name exactly one of: synthetic, directory, cache"));
  return src;
}

inline SplitConfig parse_split(const json& obj, const std::string& path) {
  check_keys(obj, path, {"ratio", "seed"});
  SplitConfig s;
  s.ratio = optional_or<double>(obj, path, "ratio", 0.8);
  s.seed = optional_or<std::uint64_t>(obj, path, "seed", 0);
  if (s.ratio <= 0.0 || s.ratio > 1.0) raise_config(concat(path, ".ratio must be in (0,1]"));
  return s;
}

inline EnergyConfig parse_energy(const json& obj, const std::string& path) {
  check_keys(obj, path,
             {"device_count", "device_power_watts", "usage_factor", "memory_gb",
              "memory_power_per_gb", "pue", "psf"});
  EnergyConfig e;
  e.device_count = optional_or<int>(obj, path, "device_count", e.device_count);
  e.device_power_watts = optional_or<double>(obj, path, "device_power_watts", e.device_power_watts);
  e.usage_factor = optional_or<double>(obj, path, "usage_factor", e.usage_factor);
  e.memory_gb = optional_or<double>(obj, path, "memory_gb", e.memory_gb);
  e.memory_power_per_gb =
      optional_or<double>(obj, path, "memory_power_per_gb", e.memory_power_per_gb);
  e.pue = optional_or<double>(obj, path, "pue", e.pue);
  e.psf = optional_or<double>(obj, path, "psf", e.psf);
  e.validate();
  return e;
}

}  // namespace cfgdetail

inline RunConfig parse_run_config(const nlohmann::json& doc) {
  using namespace cfgdetail;
  const std::string root = "$";
  check_keys(doc, root,
             {"strategy", "preset", "seed", "precision", "output_dir", "archive", "dataset",
              "split", "external", "overrides", "downstream", "energy"});
  RunConfig cfg;
  cfg.raw = doc;
  cfg.strategy = require<std::string>(doc, root, "strategy");
  cfg.preset = require<std::string>(doc, root, "preset");
  cfg.seed = optional_or<std::uint64_t>(doc, root, "seed", 0);
  cfg.precision = optional_or<std::string>(doc, root, "precision", "f32");
  if (cfg.precision != "f32" && cfg.precision != "f64")
    raise_config("$.precision must be \"f32\" or \"f64\"");
  cfg.output_dir = require<std::string>(doc, root, "output_dir");

  const json& archive = doc.contains("archive") ? doc.at("archive") : json::object();
  check_keys(archive, "$.archive", {"path", "generate_seed"});
  if (archive.contains("path")) cfg.archive.path = require<std::string>(archive, "$.archive", "path");
  if (archive.contains("generate_seed"))
    cfg.archive.generate_seed = require<std::uint64_t>(archive, "$.archive", "generate_seed");
  if (cfg.archive.path.has_value() == cfg.archive.generate_seed.has_value())
    raise_config("$.archive must set exactly one of: path, generate_seed");

  if (!doc.contains("dataset")) raise_config("missing required key 'dataset' at $");
  cfg.dataset = parse_dataset(doc.at("dataset"), "$.dataset");
  if (doc.contains("split")) cfg.split = parse_split(doc.at("split"), "$.split");
  if (doc.contains("external")) cfg.external = parse_dataset(doc.at("external"), "$.external");

  if (doc.contains("overrides")) {
    const json& ov = doc.at("overrides");
    check_keys(ov, "$.overrides",
               {"phase_epochs", "phase_learning_rates", "batch_size", "class_weights"});
    if (ov.contains("phase_epochs"))
      cfg.overrides.phase_epochs = require<std::vector<int>>(ov, "$.overrides", "phase_epochs");
    if (ov.contains("phase_learning_rates"))
      cfg.overrides.phase_learning_rates =
          require<std::vector<double>>(ov, "$.overrides", "phase_learning_rates");
    cfg.overrides.batch_size = optional_or<int>(ov, "$.overrides", "batch_size", 16);
    if (cfg.overrides.batch_size < 1) raise_config("$.overrides.batch_size must be positive");
    const std::string weighting =
        optional_or<std::string>(ov, "$.overrides", "class_weights", "none");
    if (weighting == "inverse_frequency")
      cfg.overrides.inverse_frequency_weights = true;
    else if (weighting != "none")
      raise_config("$.overrides.class_weights must be \"none\" or \"inverse_frequency\"");
  }

  if (doc.contains("downstream")) {
    const json& ds = doc.at("downstream");
    check_keys(ds, "$.downstream",
               {"model", "classes", "epochs", "learning_rate", "batch_size", "seed", "dataset",
                "split", "external"});
    DownstreamRunConfig d;
    d.model = optional_or<std::string>(ds, "$.downstream", "model", "model1");
    d.classes = require<int>(ds, "$.downstream", "classes");
    d.train.epochs = optional_or<int>(ds, "$.downstream", "epochs", 500);
    d.train.learning_rate = optional_or<double>(ds, "$.downstream", "learning_rate", 5e-5);
    d.train.batch_size = optional_or<int>(ds, "$.downstream", "batch_size", 32);
    d.train.seed = optional_or<std::uint64_t>(ds, "$.downstream", "seed", 0);
    if (d.train.epochs < 0) raise_config("$.downstream.epochs must be non-negative");
    if (d.train.learning_rate <= 0) raise_config("$.downstream.learning_rate must be positive");
    if (d.train.batch_size < 1) raise_config("$.downstream.batch_size must be positive");
    if (!ds.contains("dataset")) raise_config("missing required key 'dataset' at $.downstream");
    d.dataset = parse_dataset(ds.at("dataset"), "$.downstream.dataset");
    if (ds.contains("split")) d.split = parse_split(ds.at("split"), "$.downstream.split");
    if (ds.contains("external"))
      d.external = parse_dataset(ds.at("external"), "$.downstream.external");
    cfg.downstream = std::move(d);
  }

  if (doc.contains("energy")) cfg.energy = cfgdetail::parse_energy(doc.at("energy"), "$.energy");
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) raise_config(concat("cannot open config '", path.string(), "'"));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    raise_config(concat("config '", path.string(), "' is not valid JSON: ", e.what()));
  }
  return parse_run_config(doc);
}

inline DatasetHandle load_dataset(const DatasetSource& src) {
  if (src.synthetic) return synth_dataset(*src.synthetic);
  if (src.directory) return load_directory(*src.directory);
  return load_cache(*src.cache);
}

}  // namespace stagelab
