// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagelab/container.hpp"
#include "stagelab/param.hpp"
#include "stagelab/tensor.hpp"

namespace stagelab {

// Weight archive: STGW container whose manifest is a JSON array of entries
// {name, dtype, shape, offset, length}, payload little-endian f32. The
// portable carrier for pre-trained weights; matching on load is by name and
// shape, so prefix-truncated networks can pull the slice they share with
// the full one.

struct ArchiveEntry {
  std::string name;
  std::string dtype;  // "f32"
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
};

struct WeightArchive {
  std::vector<ArchiveEntry> entries;
  std::vector<std::uint8_t> payload;

  const ArchiveEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }

  std::vector<float> values(const ArchiveEntry& e) const {
    std::vector<float> out(e.length / 4);
    std::memcpy(out.data(), payload.data() + e.offset, e.length);
    return out;
  }
};

namespace detail {

inline nlohmann::json archive_manifest(const WeightArchive& a) {
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : a.entries) {
    manifest.push_back({{"name", e.name},
                        {"dtype", e.dtype},
                        {"shape", e.shape},
                        {"offset", e.offset},
                        {"length", e.length}});
  }
  return manifest;
}

inline WeightArchive parse_archive(const RawContainer& c, const std::string& origin) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(c.manifest);
  } catch (const nlohmann::json::exception& e) {
    raise(concat(origin, ": malformed manifest: ", e.what()));
  }
  if (!manifest.is_array()) raise(concat(origin, ": manifest must be a JSON array"));

  WeightArchive a;
  a.payload = c.payload;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& item : manifest) {
    if (!item.is_object()) raise(concat(origin, ": manifest entry is not an object"));
    for (auto it = item.begin(); it != item.end(); ++it) {
      const std::string& key = it.key();
      if (key != "name" && key != "dtype" && key != "shape" && key != "offset" && key != "length")
        raise(concat(origin, ": unexpected manifest field '", key, "'"));
    }
    ArchiveEntry e;
    try {
      e.name = item.at("name").get<std::string>();
      e.dtype = item.at("dtype").get<std::string>();
      e.shape = item.at("shape").get<Shape>();
      e.offset = item.at("offset").get<std::uint64_t>();
      e.length = item.at("length").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      raise(concat(origin, ": malformed manifest entry: ", ex.what()));
    }
    if (e.dtype != "f32") raise(concat(origin, ": tensor '", e.name, "' has dtype '", e.dtype,
                                       "', weight archives hold f32"));
    if (e.length != 4 * numel(e.shape))
      raise(concat(origin, ": tensor '", e.name, "' length ", e.length, " does not match shape ",
                   shape_str(e.shape)));
    if (a.find(e.name) != nullptr) raise(concat(origin, ": duplicate tensor name '", e.name, "'"));
    if (e.offset + e.length > a.payload.size())
      raise(concat(origin, ": tensor '", e.name, "' extends past payload end (", e.offset, "+",
                   e.length, " > ", a.payload.size(), ")"));
    spans.emplace_back(e.offset, e.offset + e.length);
    a.entries.push_back(std::move(e));
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i)
    if (spans[i].first < spans[i - 1].second) raise(concat(origin, ": overlapping tensor spans"));
  return a;
}

}  // namespace detail

/// Snapshot of every parameter value, cast to f32, in store order.
template <typename R>
WeightArchive make_archive(const ParameterStore<R>& store) {
  WeightArchive a;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    ArchiveEntry e;
    e.name = p.name;
    e.dtype = "f32";
    e.shape = p.value.shape;
    e.offset = a.payload.size();
    e.length = 4 * p.value.size();
    a.payload.resize(a.payload.size() + e.length);
    float* dst = reinterpret_cast<float*>(a.payload.data() + e.offset);
    for (std::size_t j = 0; j < p.value.size(); ++j) dst[j] = static_cast<float>(p.value[j]);
    a.entries.push_back(std::move(e));
  }
  return a;
}

inline void save_archive(const WeightArchive& a, const std::filesystem::path& path) {
  RawContainer c;
  c.manifest = detail::archive_manifest(a).dump();
  c.payload = a.payload;
  write_container(path, c);
}

template <typename R>
void save_archive(const ParameterStore<R>& store, const std::filesystem::path& path) {
  save_archive(make_archive(store), path);
}

inline WeightArchive load_archive(const std::filesystem::path& path) {
  return detail::parse_archive(read_container(path), path.string());
}

struct TransfuseReport {
  std::size_t copied = 0;
  std::vector<std::string> unmatched_archive;  // in the archive, not in the graph
  std::vector<std::string> unmatched_graph;    // in the graph, kept at initialization
};

/// Copies every archive tensor whose name and shape match a parameter.
/// A name match with a different shape is an error; silent truncation would
/// hide a wrong cut. Everything untouched keeps its current values.
template <typename R>
TransfuseReport transfuse(const WeightArchive& archive, ParameterStore<R>& store) {
  TransfuseReport report;
  std::set<std::string> used;
  for (const auto& e : archive.entries) {
    Parameter<R>* p = store.find(e.name);
    if (p == nullptr) {
      report.unmatched_archive.push_back(e.name);
      continue;
    }
    if (p->value.shape != e.shape)
      raise(concat("transfuse: tensor '", e.name, "' has shape ", shape_str(e.shape),
                   " in the archive but ", shape_str(p->value.shape), " in the graph"));
    const float* src = reinterpret_cast<const float*>(archive.payload.data() + e.offset);
    for (std::size_t j = 0; j < p->value.size(); ++j) p->value[j] = static_cast<R>(src[j]);
    used.insert(e.name);
    ++report.copied;
  }
  for (std::size_t i = 0; i < store.size(); ++i)
    if (!used.count(store.at(i).name)) report.unmatched_graph.push_back(store.at(i).name);
  return report;
}

}  // namespace stagelab
