// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagelab/adam.hpp"
#include "stagelab/archive.hpp"
#include "stagelab/dataset.hpp"
#include "stagelab/energy.hpp"
#include "stagelab/evalkit.hpp"
#include "stagelab/graph.hpp"
#include "stagelab/schedule.hpp"

namespace stagelab {

struct EpochEntry {
  int epoch = 0;
  double train_loss = 0;
  double dev_auc = 0;
  std::optional<double> ext_auc;
};

/// Everything one run produced that is a pure function of (config, seed).
/// Wall-clock times are tracked separately in a RuntimeLog so this record
/// serializes to identical bytes across reruns.
struct RunRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  std::vector<EpochEntry> epochs;
  nlohmann::json config_snapshot;
};

inline nlohmann::json run_record_json(const RunRecord& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    nlohmann::json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_auc", e.dev_auc}};
    row["ext_auc"] = e.ext_auc ? nlohmann::json(*e.ext_auc) : nlohmann::json(nullptr);
    epochs.push_back(std::move(row));
  }
  return {{"strategy", r.strategy},
          {"seed", r.seed},
          {"config", r.config_snapshot.is_null() ? nlohmann::json::object() : r.config_snapshot},
          {"epochs", std::move(epochs)}};
}

inline AucCurve curve_from_record(const RunRecord& r, const std::string& eval_set) {
  AucCurve c;
  c.strategy = r.strategy;
  c.eval_set = eval_set;
  for (const auto& e : r.epochs) {
    if (eval_set == "external") {
      if (e.ext_auc) c.points.emplace_back(e.epoch, *e.ext_auc);
    } else {
      c.points.emplace_back(e.epoch, e.dev_auc);
    }
  }
  return c;
}

struct TrainOverrides {
  std::optional<std::vector<int>> phase_epochs;
  std::optional<std::vector<double>> phase_learning_rates;
  int batch_size = 16;
  // Off by default: the surrogate task runs unweighted. When set, each
  // class contributes inversely to its frequency, normalized to mean 1.
  bool inverse_frequency_weights = false;
};

/// Applies overrides to the catalog phases; list lengths must match the
/// strategy's phase count.
inline std::vector<Phase> effective_phases(const Strategy& s, const TrainOverrides& ov) {
  std::vector<Phase> phases = s.phases;
  if (ov.phase_epochs) {
    if (ov.phase_epochs->size() != phases.size())
      raise_config(concat("strategy ", s.name, " has ", phases.size(), " phases, got ",
                          ov.phase_epochs->size(), " epoch overrides"));
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if ((*ov.phase_epochs)[i] < 1) raise_config("epoch overrides must be positive");
      phases[i].epochs = (*ov.phase_epochs)[i];
    }
  }
  if (ov.phase_learning_rates) {
    if (ov.phase_learning_rates->size() != phases.size())
      raise_config(concat("strategy ", s.name, " has ", phases.size(), " phases, got ",
                          ov.phase_learning_rates->size(), " learning-rate overrides"));
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if ((*ov.phase_learning_rates)[i] <= 0) raise_config("learning rates must be positive");
      phases[i].learning_rate = (*ov.phase_learning_rates)[i];
    }
  }
  return phases;
}

namespace detail {

template <typename R>
std::vector<double> score_dataset(const LayerGraph& g, const ParameterStore<R>& store,
                                  const DatasetHandle& ds, int batch_size) {
  const int c = static_cast<int>(g.input_shape[0]);
  const int h = static_cast<int>(g.input_shape[1]);
  const int w = static_cast<int>(g.input_shape[2]);
  std::vector<double> scores;
  scores.reserve(ds.count());
  for (std::size_t start = 0; start < ds.count(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.count(), start + batch_size); ++i) idx.push_back(i);
    Tensor<R> batch = assemble_batch<R>(ds, idx, c, h, w);
    Tensor<R> out = forward(g, store, batch, RunMode::eval);
    for (std::size_t i = 0; i < idx.size(); ++i) scores.push_back(static_cast<double>(out[i]));
  }
  return scores;
}

template <typename R>
double binary_auc_on(const LayerGraph& g, const ParameterStore<R>& store, const DatasetHandle& ds,
                     int batch_size) {
  return auc_binary(score_dataset(g, store, ds, batch_size), ds.labels);
}

}  // namespace detail

template <typename R>
struct PretrainResult {
  LayerGraph graph;
  ParameterStore<R> store;
  RunRecord record;
  RuntimeLog runtime;
};

/// Runs a strategy's phases over a binary-labelled dataset: transfusion,
/// then per phase resolve -> freeze -> fresh Adam state -> epochs. Records
/// the mean train loss and the AUC on the held-out sets per epoch.
/// Zero-phase strategies return the transfused parameters untouched.
template <typename R>
PretrainResult<R> pretrain(const Strategy& strategy, const std::string& preset,
                           const WeightArchive& archive, const DatasetHandle& train_ds,
                           const DatasetHandle* dev_ds, const DatasetHandle* ext_ds,
                           const TrainOverrides& overrides, std::uint64_t seed) {
  const ArchSpec spec = arch_for(strategy, preset);
  LayerGraph graph = build_graph(spec);
  ParameterStore<R> store(graph.params);
  store.init_default(seed);
  transfuse(archive, store);

  PretrainResult<R> result{std::move(graph), std::move(store), {}, {}};
  result.record.strategy = strategy.name;
  result.record.seed = seed;

  const std::vector<Phase> phases = effective_phases(strategy, overrides);
  if (phases.empty()) return result;

  if (train_ds.class_names.size() != 2)
    raise(concat("pretraining needs a binary-labelled dataset, got ", train_ds.class_names.size(),
                 " classes"));
  if (strategy.head != HeadKind::sigmoid) raise("pretraining phases need a sigmoid head");

  const int c = static_cast<int>(result.graph.input_shape[0]);
  const int h = static_cast<int>(result.graph.input_shape[1]);
  const int w = static_cast<int>(result.graph.input_shape[2]);
  const int batch_size = overrides.batch_size;
  if (batch_size < 1) raise_config("batch size must be positive");

  // Per-class loss weights: n_total / (k * n_class), mean 1 over the set.
  std::vector<R> class_weight(train_ds.class_names.size(), R(1));
  if (overrides.inverse_frequency_weights) {
    const auto counts = train_ds.class_counts();
    for (std::size_t ci = 0; ci < counts.size(); ++ci) {
      if (counts[ci] == 0) raise("inverse-frequency weights need every class present");
      class_weight[ci] = static_cast<R>(static_cast<double>(train_ds.count()) /
                                        (static_cast<double>(counts.size()) *
                                         static_cast<double>(counts[ci])));
    }
  }

  Rng run_rng(seed);
  int epoch_counter = 0;
  for (std::size_t phase_idx = 0; phase_idx < phases.size(); ++phase_idx) {
    const Phase& phase = phases[phase_idx];
    const auto phase_start = std::chrono::steady_clock::now();
    result.store.set_trainable(resolve(phase.selector, result.graph));
    AdamState<R> adam(static_cast<R>(phase.learning_rate), R(0.9), R(0.999), R(1e-7));
    adam.reset(result.store);

    for (int ep = 0; ep < phase.epochs; ++ep) {
      ++epoch_counter;
      std::vector<std::size_t> order(train_ds.count());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      run_rng.fork((phase_idx << 24) ^ static_cast<std::uint64_t>(epoch_counter)).shuffle(order);

      double loss_sum = 0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        std::vector<std::size_t> idx(order.begin() + start,
                                     order.begin() + std::min(order.size(), start + batch_size));
        Tensor<R> batch = assemble_batch<R>(train_ds, idx, c, h, w);
        Tensor<R> labels({idx.size()});
        Tensor<R> weights({idx.size()});
        for (std::size_t i = 0; i < idx.size(); ++i) {
          labels[i] = static_cast<R>(train_ds.labels[idx[i]]);
          weights[i] = class_weight[static_cast<std::size_t>(train_ds.labels[idx[i]])];
        }
        try {
          loss_sum += static_cast<double>(
              backward<R>(result.graph, result.store, batch, labels, LossKind::bce, nullptr,
                          overrides.inverse_frequency_weights ? &weights : nullptr));
          adam.step(result.store);
        } catch (const Error& e) {
          raise(concat("phase ", phase_idx + 1, " epoch ", epoch_counter, ": ", e.what()));
        }
        ++batches;
      }

      EpochEntry entry;
      entry.epoch = epoch_counter;
      entry.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
      if (dev_ds)
        entry.dev_auc = detail::binary_auc_on(result.graph, result.store, *dev_ds, batch_size);
      if (ext_ds)
        entry.ext_auc = detail::binary_auc_on(result.graph, result.store, *ext_ds, batch_size);
      result.record.epochs.push_back(entry);
    }

    const auto phase_end = std::chrono::steady_clock::now();
    result.runtime.phase_hours.push_back(
        std::chrono::duration<double>(phase_end - phase_start).count() / 3600.0);
  }
  return result;
}

/// Pooled features for every sample: the global-average-pool output, head
/// bypassed. Shape (N, D) with D the final stage width.
template <typename R>
Tensor<R> extract_features(const LayerGraph& g, const ParameterStore<R>& store,
                           const DatasetHandle& ds, int batch_size = 32) {
  if (g.pool_node < 0) raise("graph has no global average pool");
  const int c = static_cast<int>(g.input_shape[0]);
  const int h = static_cast<int>(g.input_shape[1]);
  const int w = static_cast<int>(g.input_shape[2]);
  const std::size_t d = numel(g.nodes[g.pool_node].out_shape);
  Tensor<R> features({ds.count(), d});
  for (std::size_t start = 0; start < ds.count(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.count(), start + batch_size); ++i) idx.push_back(i);
    Tensor<R> batch = assemble_batch<R>(ds, idx, c, h, w);
    Tensor<R> pooled = forward_at(g, store, batch, g.pool_node);
    std::copy(pooled.ptr(), pooled.ptr() + idx.size() * d, features.ptr() + start * d);
  }
  return features;
}

/// Dense classifier heads. model1 = [64, 32] hidden, model2 =
/// [512, 256, 256, 128] hidden; both end in a softmax over k classes.
struct DownstreamModelSpec {
  std::string variant;
  int input_dim = 0;
  int classes = 0;
  std::vector<int> hidden;

  static DownstreamModelSpec make(const std::string& variant, int input_dim, int classes) {
    DownstreamModelSpec s;
    s.variant = variant;
    s.input_dim = input_dim;
    s.classes = classes;
    if (variant == "model1")
      s.hidden = {64, 32};
    else if (variant == "model2")
      s.hidden = {512, 256, 256, 128};
    else
      raise_config(concat("unknown downstream model '", variant, "'; valid: model1, model2"));
    if (classes < 2) raise_config("downstream classifier needs at least 2 classes");
    return s;
  }
};

inline LayerGraph build_mlp(const DownstreamModelSpec& spec) {
  LayerGraph g;
  int y = g.add_input({static_cast<std::size_t>(spec.input_dim)});
  for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
    y = g.add_dense(concat("mlp.dense", i + 1), y, spec.hidden[i]);
    y = g.add_relu(concat("mlp.relu", i + 1), y);
  }
  y = g.add_dense("mlp.output", y, spec.classes);
  for (int pid : g.nodes[y].param_ids) g.head_param_ids.push_back(pid);
  g.add_softmax("mlp.softmax", y);
  return g;
}

struct DownstreamConfig {
  int epochs = 500;
  double learning_rate = 5e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

template <typename R>
struct FeatureSet {
  std::string name;  // "development" or "external"
  Tensor<R> features;
  std::vector<int> labels;
};

template <typename R>
struct DownstreamResult {
  LayerGraph graph;
  ParameterStore<R> store;
  RunRecord record;
};

namespace detail {

template <typename R>
double multiclass_auc_on(const LayerGraph& g, const ParameterStore<R>& store,
                         const FeatureSet<R>& eval, int batch_size) {
  const std::size_t n = eval.labels.size();
  const std::size_t d = eval.features.shape[1];
  const std::size_t k = numel(g.output_shape());
  std::vector<std::vector<double>> scores(n, std::vector<double>(k));
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t stop = std::min(n, start + batch_size);
    Tensor<R> batch({stop - start, d});
    std::copy(eval.features.ptr() + start * d, eval.features.ptr() + stop * d, batch.ptr());
    Tensor<R> out = forward(g, store, batch);
    for (std::size_t i = start; i < stop; ++i)
      for (std::size_t j = 0; j < k; ++j)
        scores[i][j] = static_cast<double>(out[(i - start) * k + j]);
  }
  return auc_multiclass(scores, eval.labels);
}

}  // namespace detail

/// Trains a dense softmax classifier on extracted features and records the
/// macro one-vs-rest AUC on each evaluation set every epoch. The first
/// eval set fills dev_auc, a second one fills ext_auc.
template <typename R>
DownstreamResult<R> train_downstream(const DownstreamModelSpec& spec, const Tensor<R>& features,
                                     const std::vector<int>& labels,
                                     const std::vector<FeatureSet<R>>& evals,
                                     const DownstreamConfig& cfg) {
  if (features.shape.size() != 2 || features.shape[1] != static_cast<std::size_t>(spec.input_dim))
    raise(concat("feature matrix ", shape_str(features.shape), " does not match input dim ",
                 spec.input_dim));
  if (features.shape[0] != labels.size()) raise("feature/label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= spec.classes)
      raise(concat("label ", y, " out of range for ", spec.classes, " classes"));
  if (evals.size() > 2) raise("at most two evaluation sets (development, external)");

  DownstreamResult<R> result{build_mlp(spec), ParameterStore<R>(), {}};
  result.store = ParameterStore<R>(result.graph.params);
  result.store.init_default(cfg.seed);
  result.record.strategy = spec.variant;
  result.record.seed = cfg.seed;

  std::set<std::string> all;
  for (const auto& p : result.graph.params) all.insert(p.name);
  result.store.set_trainable(all);
  AdamState<R> adam(static_cast<R>(cfg.learning_rate), R(0.9), R(0.999), R(1e-7));
  adam.reset(result.store);

  const std::size_t n = labels.size();
  const std::size_t d = features.shape[1];
  const std::size_t k = static_cast<std::size_t>(spec.classes);
  Rng run_rng(cfg.seed);

  for (int ep = 1; ep <= cfg.epochs; ++ep) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    run_rng.fork(static_cast<std::uint64_t>(ep)).shuffle(order);

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      Tensor<R> batch({stop - start, d});
      Tensor<R> onehot({stop - start, k});
      for (std::size_t i = start; i < stop; ++i) {
        std::copy(features.ptr() + order[i] * d, features.ptr() + (order[i] + 1) * d,
                  batch.ptr() + (i - start) * d);
        onehot[(i - start) * k + static_cast<std::size_t>(labels[order[i]])] = R(1);
      }
      loss_sum +=
          static_cast<double>(backward(result.graph, result.store, batch, onehot, LossKind::cce));
      adam.step(result.store);
      ++batches;
    }

    EpochEntry entry;
    entry.epoch = ep;
    entry.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    if (!evals.empty())
      entry.dev_auc = detail::multiclass_auc_on(result.graph, result.store, evals[0], cfg.batch_size);
    if (evals.size() > 1)
      entry.ext_auc = detail::multiclass_auc_on(result.graph, result.store, evals[1], cfg.batch_size);
    result.record.epochs.push_back(entry);
  }
  return result;
}

}  // namespace stagelab
