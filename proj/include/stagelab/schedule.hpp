// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "stagelab/arch.hpp"
#include "stagelab/graph.hpp"

namespace stagelab {

/// Selects which parameters a phase trains. Resolution never yields a
/// batch-norm parameter: those stay frozen in every schedule.
struct TrainableSelector {
  enum class Kind { head_only, all_non_bn, last_subblocks, none };
  Kind kind = Kind::none;
  int k = 0;  // last_subblocks only

  static TrainableSelector HeadOnly() { return {Kind::head_only, 0}; }
  static TrainableSelector AllNonBN() { return {Kind::all_non_bn, 0}; }
  static TrainableSelector LastSubBlocks(int k) { return {Kind::last_subblocks, k}; }
  static TrainableSelector None() { return {Kind::none, 0}; }

  std::string str() const {
    switch (kind) {
      case Kind::head_only: return "HeadOnly";
      case Kind::all_non_bn: return "AllNonBN";
      case Kind::last_subblocks: return concat("LastSubBlocks(", k, ")");
      case Kind::none: return "None";
    }
    return "?";
  }
};

struct Phase {
  TrainableSelector selector;
  int epochs = 0;
  double learning_rate = 0.0;
};

/// One catalog row: architecture shaping plus an ordered phase list.
/// truncate_stages == 0 keeps the full backbone.
struct Strategy {
  std::string name;
  int truncate_stages = 0;
  HeadKind head = HeadKind::sigmoid;
  int head_units = 1;
  std::vector<Phase> phases;
  bool requires_transfusion = true;

  int total_epochs() const {
    int n = 0;
    for (const auto& p : phases) n += p.epochs;
    return n;
  }
};

inline const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {
      "ImageNet",    "DA",           "DA_L1SB",         "DA_L2SB",         "DA_L1SB_PFT",
      "DA_L2SB_PFT", "DA_TF_F1B",    "DA_TF_F2B",       "ImageNet_TF_F1B", "ImageNet_TF_F2B"};
  return names;
}

/// Canonical strategy definitions. Epochs and learning rates here are the
/// catalog defaults; runs may override them without touching the catalog.
inline Strategy catalog(const std::string& name) {
  const Phase head_phase{TrainableSelector::HeadOnly(), 1000, 1e-4};
  const auto full = [&](int epochs) { return Phase{TrainableSelector::AllNonBN(), epochs, 1e-5}; };
  const auto partial = [&](int k, int epochs) {
    return Phase{TrainableSelector::LastSubBlocks(k), epochs, 1e-5};
  };

  Strategy s;
  s.name = name;
  if (name == "ImageNet") {
    s.head = HeadKind::none;
    s.head_units = 0;
  } else if (name == "DA") {
    s.phases = {head_phase, full(150)};
  } else if (name == "DA_L1SB") {
    s.phases = {head_phase, partial(1, 150)};
  } else if (name == "DA_L2SB") {
    s.phases = {head_phase, partial(2, 150)};
  } else if (name == "DA_L1SB_PFT") {
    s.phases = {head_phase, partial(1, 100), full(50)};
  } else if (name == "DA_L2SB_PFT") {
    s.phases = {head_phase, partial(2, 100), full(50)};
  } else if (name == "DA_TF_F1B") {
    s.truncate_stages = 1;
    s.phases = {head_phase, full(150)};
  } else if (name == "DA_TF_F2B") {
    s.truncate_stages = 2;
    s.phases = {head_phase, full(150)};
  } else if (name == "ImageNet_TF_F1B") {
    s.truncate_stages = 1;
    s.head = HeadKind::none;
    s.head_units = 0;
  } else if (name == "ImageNet_TF_F2B") {
    s.truncate_stages = 2;
    s.head = HeadKind::none;
    s.head_units = 0;
  } else {
    std::string valid;
    for (const auto& n : strategy_names()) valid += (valid.empty() ? "" : ", ") + n;
    raise_config(concat("unknown strategy '", name, "'; valid names: ", valid));
  }
  return s;
}

/// Architecture a strategy runs on, for a given base preset.
inline ArchSpec arch_for(const Strategy& s, const std::string& preset) {
  ArchSpec base;
  if (preset == "resnet50")
    base = ArchSpec::resnet50();
  else if (preset == "nano")
    base = ArchSpec::nano();
  else
    raise_config(concat("unknown preset '", preset, "'; valid presets: resnet50, nano"));
  if (s.truncate_stages > 0) base = base.truncated(s.truncate_stages);
  return base.with_head(s.head, s.head_units);
}

/// Exact parameter-name set a selector trains on this graph.
inline std::set<std::string> resolve(const TrainableSelector& sel, const LayerGraph& g) {
  std::set<std::string> out;
  const auto add_head = [&] {
    if (g.head_param_ids.empty()) raise("selector needs a dense head, graph has none");
    for (int pid : g.head_param_ids) out.insert(g.params[pid].name);
  };
  switch (sel.kind) {
    case TrainableSelector::Kind::none:
      break;
    case TrainableSelector::Kind::head_only:
      add_head();
      break;
    case TrainableSelector::Kind::all_non_bn:
      for (const auto& p : g.params)
        if (!is_batchnorm_kind(p.kind)) out.insert(p.name);
      break;
    case TrainableSelector::Kind::last_subblocks: {
      const int total = static_cast<int>(g.subblocks.size());
      if (sel.k < 1 || sel.k > total)
        raise(concat("LastSubBlocks(", sel.k, ") out of range: graph has ", total, " sub-blocks"));
      add_head();
      for (int i = total - sel.k; i < total; ++i) {
        const std::string prefix = g.subblocks[i].prefix + ".";
        for (const auto& p : g.params) {
          if (is_batchnorm_kind(p.kind)) continue;
          if (p.name.rfind(prefix, 0) == 0) out.insert(p.name);
        }
      }
      break;
    }
  }
  return out;
}

struct PlanRow {
  int phase = 0;
  std::string selector;
  int epochs = 0;
  int cumulative_epochs = 0;
  double learning_rate = 0.0;
  std::size_t trainable = 0;
};

struct PlanDoc {
  std::string strategy;
  std::string preset;
  std::string arch;  // e.g. "resnet50, 4 stages, sigmoid(1) head"
  std::size_t total_params = 0;
  std::vector<PlanRow> rows;
  int total_epochs = 0;
  std::string note;  // set when there is nothing to train
};

inline PlanDoc plan(const Strategy& s, const std::string& preset) {
  const ArchSpec spec = arch_for(s, preset);
  const LayerGraph g = build_graph(spec);
  PlanDoc doc;
  doc.strategy = s.name;
  doc.preset = preset;
  doc.arch = concat(spec.preset_name, ", ", spec.stages.size(), " stage",
                    spec.stages.size() == 1 ? "" : "s", ", ",
                    s.head == HeadKind::none ? std::string("no head")
                                             : concat(head_kind_name(s.head), "(", s.head_units, ") head"));
  doc.total_params = total_params(g);
  int cumulative = 0;
  for (std::size_t i = 0; i < s.phases.size(); ++i) {
    const Phase& p = s.phases[i];
    PlanRow row;
    row.phase = static_cast<int>(i) + 1;
    row.selector = p.selector.str();
    row.epochs = p.epochs;
    row.learning_rate = p.learning_rate;
    row.trainable = count_params(g, resolve(p.selector, g)).trainable;
    cumulative += p.epochs;
    row.cumulative_epochs = cumulative;
    doc.rows.push_back(std::move(row));
  }
  doc.total_epochs = cumulative;
  if (s.phases.empty()) doc.note = "transfusion only";
  return doc;
}

inline std::string format_lr(double lr) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.8f", lr);
  std::string s = buf;
  while (s.size() > 1 && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

inline std::string render_plan(const PlanDoc& doc) {
  std::string out;
  out += concat("strategy: ", doc.strategy, "\n");
  out += concat("preset:   ", doc.preset, "\n");
  out += concat("arch:     ", doc.arch, "\n");
  out += concat("total parameters: ", with_thousands(doc.total_params), "\n");
  if (doc.rows.empty()) {
    out += concat("phases:   none (", doc.note, ")\n");
    return out;
  }
  out += "phase  selector           epochs  cum.epochs  lr        trainable\n";
  for (const auto& r : doc.rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-5d  %-17s  %-6d  %-10d  %-8s  %s\n", r.phase,
                  r.selector.c_str(), r.epochs, r.cumulative_epochs,
                  format_lr(r.learning_rate).c_str(), with_thousands(r.trainable).c_str());
    out += line;
  }
  out += concat("total epochs: ", doc.total_epochs, "\n");
  return out;
}

}  // namespace stagelab
