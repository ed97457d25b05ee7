// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "stagelab/graph.hpp"
#include "stagelab/param.hpp"

namespace stagelab {

enum class HeadKind { none, sigmoid, softmax };

inline const char* head_kind_name(HeadKind h) {
  switch (h) {
    case HeadKind::none: return "none";
    case HeadKind::sigmoid: return "sigmoid";
    case HeadKind::softmax: return "softmax";
  }
  return "?";
}

struct StageSpec {
  int bottleneck_width = 0;  // channels of the 1x1/3x3 interior convs
  int output_width = 0;      // channels on the residual path
  int subblocks = 0;         // first one is a conv_block, the rest identity_blocks
  int first_stride = 1;      // stride of the conv_block (projection shortcut)
};

/// Declarative bottleneck-residual architecture: a 7x7/2 stem with 3x3/2
/// max pool, then stages of sub-blocks, then global average pooling and an
/// optional dense head.
struct ArchSpec {
  std::string preset_name = "custom";
  int in_channels = 3, in_height = 224, in_width = 224;
  int stem_channels = 64;
  std::vector<StageSpec> stages;
  HeadKind head = HeadKind::sigmoid;
  int head_units = 1;

  static ArchSpec resnet50(HeadKind head = HeadKind::sigmoid, int head_units = 1) {
    ArchSpec s;
    s.preset_name = "resnet50";
    s.stem_channels = 64;
    s.stages = {{64, 256, 3, 1}, {128, 512, 4, 2}, {256, 1024, 6, 2}, {512, 2048, 3, 2}};
    s.head = head;
    s.head_units = head_units;
    return s;
  }

  /// resnet50 with every width divided by 8 and a 64x64 input; same stage
  /// topology, desk-scale cost.
  static ArchSpec nano(HeadKind head = HeadKind::sigmoid, int head_units = 1) {
    ArchSpec s;
    s.preset_name = "nano";
    s.in_height = 64;
    s.in_width = 64;
    s.stem_channels = 8;
    s.stages = {{8, 32, 3, 1}, {16, 64, 4, 2}, {32, 128, 6, 2}, {64, 256, 3, 2}};
    s.head = head;
    s.head_units = head_units;
    return s;
  }

  /// Keeps the stem plus the first n stages.
  ArchSpec truncated(int n_stages) const {
    if (n_stages < 1 || n_stages > static_cast<int>(stages.size()))
      raise(concat("cannot truncate ", preset_name, " to ", n_stages, " stages"));
    ArchSpec s = *this;
    s.stages.resize(static_cast<std::size_t>(n_stages));
    return s;
  }

  ArchSpec with_head(HeadKind h, int units) const {
    ArchSpec s = *this;
    s.head = h;
    s.head_units = units;
    return s;
  }

  void validate() const {
    if (in_channels < 1 || in_height < 1 || in_width < 1) raise("invalid input shape");
    if (stem_channels < 1) raise("invalid stem width");
    if (stages.empty()) raise("architecture needs at least one stage");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& st = stages[i];
      if (st.bottleneck_width < 1 || st.output_width < 1 || st.subblocks < 1 || st.first_stride < 1)
        raise(concat("invalid stage ", i + 1));
    }
    if (head != HeadKind::none && head_units < 1) raise("head needs at least one unit");
    if (head == HeadKind::sigmoid && head_units != 1) raise("sigmoid head must have one unit");
  }
};

namespace detail {

/// Bottleneck unit. conv_block variant projects the shortcut with a strided
/// 1x1 conv; identity_block adds the input through unchanged. Stride sits on
/// the first 1x1 conv, matching the v1 bottleneck layout.
inline int add_bottleneck(LayerGraph& g, const std::string& prefix, int input, int mid, int out,
                          int stride, bool conv_block) {
  int y = g.add_conv(prefix + ".conv1", input, mid, 1, stride, 0);
  y = g.add_batchnorm(prefix + ".bn1", y);
  y = g.add_relu(prefix + ".relu1", y);
  y = g.add_conv(prefix + ".conv2", y, mid, 3, 1, 1);
  y = g.add_batchnorm(prefix + ".bn2", y);
  y = g.add_relu(prefix + ".relu2", y);
  y = g.add_conv(prefix + ".conv3", y, out, 1, 1, 0);
  y = g.add_batchnorm(prefix + ".bn3", y);
  int shortcut = input;
  if (conv_block) {
    shortcut = g.add_conv(prefix + ".proj", input, out, 1, stride, 0);
    shortcut = g.add_batchnorm(prefix + ".proj_bn", shortcut);
  }
  int sum = g.add_add(prefix + ".add", y, shortcut);
  return g.add_relu(prefix + ".out", sum);
}

}  // namespace detail

/// Realizes an ArchSpec as a compute graph. Parameter values are not
/// allocated here; make a ParameterStore from graph.params and init or
/// transfuse it.
inline LayerGraph build_graph(const ArchSpec& spec) {
  spec.validate();
  LayerGraph g;
  int y = g.add_input({static_cast<std::size_t>(spec.in_channels),
                       static_cast<std::size_t>(spec.in_height),
                       static_cast<std::size_t>(spec.in_width)});
  y = g.add_conv("stem.conv", y, spec.stem_channels, 7, 2, 3);
  y = g.add_batchnorm("stem.bn", y);
  y = g.add_relu("stem.relu", y);
  y = g.add_maxpool("stem.pool", y, 3, 2, 1);

  for (int s = 0; s < static_cast<int>(spec.stages.size()); ++s) {
    const StageSpec& st = spec.stages[s];
    for (int b = 0; b < st.subblocks; ++b) {
      const bool conv_block = b == 0;
      const std::string prefix = concat("stage", s + 1, ".block", b);
      y = detail::add_bottleneck(g, prefix, y, st.bottleneck_width, st.output_width,
                                 conv_block ? st.first_stride : 1, conv_block);
      g.subblocks.push_back(SubBlockId{s + 1, b, conv_block, prefix});
    }
    g.stage_end_nodes.push_back(y);
  }

  y = g.add_global_avg_pool("pool", y);
  if (spec.head != HeadKind::none) {
    y = g.add_dense("head.dense", y, spec.head_units);
    for (int pid : g.nodes[y].param_ids) g.head_param_ids.push_back(pid);
    if (spec.head == HeadKind::sigmoid)
      y = g.add_sigmoid("head.sigmoid", y);
    else
      y = g.add_softmax("head.softmax", y);
  }
  return g;
}

/// Graph plus freshly initialized parameters.
template <typename R>
std::pair<LayerGraph, ParameterStore<R>> build(const ArchSpec& spec, std::uint64_t seed) {
  LayerGraph g = build_graph(spec);
  ParameterStore<R> store(g.params);
  store.init_default(seed);
  return {std::move(g), std::move(store)};
}

/// Network-order sub-block list; "last k sub-blocks" is a suffix of it.
inline std::vector<SubBlockId> enumerate_subblocks(const LayerGraph& g) { return g.subblocks; }

struct LayerCount {
  std::string layer;
  std::size_t count = 0;
  bool trainable = false;
};

struct ParamCountReport {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::vector<LayerCount> per_layer;
};

/// Exact accounting from the graph structure using the closed forms
/// conv = kh*kw*Cin*Cout + Cout, batch norm = 4*C (never trainable),
/// dense = D*K + K. The trainable column sums the parameters named in
/// `trainable_names` (a resolved selector).
inline ParamCountReport count_params(const LayerGraph& g,
                                     const std::set<std::string>& trainable_names = {}) {
  ParamCountReport report;
  for (const Node& n : g.nodes) {
    std::size_t count = 0;
    switch (n.kind) {
      case LayerKind::conv2d:
        count = static_cast<std::size_t>(n.conv.kh) * n.conv.kw * n.conv.cin * n.conv.cout +
                n.conv.cout;
        break;
      case LayerKind::batchnorm:
        count = 4 * g.params[n.param_ids[0]].shape[0];
        break;
      case LayerKind::dense:
        count = g.params[n.param_ids[0]].shape[1] * g.params[n.param_ids[0]].shape[0] +
                g.params[n.param_ids[1]].shape[0];
        break;
      default:
        continue;
    }
    bool trainable = false;
    for (int pid : n.param_ids)
      if (trainable_names.count(g.params[pid].name)) trainable = true;
    report.per_layer.push_back(LayerCount{n.name, count, trainable});
    report.total += count;
  }
  for (const ParamSpec& p : g.params)
    if (trainable_names.count(p.name)) report.trainable += p.count();
  return report;
}

inline std::size_t total_params(const LayerGraph& g) { return count_params(g).total; }

}  // namespace stagelab
