// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "stagelab/common.hpp"
#include "stagelab/layers.hpp"
#include "stagelab/loss.hpp"
#include "stagelab/param.hpp"
#include "stagelab/tensor.hpp"

namespace stagelab {

enum class LayerKind {
  input,
  conv2d,
  batchnorm,
  relu,
  maxpool,
  global_avg_pool,
  dense,
  add,
  sigmoid,
  softmax,
};

/// One residual unit. `stage`/`block` are 1-based/0-based positions in
/// network order; `prefix` is the parameter-name prefix of the unit.
struct SubBlockId {
  int stage = 0;
  int block = 0;
  bool is_conv_block = false;
  std::string prefix;

  const char* kind_name() const { return is_conv_block ? "conv_block" : "identity_block"; }
};

struct Node {
  LayerKind kind = LayerKind::input;
  std::string name;
  std::vector<int> inputs;     // node indices, all smaller than this node's index
  std::vector<int> param_ids;  // indices into LayerGraph::params
  kernels::ConvDims conv;      // conv2d
  kernels::PoolDims pool;      // maxpool
  Shape out_shape;             // per-sample output shape
};

/// A static compute graph, built once per architecture. Holds only
/// structure and parameter metadata; values live in a ParameterStore
/// created from `params`.
class LayerGraph {
 public:
  Shape input_shape;  // per-sample: (C,H,W) for images, (D) for feature vectors
  std::vector<Node> nodes;
  std::vector<ParamSpec> params;

  // Architecture annotations, filled by the builder.
  std::vector<SubBlockId> subblocks;
  std::vector<int> stage_end_nodes;  // output node of each stage, network order
  int pool_node = -1;                // global average pool, -1 if absent
  std::vector<int> head_param_ids;   // dense head parameters, empty if headless

  int output_node() const { return static_cast<int>(nodes.size()) - 1; }
  const Shape& output_shape() const { return nodes.back().out_shape; }

  int head_units() const {
    const auto& s = nodes.back().out_shape;
    return static_cast<int>(numel(s));
  }

  int add_input(Shape shape) {
    if (!nodes.empty()) raise("input node must be first");
    input_shape = shape;
    Node n;
    n.kind = LayerKind::input;
    n.name = "input";
    n.out_shape = std::move(shape);
    nodes.push_back(std::move(n));
    return 0;
  }

  int add_conv(const std::string& name, int input, int cout, int k, int stride, int pad) {
    const Shape& in = shape_of(input);
    if (in.size() != 3) raise(concat("layer '", name, "': conv input must be (C,H,W), got ", shape_str(in)));
    Node n;
    n.kind = LayerKind::conv2d;
    n.name = name;
    n.inputs = {input};
    n.conv = kernels::ConvDims{static_cast<int>(in[0]), static_cast<int>(in[1]),
                               static_cast<int>(in[2]), cout, k, k, stride, pad};
    if (n.conv.oh() <= 0 || n.conv.ow() <= 0)
      raise(concat("layer '", name, "': kernel ", k, "x", k, " stride ", stride,
                   " does not fit input ", shape_str(in)));
    n.param_ids = {
        add_param(name + ".weight", ParamKind::conv_weight,
                  {static_cast<std::size_t>(cout), in[0], static_cast<std::size_t>(k), static_cast<std::size_t>(k)}),
        add_param(name + ".bias", ParamKind::conv_bias, {static_cast<std::size_t>(cout)})};
    n.out_shape = {static_cast<std::size_t>(cout), static_cast<std::size_t>(n.conv.oh()),
                   static_cast<std::size_t>(n.conv.ow())};
    return push(std::move(n));
  }

  int add_batchnorm(const std::string& name, int input) {
    const Shape& in = shape_of(input);
    if (in.size() != 3) raise(concat("layer '", name, "': batchnorm input must be (C,H,W)"));
    Node n;
    n.kind = LayerKind::batchnorm;
    n.name = name;
    n.inputs = {input};
    Shape ch = {in[0]};
    n.param_ids = {add_param(name + ".scale", ParamKind::bn_scale, ch),
                   add_param(name + ".shift", ParamKind::bn_shift, ch),
                   add_param(name + ".moving_mean", ParamKind::bn_moving_mean, ch),
                   add_param(name + ".moving_var", ParamKind::bn_moving_var, ch)};
    n.out_shape = in;
    return push(std::move(n));
  }

  int add_relu(const std::string& name, int input) {
    Node n;
    n.kind = LayerKind::relu;
    n.name = name;
    n.inputs = {input};
    n.out_shape = shape_of(input);
    return push(std::move(n));
  }

  int add_maxpool(const std::string& name, int input, int k, int stride, int pad) {
    const Shape& in = shape_of(input);
    if (in.size() != 3) raise(concat("layer '", name, "': maxpool input must be (C,H,W)"));
    Node n;
    n.kind = LayerKind::maxpool;
    n.name = name;
    n.inputs = {input};
    n.pool = kernels::PoolDims{static_cast<int>(in[0]), static_cast<int>(in[1]),
                               static_cast<int>(in[2]), k, stride, pad};
    if (n.pool.oh() <= 0 || n.pool.ow() <= 0)
      raise(concat("layer '", name, "': pool does not fit input ", shape_str(in)));
    n.out_shape = {in[0], static_cast<std::size_t>(n.pool.oh()), static_cast<std::size_t>(n.pool.ow())};
    return push(std::move(n));
  }

  int add_global_avg_pool(const std::string& name, int input) {
    const Shape& in = shape_of(input);
    if (in.size() != 3) raise(concat("layer '", name, "': pooling input must be (C,H,W)"));
    Node n;
    n.kind = LayerKind::global_avg_pool;
    n.name = name;
    n.inputs = {input};
    n.out_shape = {in[0]};
    int id = push(std::move(n));
    pool_node = id;
    return id;
  }

  int add_dense(const std::string& name, int input, int units) {
    const Shape& in = shape_of(input);
    if (in.size() != 1) raise(concat("layer '", name, "': dense input must be a vector, got ", shape_str(in)));
    Node n;
    n.kind = LayerKind::dense;
    n.name = name;
    n.inputs = {input};
    n.param_ids = {add_param(name + ".weight", ParamKind::dense_weight,
                             {static_cast<std::size_t>(units), in[0]}),
                   add_param(name + ".bias", ParamKind::dense_bias, {static_cast<std::size_t>(units)})};
    n.out_shape = {static_cast<std::size_t>(units)};
    return push(std::move(n));
  }

  int add_add(const std::string& name, int a, int b) {
    if (shape_of(a) != shape_of(b))
      raise(concat("layer '", name, "': addend shapes differ, ", shape_str(shape_of(a)), " vs ",
                   shape_str(shape_of(b))));
    Node n;
    n.kind = LayerKind::add;
    n.name = name;
    n.inputs = {a, b};
    n.out_shape = shape_of(a);
    return push(std::move(n));
  }

  int add_sigmoid(const std::string& name, int input) {
    Node n;
    n.kind = LayerKind::sigmoid;
    n.name = name;
    n.inputs = {input};
    n.out_shape = shape_of(input);
    return push(std::move(n));
  }

  int add_softmax(const std::string& name, int input) {
    const Shape& in = shape_of(input);
    if (in.size() != 1) raise(concat("layer '", name, "': softmax input must be a vector"));
    Node n;
    n.kind = LayerKind::softmax;
    n.name = name;
    n.inputs = {input};
    n.out_shape = in;
    return push(std::move(n));
  }

  const Shape& shape_of(int node) const {
    if (node < 0 || node >= static_cast<int>(nodes.size())) raise("node index out of range");
    return nodes[node].out_shape;
  }

 private:
  int add_param(std::string name, ParamKind kind, Shape shape) {
    for (const auto& p : params)
      if (p.name == name) raise(concat("duplicate parameter name '", name, "'"));
    params.push_back(ParamSpec{std::move(name), kind, std::move(shape)});
    return static_cast<int>(params.size()) - 1;
  }

  int push(Node n) {
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }
};

enum class RunMode { train, eval };

namespace detail {

template <typename R>
void check_store_matches(const LayerGraph& g, const ParameterStore<R>& store) {
  if (store.size() != g.params.size()) raise("parameter store does not match graph");
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    const auto& spec = g.params[i];
    const auto& p = store.at(i);
    if (p.name != spec.name) raise(concat("parameter store order mismatch at '", p.name, "'"));
    if (p.value.shape != spec.shape)
      raise(concat("parameter '", p.name, "' has shape ", shape_str(p.value.shape), ", expected ",
                   shape_str(spec.shape)));
  }
}

template <typename R>
void check_finite_activation(const LayerGraph& g, int node, const Tensor<R>& act) {
  if (!all_finite(act))
    raise(concat("non-finite activation at layer '", g.nodes[node].name, "'"));
}

/// Computes activations for nodes [0, last_node]. pool_idx holds argmax
/// indices for maxpool nodes (needed by backward).
template <typename R>
void forward_sample(const LayerGraph& g, const ParameterStore<R>& store, const R* sample,
                    std::vector<Tensor<R>>& acts, std::vector<std::vector<int>>& pool_idx,
                    int last_node, bool check_finite) {
  acts.assign(g.nodes.size(), Tensor<R>());
  pool_idx.assign(g.nodes.size(), {});
  for (int i = 0; i <= last_node; ++i) {
    const Node& n = g.nodes[i];
    Tensor<R> out(n.out_shape);
    switch (n.kind) {
      case LayerKind::input: {
        std::copy(sample, sample + out.size(), out.ptr());
        break;
      }
      case LayerKind::conv2d: {
        const auto& x = acts[n.inputs[0]];
        kernels::conv2d_forward(x.ptr(), store.at(n.param_ids[0]).value.ptr(),
                                store.at(n.param_ids[1]).value.ptr(), out.ptr(), n.conv);
        break;
      }
      case LayerKind::batchnorm: {
        const auto& x = acts[n.inputs[0]];
        const int c = static_cast<int>(x.shape[0]);
        const int hw = static_cast<int>(x.shape[1] * x.shape[2]);
        kernels::batchnorm_forward(x.ptr(), store.at(n.param_ids[0]).value.ptr(),
                                   store.at(n.param_ids[1]).value.ptr(),
                                   store.at(n.param_ids[2]).value.ptr(),
                                   store.at(n.param_ids[3]).value.ptr(), R(1e-5), out.ptr(), c, hw);
        break;
      }
      case LayerKind::relu: {
        const auto& x = acts[n.inputs[0]];
        kernels::relu_forward(x.ptr(), out.ptr(), x.size());
        break;
      }
      case LayerKind::maxpool: {
        const auto& x = acts[n.inputs[0]];
        pool_idx[i].resize(out.size());
        kernels::maxpool_forward(x.ptr(), out.ptr(), pool_idx[i].data(), n.pool);
        break;
      }
      case LayerKind::global_avg_pool: {
        const auto& x = acts[n.inputs[0]];
        const int c = static_cast<int>(x.shape[0]);
        const int hw = static_cast<int>(x.shape[1] * x.shape[2]);
        kernels::global_avg_pool_forward(x.ptr(), out.ptr(), c, hw);
        break;
      }
      case LayerKind::dense: {
        const auto& x = acts[n.inputs[0]];
        kernels::dense_forward(x.ptr(), store.at(n.param_ids[0]).value.ptr(),
                               store.at(n.param_ids[1]).value.ptr(), out.ptr(),
                               static_cast<int>(x.size()), static_cast<int>(out.size()));
        break;
      }
      case LayerKind::add: {
        kernels::add_forward(acts[n.inputs[0]].ptr(), acts[n.inputs[1]].ptr(), out.ptr(), out.size());
        break;
      }
      case LayerKind::sigmoid: {
        kernels::sigmoid_forward(acts[n.inputs[0]].ptr(), out.ptr(), out.size());
        break;
      }
      case LayerKind::softmax: {
        kernels::softmax_forward(acts[n.inputs[0]].ptr(), out.ptr(), static_cast<int>(out.size()));
        break;
      }
    }
    if (check_finite) check_finite_activation(g, i, out);
    acts[i] = std::move(out);
  }
}

/// Walks the graph in reverse from `seed` at node `seed_node`, accumulating
/// parameter gradients into `sink` (entries may be empty to skip a
/// parameter) and optionally the gradient w.r.t. the input sample.
template <typename R>
void backward_sample(const LayerGraph& g, const ParameterStore<R>& store,
                     const std::vector<Tensor<R>>& acts,
                     const std::vector<std::vector<int>>& pool_idx, const Tensor<R>& seed,
                     int seed_node, std::vector<Tensor<R>>& sink, Tensor<R>* input_grad) {
  const int last = seed_node;
  std::vector<Tensor<R>> grads(g.nodes.size());
  grads[last] = seed;
  auto grad_buf = [&](int node) -> Tensor<R>& {
    if (grads[node].size() == 0) grads[node] = Tensor<R>(g.nodes[node].out_shape);
    return grads[node];
  };
  auto sink_ptr = [&](int param_id) -> R* {
    return sink[param_id].size() ? sink[param_id].ptr() : nullptr;
  };
  for (int i = last; i >= 0; --i) {
    const Node& n = g.nodes[i];
    if (grads[i].size() == 0) continue;  // node not on any active path
    const Tensor<R>& dy = grads[i];
    switch (n.kind) {
      case LayerKind::input: {
        if (input_grad) *input_grad = dy;
        break;
      }
      case LayerKind::conv2d: {
        const auto& x = acts[n.inputs[0]];
        R* dw = sink_ptr(n.param_ids[0]);
        R* db = sink_ptr(n.param_ids[1]);
        R* dx = n.inputs[0] == 0 && !input_grad ? nullptr : grad_buf(n.inputs[0]).ptr();
        kernels::conv2d_backward(x.ptr(), store.at(n.param_ids[0]).value.ptr(), dy.ptr(), dx, dw,
                                 db, n.conv);
        break;
      }
      case LayerKind::batchnorm: {
        const auto& x = acts[n.inputs[0]];
        const int c = static_cast<int>(x.shape[0]);
        const int hw = static_cast<int>(x.shape[1] * x.shape[2]);
        kernels::batchnorm_backward(dy.ptr(), store.at(n.param_ids[0]).value.ptr(),
                                    store.at(n.param_ids[3]).value.ptr(), R(1e-5),
                                    grad_buf(n.inputs[0]).ptr(), c, hw);
        break;
      }
      case LayerKind::relu: {
        const auto& x = acts[n.inputs[0]];
        kernels::relu_backward(x.ptr(), dy.ptr(), grad_buf(n.inputs[0]).ptr(), x.size());
        break;
      }
      case LayerKind::maxpool: {
        kernels::maxpool_backward(dy.ptr(), pool_idx[i].data(), grad_buf(n.inputs[0]).ptr(), n.pool);
        break;
      }
      case LayerKind::global_avg_pool: {
        const auto& in_shape = g.nodes[n.inputs[0]].out_shape;
        kernels::global_avg_pool_backward(dy.ptr(), grad_buf(n.inputs[0]).ptr(),
                                          static_cast<int>(in_shape[0]),
                                          static_cast<int>(in_shape[1] * in_shape[2]));
        break;
      }
      case LayerKind::dense: {
        const auto& x = acts[n.inputs[0]];
        R* dw = sink_ptr(n.param_ids[0]);
        R* db = sink_ptr(n.param_ids[1]);
        R* dx = n.inputs[0] == 0 && !input_grad ? nullptr : grad_buf(n.inputs[0]).ptr();
        kernels::dense_backward(x.ptr(), store.at(n.param_ids[0]).value.ptr(), dy.ptr(), dx, dw,
                                db, static_cast<int>(x.size()), static_cast<int>(dy.size()));
        break;
      }
      case LayerKind::add: {
        auto& da = grad_buf(n.inputs[0]);
        for (std::size_t j = 0; j < dy.size(); ++j) da[j] += dy[j];
        auto& db2 = grad_buf(n.inputs[1]);
        for (std::size_t j = 0; j < dy.size(); ++j) db2[j] += dy[j];
        break;
      }
      case LayerKind::sigmoid: {
        kernels::sigmoid_backward(acts[i].ptr(), dy.ptr(), grad_buf(n.inputs[0]).ptr(), dy.size());
        break;
      }
      case LayerKind::softmax: {
        kernels::softmax_backward(acts[i].ptr(), dy.ptr(), grad_buf(n.inputs[0]).ptr(),
                                  static_cast<int>(dy.size()));
        break;
      }
    }
  }
}

}  // namespace detail

/// Batch forward up to (and including) `last_node`; returns the stacked
/// activations of that node, shape (N, ...node shape). Batch-norm always
/// uses stored moving statistics, so train and eval modes compute the
/// same function.
template <typename R>
Tensor<R> forward_at(const LayerGraph& g, const ParameterStore<R>& store, const Tensor<R>& batch,
                     int last_node, RunMode = RunMode::eval) {
  detail::check_store_matches(g, store);
  if (batch.shape.size() != g.input_shape.size() + 1 ||
      !std::equal(g.input_shape.begin(), g.input_shape.end(), batch.shape.begin() + 1))
    raise(concat("layer 'input': batch shape ", shape_str(batch.shape),
                 " does not match graph input ", shape_str(g.input_shape)));
  if (last_node < 0 || last_node > g.output_node()) raise("node index out of range");

  const std::size_t n = batch.shape[0];
  const std::size_t in_size = numel(g.input_shape);
  const Shape& out_shape = g.nodes[last_node].out_shape;
  const std::size_t out_size = numel(out_shape);

  Shape stacked = {n};
  stacked.insert(stacked.end(), out_shape.begin(), out_shape.end());
  Tensor<R> out(stacked);

  parallel_for(n, thread_cap(), [&](std::size_t s) {
    std::vector<Tensor<R>> acts;
    std::vector<std::vector<int>> pool_idx;
    detail::forward_sample(g, store, batch.ptr() + s * in_size, acts, pool_idx, last_node, true);
    std::copy(acts[last_node].ptr(), acts[last_node].ptr() + out_size, out.ptr() + s * out_size);
  });
  return out;
}

/// Batch forward through the whole graph; returns the head output,
/// shape (N, head units).
template <typename R>
Tensor<R> forward(const LayerGraph& g, const ParameterStore<R>& store, const Tensor<R>& batch,
                  RunMode mode = RunMode::eval) {
  return forward_at(g, store, batch, g.output_node(), mode);
}

/// Mean loss over the batch plus gradients for every trainable parameter
/// (and only those). `sample_weights`, when given, scales each sample's
/// loss and gradient contribution (length N). Optionally reports the
/// gradient w.r.t. the input batch, mostly for gradient checking.
template <typename R>
R backward(const LayerGraph& g, ParameterStore<R>& store, const Tensor<R>& batch,
           const Tensor<R>& labels, LossKind loss_kind, Tensor<R>* input_grad = nullptr,
           const Tensor<R>* sample_weights = nullptr) {
  detail::check_store_matches(g, store);
  const Node& head = g.nodes.back();
  if (head.kind != LayerKind::sigmoid && head.kind != LayerKind::softmax)
    raise("backward requires a sigmoid or softmax head");
  const std::size_t n = batch.shape.empty() ? 0 : batch.shape[0];
  if (n == 0) raise("empty batch");
  const std::size_t k = numel(head.out_shape);
  if (loss_kind == LossKind::bce) {
    if (k != 1) raise(concat("bce needs a single-unit head, head has ", k, " units"));
    if (numel(labels.shape) != n)
      raise(concat("label/output arity mismatch: ", numel(labels.shape), " labels for ", n, " samples"));
  } else {
    if (labels.shape.size() != 2 || labels.shape[0] != n || labels.shape[1] != k)
      raise(concat("label/output arity mismatch: labels ", shape_str(labels.shape), ", expected (",
                   n, ",", k, ")"));
  }

  if (sample_weights && numel(sample_weights->shape) != n)
    raise(concat("sample weights must have one entry per sample, got ",
                 numel(sample_weights->shape), " for ", n));

  const std::size_t in_size = numel(g.input_shape);
  const int last = g.output_node();
  // The head activation and its loss differentiate as one unit: the
  // gradient at the pre-head logits is (p - y)/N for both sigmoid+bce and
  // softmax+cce. Seeding there stays exact when the activation saturates
  // and p underflows to 0 or 1.
  const int seed_node = head.inputs[0];

  // Per-sample gradient sinks, reduced in sample order below; this keeps
  // results bit-identical for any thread count.
  std::vector<std::vector<Tensor<R>>> sinks(n);
  std::vector<R> losses(n, R(0));
  std::vector<Tensor<R>> input_grads;
  if (input_grad) input_grads.assign(n, Tensor<R>());

  parallel_for(n, thread_cap(), [&](std::size_t s) {
    std::vector<Tensor<R>> acts;
    std::vector<std::vector<int>> pool_idx;
    detail::forward_sample(g, store, batch.ptr() + s * in_size, acts, pool_idx, last, true);

    const Tensor<R>& out = acts[last];
    Tensor<R> seed(head.out_shape);
    const R w = sample_weights ? (*sample_weights)[s] : R(1);
    const R scale = w / static_cast<R>(n);
    if (loss_kind == LossKind::bce) {
      const R y = labels[s];
      if (y != R(0) && y != R(1)) raise(concat("bce label must be 0 or 1, got sample ", s));
      losses[s] = w * bce_loss(out[0], y);
      seed[0] = (out[0] - y) * scale;
    } else {
      losses[s] = w * cce_loss(out.ptr(), labels.ptr() + s * k, static_cast<int>(k));
      for (std::size_t j = 0; j < k; ++j) seed[j] = (out[j] - labels[s * k + j]) * scale;
    }

    auto& sink = sinks[s];
    sink.assign(g.params.size(), Tensor<R>());
    for (std::size_t p = 0; p < g.params.size(); ++p)
      if (store.at(p).trainable) sink[p] = Tensor<R>(g.params[p].shape);
    detail::backward_sample(g, store, acts, pool_idx, seed, seed_node, sink,
                            input_grad ? &input_grads[s] : nullptr);
  });

  // Reduce in sample order.
  R loss = R(0);
  for (std::size_t s = 0; s < n; ++s) loss += losses[s];
  loss /= static_cast<R>(n);
  if (!std::isfinite(loss)) raise("non-finite loss");

  for (std::size_t p = 0; p < g.params.size(); ++p) {
    auto& param = store.at(p);
    if (!param.trainable) continue;
    Tensor<R> g_total(g.params[p].shape);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < g_total.size(); ++j) g_total[j] += sinks[s][p][j];
    if (!all_finite(g_total)) raise(concat("non-finite gradient for parameter '", param.name, "'"));
    param.gradient = std::move(g_total);
  }

  if (input_grad) {
    Shape stacked = {n};
    stacked.insert(stacked.end(), g.input_shape.begin(), g.input_shape.end());
    Tensor<R> gi(stacked);
    for (std::size_t s = 0; s < n; ++s)
      std::copy(input_grads[s].ptr(), input_grads[s].ptr() + in_size, gi.ptr() + s * in_size);
    *input_grad = std::move(gi);
  }
  return loss;
}

}  // namespace stagelab
