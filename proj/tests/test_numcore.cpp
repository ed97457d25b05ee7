// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "reference_net.hpp"
#include "stagelab/adam.hpp"
#include "stagelab/arch.hpp"
#include "stagelab/graph.hpp"
#include "stagelab/rng.hpp"

using namespace stagelab;

namespace {

double loss_of(const LayerGraph& g, const ParameterStore<double>& store,
               const Tensor<double>& batch, const Tensor<double>& labels, LossKind kind) {
  const Tensor<double> out = forward(g, store, batch);
  const std::size_t n = batch.shape[0];
  const std::size_t k = out.size() / n;
  double loss = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (kind == LossKind::bce)
      loss += bce_loss(out[s], labels[s]);
    else
      loss += cce_loss(out.ptr() + s * k, labels.ptr() + s * k, static_cast<int>(k));
  }
  return loss / static_cast<double>(n);
}

void randomize_bn_stats(ParameterStore<double>& store, Rng& rng) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    switch (p.kind) {
      case ParamKind::bn_scale:
        for (auto& v : p.value.data) v = rng.uniform(0.5, 1.5);
        break;
      case ParamKind::bn_shift:
        for (auto& v : p.value.data) v = rng.uniform(-0.3, 0.3);
        break;
      case ParamKind::bn_moving_mean:
        for (auto& v : p.value.data) v = rng.uniform(-0.5, 0.5);
        break;
      case ParamKind::bn_moving_var:
        for (auto& v : p.value.data) v = rng.uniform(0.5, 1.5);
        break;
      default:
        break;
    }
  }
}

struct GradCheck {
  double max_rel_err = 0;
  std::size_t checked = 0;
};

/// Central finite differences (h = 1e-4, 64-bit) against the analytic
/// gradients for every trainable parameter and the input batch.
GradCheck check_gradients(const LayerGraph& g, std::uint64_t seed, LossKind kind,
                          std::size_t max_coords_per_tensor = 24) {
  Rng rng(seed);
  ParameterStore<double> store(g.params);
  store.init_default(seed);
  randomize_bn_stats(store, rng);

  std::set<std::string> trainable;
  for (const auto& p : g.params)
    if (!is_batchnorm_kind(p.kind)) trainable.insert(p.name);
  store.set_trainable(trainable);

  const std::size_t n = 2;
  Shape batch_shape = {n};
  batch_shape.insert(batch_shape.end(), g.input_shape.begin(), g.input_shape.end());
  Tensor<double> batch(batch_shape);
  for (auto& v : batch.data) v = rng.uniform(-1, 1);

  const std::size_t k = numel(g.output_shape());
  Tensor<double> labels;
  if (kind == LossKind::bce) {
    labels = Tensor<double>({n});
    for (std::size_t s = 0; s < n; ++s) labels[s] = static_cast<double>(rng.index(2));
  } else {
    labels = Tensor<double>({n, k});
    for (std::size_t s = 0; s < n; ++s) labels[s * k + rng.index(k)] = 1.0;
  }

  Tensor<double> input_grad;
  backward(g, store, batch, labels, kind, &input_grad);

  const double h = 1e-4;
  GradCheck result;
  auto compare = [&](double analytic, double* slot) {
    const double saved = *slot;
    *slot = saved + h;
    const double up = loss_of(g, store, batch, labels, kind);
    *slot = saved - h;
    const double down = loss_of(g, store, batch, labels, kind);
    *slot = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max(std::abs(analytic), std::abs(fd));
    if (denom < 1e-7) {
      result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - fd));
    } else {
      result.max_rel_err = std::max(result.max_rel_err, std::abs(analytic - fd) / denom);
    }
    ++result.checked;
  };

  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    if (!p.trainable) continue;
    REQUIRE(p.gradient.has_value());
    const std::size_t sz = p.value.size();
    for (std::size_t c = 0; c < std::min(sz, max_coords_per_tensor); ++c) {
      const std::size_t j = sz <= max_coords_per_tensor ? c : rng.index(sz);
      compare((*p.gradient)[j], &p.value[j]);
    }
  }
  for (std::size_t c = 0; c < std::min(batch.size(), max_coords_per_tensor); ++c) {
    const std::size_t j = batch.size() <= max_coords_per_tensor ? c : rng.index(batch.size());
    compare(input_grad[j], &batch[j]);
  }
  return result;
}

LayerGraph conv_head_graph(int cin, int hw, int cout, int k, int stride, int pad) {
  LayerGraph g;
  int y = g.add_input({static_cast<std::size_t>(cin), static_cast<std::size_t>(hw),
                       static_cast<std::size_t>(hw)});
  y = g.add_conv("conv", y, cout, k, stride, pad);
  y = g.add_global_avg_pool("pool", y);
  y = g.add_dense("head.dense", y, 1);
  g.add_sigmoid("head.sigmoid", y);
  return g;
}

}  // namespace

TEST_CASE("gradients: conv variants match finite differences") {
  struct Case {
    int cin, hw, cout, k, stride, pad;
  };
  const Case cases[] = {{2, 6, 3, 3, 1, 1}, {3, 7, 2, 3, 2, 1}, {2, 5, 4, 1, 1, 0},
                        {1, 9, 2, 7, 2, 3}, {2, 6, 2, 1, 2, 0}};
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    const auto r =
        check_gradients(conv_head_graph(c.cin, c.hw, c.cout, c.k, c.stride, c.pad), seed++, LossKind::bce);
    INFO("conv k=" << c.k << " stride=" << c.stride << " pad=" << c.pad);
    CHECK(r.max_rel_err < 1e-4);
    CHECK(r.checked > 0);
  }
}

TEST_CASE("gradients: batchnorm, relu, maxpool, add") {
  LayerGraph g;
  int y = g.add_input({2, 8, 8});
  y = g.add_conv("c1", y, 3, 3, 1, 1);
  y = g.add_batchnorm("bn1", y);
  y = g.add_relu("r1", y);
  y = g.add_maxpool("mp", y, 3, 2, 1);
  int branch = g.add_conv("c2", y, 3, 1, 1, 0);
  branch = g.add_batchnorm("bn2", branch);
  y = g.add_add("add", branch, y);
  y = g.add_relu("r2", y);
  y = g.add_global_avg_pool("pool", y);
  y = g.add_dense("head.dense", y, 1);
  g.add_sigmoid("head.sigmoid", y);
  for (std::uint64_t seed : {7ULL, 8ULL, 9ULL}) {
    const auto r = check_gradients(g, seed, LossKind::bce);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("gradients: dense + softmax + cce") {
  LayerGraph g;
  int y = g.add_input({6});
  y = g.add_dense("d1", y, 5);
  y = g.add_relu("r1", y);
  y = g.add_dense("d2", y, 4);
  g.add_softmax("softmax", y);
  for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
    const auto r = check_gradients(g, seed, LossKind::cce);
    CHECK(r.max_rel_err < 1e-4);
  }
}

TEST_CASE("gradients: full bottleneck stage end to end") {
  ArchSpec spec;
  spec.preset_name = "micro";
  spec.in_channels = 3;
  spec.in_height = 17;
  spec.in_width = 17;
  spec.stem_channels = 4;
  spec.stages = {{4, 8, 2, 1}};
  spec.head = HeadKind::sigmoid;
  spec.head_units = 1;
  const LayerGraph g = build_graph(spec);
  const auto r = check_gradients(g, 3131, LossKind::bce, 12);
  CHECK(r.max_rel_err < 1e-4);
  CHECK(r.checked > 100);
}

TEST_CASE("forward: zero weights give 0.5 through a sigmoid head") {
  const LayerGraph g = conv_head_graph(3, 8, 4, 3, 1, 1);
  ParameterStore<float> store(g.params);
  // All-zero parameters: conv and dense outputs are zero, sigmoid(0) = 0.5.
  Tensor<float> batch({2, 3, 8, 8});
  const Tensor<float> out = forward(g, store, batch);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == 0.5f);
  CHECK(out[1] == 0.5f);
}

TEST_CASE("forward: softmax rows sum to one, sigmoid stays in (0,1)") {
  LayerGraph g;
  int y = g.add_input({10});
  y = g.add_dense("d1", y, 7);
  y = g.add_relu("r", y);
  y = g.add_dense("d2", y, 5);
  g.add_softmax("sm", y);
  ParameterStore<float> store(g.params);
  store.init_default(99);
  Rng rng(4);
  Tensor<float> batch({8, 10});
  for (auto& v : batch.data) v = static_cast<float>(rng.uniform(-4, 4));
  const Tensor<float> out = forward(g, store, batch);
  for (std::size_t s = 0; s < 8; ++s) {
    double sum = 0;
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(out[s * 5 + c] >= 0.0f);
      sum += out[s * 5 + c];
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }

  const LayerGraph gs = conv_head_graph(1, 6, 2, 3, 1, 1);
  ParameterStore<float> ss(gs.params);
  ss.init_default(5);
  Tensor<float> img({4, 1, 6, 6});
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-2, 2));
  const Tensor<float> probs = forward(gs, ss, img);
  for (float p : probs.data) {
    CHECK(p > 0.0f);
    CHECK(p < 1.0f);
  }
}

TEST_CASE("forward: nano backbone matches the straight-line reference") {
  const ArchSpec spec = ArchSpec::nano(HeadKind::sigmoid, 1);
  auto [g, store] = build<float>(spec, 424242);
  Rng rng(17);
  // Nudge BN statistics off their identity defaults so the check covers them.
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store.at(i);
    if (p.kind == ParamKind::bn_moving_mean)
      for (auto& v : p.value.data) v = static_cast<float>(rng.uniform(-0.2, 0.2));
    if (p.kind == ParamKind::bn_moving_var)
      for (auto& v : p.value.data) v = static_cast<float>(rng.uniform(0.6, 1.4));
  }

  Tensor<float> batch({2, 3, 64, 64});
  for (auto& v : batch.data) v = static_cast<float>(rng.uniform(0, 1));
  const Tensor<float> out = forward(g, store, batch);

  for (std::size_t s = 0; s < 2; ++s) {
    std::vector<double> image(batch.ptr() + s * 3 * 64 * 64, batch.ptr() + (s + 1) * 3 * 64 * 64);
    const double expected = refnet::nano_forward_sigmoid(store, image);
    CHECK_THAT(static_cast<double>(out[s]), Catch::Matchers::WithinAbs(expected, 1e-5));
  }
}

TEST_CASE("backward: perfect predictions give vanishing loss and gradients") {
  LayerGraph g;
  int y = g.add_input({3});
  y = g.add_dense("head.dense", y, 1);
  g.add_sigmoid("head.sigmoid", y);
  ParameterStore<double> store(g.params);
  // Strong weights push the logit to +-30 on the matching inputs.
  store.get("head.dense.weight").value.data = {30.0, 0.0, 0.0};
  std::set<std::string> all = {"head.dense.weight", "head.dense.bias"};
  store.set_trainable(all);

  Tensor<double> batch({2, 3}, {1, 0, 0, -1, 0, 0});
  Tensor<double> labels({2}, {1, 0});
  const double loss = backward(g, store, batch, labels, LossKind::bce);
  CHECK(loss < 1e-10);
  for (const auto& name : all) {
    const auto& grad = *store.get(name).gradient;
    for (double v : grad.data) CHECK(std::abs(v) < 1e-10);
  }
}

TEST_CASE("backward: gradients exist exactly for the trainable set") {
  const LayerGraph g = conv_head_graph(2, 6, 3, 3, 1, 1);
  ParameterStore<double> store(g.params);
  store.init_default(1);
  store.set_trainable({"head.dense.weight", "head.dense.bias"});

  Rng rng(2);
  Tensor<double> batch({3, 2, 6, 6});
  for (auto& v : batch.data) v = rng.uniform(-1, 1);
  Tensor<double> labels({3}, {1, 0, 1});
  const double loss_a = backward(g, store, batch, labels, LossKind::bce);

  CHECK(store.get("head.dense.weight").gradient.has_value());
  CHECK(store.get("head.dense.bias").gradient.has_value());
  CHECK(!store.get("conv.weight").gradient.has_value());
  CHECK(!store.get("conv.bias").gradient.has_value());

  // A frozen parameter still shapes the loss, it just gets no gradient.
  store.get("conv.weight").value[0] += 0.5;
  const double loss_b = backward(g, store, batch, labels, LossKind::bce);
  CHECK(loss_a != loss_b);
  CHECK(!store.get("conv.weight").gradient.has_value());
}

TEST_CASE("backward: label arity mismatches are rejected") {
  LayerGraph g;
  int y = g.add_input({4});
  y = g.add_dense("d", y, 3);
  g.add_softmax("sm", y);
  ParameterStore<double> store(g.params);
  store.init_default(3);
  Tensor<double> batch({2, 4});
  CHECK_THROWS_AS(backward(g, store, batch, Tensor<double>({2, 2}), LossKind::cce), Error);
  CHECK_THROWS_AS(backward(g, store, batch, Tensor<double>({2}), LossKind::cce), Error);

  const LayerGraph gs = conv_head_graph(1, 5, 2, 3, 1, 1);
  ParameterStore<double> ss(gs.params);
  ss.init_default(4);
  Tensor<double> img({2, 1, 5, 5});
  CHECK_THROWS_AS(backward(gs, ss, img, Tensor<double>({3}), LossKind::bce), Error);
}

TEST_CASE("non-finite activations name the offending layer") {
  const LayerGraph g = conv_head_graph(1, 6, 2, 3, 1, 1);
  ParameterStore<float> store(g.params);
  store.init_default(6);
  store.get("conv.weight").value[0] = std::numeric_limits<float>::infinity();
  Tensor<float> batch({1, 1, 6, 6});
  batch.fill(1.0f);
  try {
    forward(g, store, batch);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("conv") != std::string::npos);
  }
}

TEST_CASE("adam: zero gradients leave parameters bitwise unchanged") {
  std::vector<ParamSpec> specs = {{"w", ParamKind::dense_weight, {2, 3}}};
  ParameterStore<double> store(specs);
  store.init_default(11);
  store.set_trainable({"w"});
  const auto before = store.get("w").value.data;
  store.get("w").gradient = Tensor<double>({2, 3});
  AdamState<double> adam(1e-3, 0.9, 0.999, 1e-7);
  adam.reset(store);
  adam.step(store);
  CHECK(store.get("w").value.data == before);
}

TEST_CASE("adam: the first step moves by about the learning rate") {
  // Bias-corrected first step: lr * g / (|g| + eps) for any g != 0.
  for (double grad : {0.37, -2.5e3, 1e-4}) {
    std::vector<ParamSpec> specs = {{"w", ParamKind::dense_weight, {1, 1}}};
    ParameterStore<double> store(specs);
    store.get("w").value[0] = 1.0;
    store.set_trainable({"w"});
    store.get("w").gradient = Tensor<double>({1, 1}, {grad});
    const double lr = 0.05;
    AdamState<double> adam(lr, 0.9, 0.999, 1e-7);
    adam.reset(store);
    adam.step(store);
    const double delta = store.get("w").value[0] - 1.0;
    CHECK(std::abs(std::abs(delta) - lr) < lr * 1e-2);
    CHECK((grad > 0 ? delta < 0 : delta > 0));
  }
}

TEST_CASE("adam: three steps on a quadratic decrease the loss monotonically") {
  std::vector<ParamSpec> specs = {{"w", ParamKind::dense_weight, {1, 1}}};
  ParameterStore<double> store(specs);
  store.get("w").value[0] = 1.5;
  store.set_trainable({"w"});
  AdamState<double> adam(1e-3, 0.9, 0.999, 1e-7);
  adam.reset(store);
  double prev = 1.5 * 1.5;
  for (int step = 0; step < 3; ++step) {
    const double x = store.get("w").value[0];
    store.get("w").gradient = Tensor<double>({1, 1}, {2 * x});
    adam.step(store);
    const double now = store.get("w").value[0] * store.get("w").value[0];
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adam: missing gradient on a trainable parameter is an error") {
  std::vector<ParamSpec> specs = {{"w", ParamKind::dense_weight, {1, 2}}};
  ParameterStore<double> store(specs);
  store.set_trainable({"w"});
  AdamState<double> adam;
  adam.reset(store);
  CHECK_THROWS_AS(adam.step(store), Error);
}

TEST_CASE("adam: stale moments after a trainable-set change are an error") {
  std::vector<ParamSpec> specs = {{"a", ParamKind::dense_weight, {1, 1}},
                                  {"b", ParamKind::dense_weight, {1, 1}}};
  ParameterStore<double> store(specs);
  store.set_trainable({"a"});
  AdamState<double> adam;
  adam.reset(store);
  store.set_trainable({"b"});
  store.get("b").gradient = Tensor<double>({1, 1}, {1.0});
  CHECK_THROWS_AS(adam.step(store), Error);
}

TEST_CASE("determinism: identical seed and config give bit-identical losses") {
  auto run_losses = [&](std::uint64_t seed) {
    const LayerGraph g = conv_head_graph(2, 8, 3, 3, 1, 1);
    ParameterStore<double> store(g.params);
    store.init_default(seed);
    std::set<std::string> trainable;
    for (const auto& p : g.params)
      if (!is_batchnorm_kind(p.kind)) trainable.insert(p.name);
    store.set_trainable(trainable);
    AdamState<double> adam(1e-3, 0.9, 0.999, 1e-7);
    adam.reset(store);
    Rng rng(seed ^ 0x1234);
    Tensor<double> batch({4, 2, 8, 8});
    for (auto& v : batch.data) v = rng.uniform(0, 1);
    Tensor<double> labels({4}, {1, 0, 1, 0});
    std::vector<double> losses;
    for (int i = 0; i < 6; ++i) {
      losses.push_back(backward(g, store, batch, labels, LossKind::bce));
      adam.step(store);
    }
    return losses;
  };
  CHECK(run_losses(77) == run_losses(77));
  CHECK(run_losses(77) != run_losses(78));
}

TEST_CASE("thread cap does not change results bitwise") {
  const LayerGraph g = conv_head_graph(2, 8, 3, 3, 1, 1);
  auto grads_with_threads = [&](const char* threads) {
    setenv("STAGELAB_THREADS", threads, 1);
    ParameterStore<double> store(g.params);
    store.init_default(3);
    std::set<std::string> trainable;
    for (const auto& p : g.params)
      if (!is_batchnorm_kind(p.kind)) trainable.insert(p.name);
    store.set_trainable(trainable);
    Tensor<double> batch({6, 2, 8, 8});
    Rng data_rng(44);
    for (auto& v : batch.data) v = data_rng.uniform(-1, 1);
    Tensor<double> labels({6}, {1, 0, 1, 0, 1, 1});
    const double loss = backward(g, store, batch, labels, LossKind::bce);
    std::vector<std::vector<double>> grads;
    for (std::size_t i = 0; i < store.size(); ++i)
      if (store.at(i).gradient) grads.push_back(store.at(i).gradient->data);
    unsetenv("STAGELAB_THREADS");
    return std::make_pair(loss, grads);
  };
  const auto single = grads_with_threads("1");
  const auto multi = grads_with_threads("3");
  CHECK(single.first == multi.first);
  CHECK(single.second == multi.second);
}

TEST_CASE("sample weights scale loss and gradients") {
  LayerGraph g;
  int y = g.add_input({3});
  y = g.add_dense("head.dense", y, 1);
  g.add_sigmoid("head.sigmoid", y);

  auto fresh_store = [&] {
    ParameterStore<double> store(g.params);
    store.init_default(10);
    store.set_trainable({"head.dense.weight", "head.dense.bias"});
    return store;
  };
  Rng rng(3);
  Tensor<double> batch({4, 3});
  for (auto& v : batch.data) v = rng.uniform(-1, 1);
  Tensor<double> labels({4}, {1, 0, 0, 1});

  // Unit weights match the unweighted path exactly.
  Tensor<double> unit({4}, {1, 1, 1, 1});
  auto a = fresh_store();
  const double plain = backward(g, a, batch, labels, LossKind::bce);
  auto b = fresh_store();
  const double weighted_unit = backward<double>(g, b, batch, labels, LossKind::bce, nullptr, &unit);
  CHECK(plain == weighted_unit);
  CHECK(a.get("head.dense.weight").gradient->data == b.get("head.dense.weight").gradient->data);

  // Doubling every weight doubles the loss and the gradients.
  Tensor<double> twice({4}, {2, 2, 2, 2});
  auto c = fresh_store();
  const double doubled = backward<double>(g, c, batch, labels, LossKind::bce, nullptr, &twice);
  CHECK_THAT(doubled, Catch::Matchers::WithinRel(2 * plain, 1e-12));
  const auto& ga = a.get("head.dense.weight").gradient->data;
  const auto& gc = c.get("head.dense.weight").gradient->data;
  for (std::size_t j = 0; j < ga.size(); ++j)
    CHECK_THAT(gc[j], Catch::Matchers::WithinRel(2 * ga[j], 1e-12));

  // Wrong arity is rejected.
  Tensor<double> short_w({2}, {1, 1});
  auto d = fresh_store();
  CHECK_THROWS_AS(backward<double>(g, d, batch, labels, LossKind::bce, nullptr, &short_w), Error);
}

TEST_CASE("losses are non-negative on valid labels") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = rng.uniform(0.001, 0.999);
    CHECK(bce_loss(p, 1.0) >= 0.0);
    CHECK(bce_loss(p, 0.0) >= 0.0);
  }
  const double probs[3] = {0.2, 0.5, 0.3};
  const double onehot[3] = {0, 1, 0};
  CHECK(cce_loss(probs, onehot, 3) >= 0.0);
}
