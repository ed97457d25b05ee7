// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "stagelab/arch.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/schedule.hpp"

using namespace stagelab;

namespace {

// Brute-force oracle: instantiate every tensor and count elements.
std::size_t brute_force_total(const LayerGraph& g) {
  ParameterStore<float> store(g.params);
  return store.total_scalars();
}

ArchSpec random_spec(Rng& rng) {
  ArchSpec spec;
  spec.preset_name = "random";
  spec.in_channels = 1 + static_cast<int>(rng.index(3));
  spec.in_height = spec.in_width = 32;
  spec.stem_channels = 2 + static_cast<int>(rng.index(6));
  const int n_stages = 1 + static_cast<int>(rng.index(3));
  int width = spec.stem_channels;
  for (int s = 0; s < n_stages; ++s) {
    StageSpec st;
    st.bottleneck_width = 2 + static_cast<int>(rng.index(6));
    width = st.output_width = width + 2 + static_cast<int>(rng.index(8));
    st.subblocks = 1 + static_cast<int>(rng.index(4));
    st.first_stride = s == 0 ? 1 : 2;
    spec.stages.push_back(st);
  }
  const int head_pick = static_cast<int>(rng.index(3));
  if (head_pick == 0) {
    spec.head = HeadKind::none;
    spec.head_units = 0;
  } else if (head_pick == 1) {
    spec.head = HeadKind::sigmoid;
    spec.head_units = 1;
  } else {
    spec.head = HeadKind::softmax;
    spec.head_units = 2 + static_cast<int>(rng.index(5));
  }
  return spec;
}

}  // namespace

TEST_CASE("canonical totals: full and truncated backbones") {
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1))) == 23589761);
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1).truncated(1))) == 230017);
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1).truncated(2))) == 1460609);
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(1))) == 229760);
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(2))) == 1460096);
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::none, 0))) == 23587712);
}

TEST_CASE("canonical trainable counts per selector") {
  const LayerGraph g = build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1));
  CHECK(count_params(g, resolve(TrainableSelector::HeadOnly(), g)).trainable == 2049);
  CHECK(count_params(g, resolve(TrainableSelector::AllNonBN(), g)).trainable == 23483521);
  CHECK(count_params(g, resolve(TrainableSelector::LastSubBlocks(1), g)).trainable == 4461569);
  CHECK(count_params(g, resolve(TrainableSelector::LastSubBlocks(2), g)).trainable == 8921089);

  const LayerGraph g1 = build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1).truncated(1));
  CHECK(count_params(g1, resolve(TrainableSelector::HeadOnly(), g1)).trainable == 257);
  CHECK(count_params(g1, resolve(TrainableSelector::AllNonBN(), g1)).trainable == 224129);

  const LayerGraph g2 = build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1).truncated(2));
  CHECK(count_params(g2, resolve(TrainableSelector::HeadOnly(), g2)).trainable == 513);
  CHECK(count_params(g2, resolve(TrainableSelector::AllNonBN(), g2)).trainable == 1440385);
}

TEST_CASE("second-stage parameter mass from truncation differences") {
  const std::size_t one = total_params(build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(1)));
  const std::size_t two = total_params(build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(2)));
  CHECK(two - one == 1230336);
}

TEST_CASE("nano preset fixtures") {
  // Computed from the closed forms before implementation: widths /8 keep the
  // stage topology, so every kind of count shrinks but the structure holds.
  const LayerGraph g = build_graph(ArchSpec::nano(HeadKind::sigmoid, 1));
  CHECK(total_params(g) == 384369);
  CHECK(count_params(g, resolve(TrainableSelector::HeadOnly(), g)).trainable == 257);
  CHECK(count_params(g, resolve(TrainableSelector::AllNonBN(), g)).trainable == 371089);
  CHECK(count_params(g, resolve(TrainableSelector::LastSubBlocks(1), g)).trainable == 70273);
  CHECK(count_params(g, resolve(TrainableSelector::LastSubBlocks(2), g)).trainable == 140289);

  const LayerGraph g1 = build_graph(ArchSpec::nano(HeadKind::sigmoid, 1).truncated(1));
  CHECK(total_params(g1) == 5457);
  CHECK(count_params(g1, resolve(TrainableSelector::AllNonBN(), g1)).trainable == 4721);
  const LayerGraph g2 = build_graph(ArchSpec::nano(HeadKind::sigmoid, 1).truncated(2));
  CHECK(total_params(g2) == 26673);
  CHECK(count_params(g2, resolve(TrainableSelector::AllNonBN(), g2)).trainable == 24145);
  CHECK(total_params(build_graph(ArchSpec::nano(HeadKind::none, 0).truncated(1))) == 5424);
  CHECK(total_params(build_graph(ArchSpec::nano(HeadKind::none, 0).truncated(2))) == 26608);
}

TEST_CASE("closed-form counting equals brute-force enumeration") {
  Rng rng(515);
  for (int trial = 0; trial < 20; ++trial) {
    const ArchSpec spec = random_spec(rng);
    const LayerGraph g = build_graph(spec);
    CHECK(total_params(g) == brute_force_total(g));
    // Per-layer rows add up to the total.
    const auto report = count_params(g);
    std::size_t sum = 0;
    for (const auto& row : report.per_layer) sum += row.count;
    CHECK(sum == report.total);
  }
  CHECK(total_params(build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1))) ==
        brute_force_total(build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1))));
}

TEST_CASE("sub-block enumeration follows network order") {
  const LayerGraph g = build_graph(ArchSpec::resnet50(HeadKind::sigmoid, 1));
  const auto blocks = enumerate_subblocks(g);
  REQUIRE(blocks.size() == 16);
  CHECK(blocks.front().stage == 1);
  CHECK(blocks.front().block == 0);
  CHECK(blocks.front().is_conv_block);
  CHECK(blocks.back().stage == 4);
  CHECK(blocks.back().block == 2);
  CHECK_FALSE(blocks.back().is_conv_block);
  CHECK(std::string(blocks.back().kind_name()) == "identity_block");
  CHECK(blocks.back().prefix == "stage4.block2");

  // The last-1 suffix is exactly the final identity block of stage 4.
  const auto& last = blocks[blocks.size() - 1];
  CHECK((last.stage == 4 && last.block == 2 && !last.is_conv_block));

  const auto trunc = enumerate_subblocks(build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(1)));
  CHECK(trunc.size() == 3);
  for (const auto& b : trunc) CHECK(b.stage == 1);

  // Per-stage block counts are 3/4/6/3 in order.
  int per_stage[4] = {0, 0, 0, 0};
  for (const auto& b : blocks) per_stage[b.stage - 1]++;
  CHECK(per_stage[0] == 3);
  CHECK(per_stage[1] == 4);
  CHECK(per_stage[2] == 6);
  CHECK(per_stage[3] == 3);
}

TEST_CASE("truncation keeps a name-identical parameter prefix") {
  const LayerGraph full = build_graph(ArchSpec::resnet50(HeadKind::none, 0));
  for (int depth : {1, 2, 3, 4}) {
    const LayerGraph part = build_graph(ArchSpec::resnet50(HeadKind::none, 0).truncated(depth));
    std::set<std::string> full_names;
    for (const auto& p : full.params) full_names.insert(p.name);
    for (const auto& p : part.params) {
      CHECK(full_names.count(p.name) == 1);
      // And the shapes agree, so transfusion can copy the prefix.
      bool found = false;
      for (const auto& q : full.params)
        if (q.name == p.name) {
          CHECK(q.shape == p.shape);
          found = true;
        }
      CHECK(found);
    }
  }
}

TEST_CASE("invalid specs are rejected") {
  ArchSpec empty;
  empty.stages.clear();
  CHECK_THROWS_AS(build_graph(empty), Error);

  ArchSpec bad = ArchSpec::resnet50();
  bad.stages[1].subblocks = 0;
  CHECK_THROWS_AS(build_graph(bad), Error);

  CHECK_THROWS_AS(ArchSpec::resnet50().truncated(0), Error);
  CHECK_THROWS_AS(ArchSpec::resnet50().truncated(5), Error);

  ArchSpec two_unit_sigmoid = ArchSpec::resnet50();
  two_unit_sigmoid.head_units = 2;
  CHECK_THROWS_AS(build_graph(two_unit_sigmoid), Error);
}

TEST_CASE("pooled feature widths per preset") {
  auto feat_dim = [](const ArchSpec& spec) {
    const LayerGraph g = build_graph(spec);
    return numel(g.nodes[g.pool_node].out_shape);
  };
  CHECK(feat_dim(ArchSpec::resnet50(HeadKind::none, 0)) == 2048);
  CHECK(feat_dim(ArchSpec::resnet50(HeadKind::none, 0).truncated(1)) == 256);
  CHECK(feat_dim(ArchSpec::resnet50(HeadKind::none, 0).truncated(2)) == 512);
  CHECK(feat_dim(ArchSpec::nano(HeadKind::none, 0)) == 256);
  CHECK(feat_dim(ArchSpec::nano(HeadKind::none, 0).truncated(1)) == 32);
  CHECK(feat_dim(ArchSpec::nano(HeadKind::none, 0).truncated(2)) == 64);
}

TEST_CASE("default initialization follows the declared scheme") {
  auto [g, store] = build<float>(ArchSpec::nano(HeadKind::sigmoid, 1), 7);
  bool saw_conv = false, saw_bn = false;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    switch (p.kind) {
      case ParamKind::conv_weight: {
        saw_conv = true;
        const double fan_in =
            static_cast<double>(p.value.shape[1] * p.value.shape[2] * p.value.shape[3]);
        const double bound = std::sqrt(6.0 / fan_in) * 1.0000001;
        for (float v : p.value.data) {
          CHECK(v >= -bound);
          CHECK(v <= bound);
        }
        break;
      }
      case ParamKind::bn_scale:
      case ParamKind::bn_moving_var:
        saw_bn = true;
        for (float v : p.value.data) CHECK(v == 1.0f);
        break;
      case ParamKind::conv_bias:
      case ParamKind::dense_bias:
      case ParamKind::bn_shift:
      case ParamKind::bn_moving_mean:
        for (float v : p.value.data) CHECK(v == 0.0f);
        break;
      default:
        break;
    }
  }
  CHECK(saw_conv);
  CHECK(saw_bn);

  // Same seed, same bytes; different seed, different weights.
  auto [g2, store2] = build<float>(ArchSpec::nano(HeadKind::sigmoid, 1), 7);
  auto [g3, store3] = build<float>(ArchSpec::nano(HeadKind::sigmoid, 1), 8);
  CHECK(store.get("stem.conv.weight").value.data == store2.get("stem.conv.weight").value.data);
  CHECK(store.get("stem.conv.weight").value.data != store3.get("stem.conv.weight").value.data);
}
