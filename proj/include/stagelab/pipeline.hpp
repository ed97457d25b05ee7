// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stagelab/config.hpp"

namespace stagelab {

// Orchestration of one configured run: dataset -> transfusion -> phased
// pre-training -> feature extraction -> downstream training -> reports.
// Every artifact lands in the config's output directory; on failure the
// files written so far are removed.

struct RunArtifacts {
  std::vector<std::filesystem::path> files;
};

namespace detail {

class ArtifactTracker {
 public:
  explicit ArtifactTracker(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path target(const std::string& name) {
    auto p = dir_ / name;
    files_.push_back(p);
    return p;
  }

  void write_text(const std::string& name, const std::string& body) {
    std::ofstream f(target(name), std::ios::binary | std::ios::trunc);
    if (!f) raise(concat("cannot write artifact '", name, "'"));
    f << body;
  }

  void discard_all() {
    std::error_code ec;
    for (const auto& p : files_) std::filesystem::remove(p, ec);
  }

  void absorb(const std::vector<std::filesystem::path>& more) {
    files_.insert(files_.end(), more.begin(), more.end());
  }

  const std::vector<std::filesystem::path>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
};

/// The stand-in for pre-trained base weights: a seeded He-initialized full
/// (untruncated, headless) backbone of the preset family, archived.
inline WeightArchive obtain_archive(const RunConfig& cfg) {
  if (cfg.archive.path) return load_archive(*cfg.archive.path);
  ArchSpec base;
  if (cfg.preset == "resnet50")
    base = ArchSpec::resnet50(HeadKind::none, 0);
  else if (cfg.preset == "nano")
    base = ArchSpec::nano(HeadKind::none, 0);
  else
    raise_config(concat("unknown preset '", cfg.preset, "'"));
  LayerGraph g = build_graph(base);
  ParameterStore<float> store(g.params);
  store.init_default(*cfg.archive.generate_seed);
  return make_archive(store);
}

template <typename R>
RunArtifacts run_pipeline_impl(const RunConfig& cfg) {
  ArtifactTracker out(cfg.output_dir);
  try {
    const Strategy strategy = catalog(cfg.strategy);
    const WeightArchive archive = obtain_archive(cfg);

    DatasetHandle full_ds = load_dataset(cfg.dataset);
    DatasetHandle train_ds, dev_ds;
    bool have_dev = false;
    if (cfg.split.ratio < 1.0) {
      auto [tr, te] = split(full_ds, cfg.split.ratio, cfg.split.seed);
      train_ds = std::move(tr);
      dev_ds = std::move(te);
      have_dev = dev_ds.count() > 0;
      if (have_dev) {
        // AUC needs both classes in the held-out set.
        auto counts = dev_ds.class_counts();
        for (auto c : counts)
          if (c == 0) have_dev = false;
      }
    } else {
      train_ds = std::move(full_ds);
    }
    DatasetHandle ext_ds;
    bool have_ext = false;
    if (cfg.external) {
      ext_ds = load_dataset(*cfg.external);
      have_ext = ext_ds.count() > 0;
    }

    auto result = pretrain<R>(strategy, cfg.preset, archive, train_ds,
                              have_dev ? &dev_ds : nullptr, have_ext ? &ext_ds : nullptr,
                              cfg.overrides, cfg.seed);
    result.record.config_snapshot = cfg.raw;

    save_archive(result.store, out.target("final_weights.stgw"));
    out.write_text("run_record.json", run_record_json(result.record).dump(2) + "\n");

    // Wall-clock artifacts live apart from the run record: the record is a
    // pure function of (config, seed), measured times are not.
    nlohmann::json runtime = {{"strategy", strategy.name},
                              {"phase_hours", result.runtime.phase_hours},
                              {"total_hours", result.runtime.total_hours()}};
    out.write_text("runtime_log.json", runtime.dump(2) + "\n");
    const auto energy_rows = energy_table({{strategy.name, result.runtime}}, cfg.energy);
    out.write_text("energy_report.csv", energy_csv(energy_rows));
    out.write_text("energy_report.txt", render_energy_table(energy_rows));

    std::vector<AucCurve> curves;
    if (have_dev && !result.record.epochs.empty())
      curves.push_back(curve_from_record(result.record, "development"));
    if (have_ext && !result.record.epochs.empty())
      curves.push_back(curve_from_record(result.record, "external"));

    if (cfg.downstream) {
      const auto& d = *cfg.downstream;
      DatasetHandle ds_full = load_dataset(d.dataset);
      if (static_cast<int>(ds_full.class_names.size()) != d.classes)
        raise(concat("downstream dataset has ", ds_full.class_names.size(), " classes, config says ",
                     d.classes));
      auto [ds_train, ds_test] = split(ds_full, d.split.ratio, d.split.seed);

      Tensor<R> train_feat = extract_features(result.graph, result.store, ds_train);
      const int feat_dim = static_cast<int>(train_feat.shape[1]);
      const DownstreamModelSpec spec = DownstreamModelSpec::make(d.model, feat_dim, d.classes);

      std::vector<FeatureSet<R>> evals;
      if (ds_test.count() > 0)
        evals.push_back(FeatureSet<R>{"development",
                                      extract_features(result.graph, result.store, ds_test),
                                      ds_test.labels});
      DatasetHandle ds_ext;
      if (d.external) {
        ds_ext = load_dataset(*d.external);
        evals.push_back(FeatureSet<R>{"external",
                                      extract_features(result.graph, result.store, ds_ext),
                                      ds_ext.labels});
      }

      auto down = train_downstream<R>(spec, train_feat, ds_train.labels, evals, d.train);
      down.record.strategy = concat(strategy.name, "+", d.model);
      down.record.config_snapshot = cfg.raw;
      out.write_text("downstream_record.json", run_record_json(down.record).dump(2) + "\n");

      if (!evals.empty()) curves.push_back(curve_from_record(down.record, "development"));
      if (evals.size() > 1) {
        curves.push_back(curve_from_record(down.record, "external"));
        const DipReport dip = dip_report(curve_from_record(down.record, "development"),
                                         curve_from_record(down.record, "external"));
        std::string csv =
            "curve,whisker_low,q1,median,q3,whisker_high,n\n" +
            concat("development,", dip.development.whisker_low, ",", dip.development.q1, ",",
                   dip.development.median, ",", dip.development.q3, ",",
                   dip.development.whisker_high, ",", dip.development.n, "\n") +
            concat("external,", dip.external.whisker_low, ",", dip.external.q1, ",",
                   dip.external.median, ",", dip.external.q3, ",", dip.external.whisker_high, ",",
                   dip.external.n, "\n") +
            concat("median_dip,", dip.median_dip, ",,,,,\n");
        out.write_text("dip_report.csv", csv);
      }
    }

    if (!curves.empty()) {
      out.absorb(emit_csv(curves, out.dir()));
      emit_svg(curves, out.target("auc.svg"));
    }

    RunArtifacts artifacts;
    artifacts.files = out.files();
    return artifacts;
  } catch (...) {
    out.discard_all();
    throw;
  }
}

}  // namespace detail

inline RunArtifacts run_pipeline(const RunConfig& cfg) {
  if (cfg.precision == "f64") return detail::run_pipeline_impl<double>(cfg);
  return detail::run_pipeline_impl<float>(cfg);
}

}  // namespace stagelab
