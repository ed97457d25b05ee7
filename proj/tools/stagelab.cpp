// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
//
// stagelab CLI: plan / run / energy / report.
// Exit codes: 0 success, 2 usage or config error, 1 runtime failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stagelab/config.hpp"
#include "stagelab/pipeline.hpp"
#include "stagelab/schedule.hpp"

namespace {

int cmd_plan(const std::string& strategy_name, const std::string& preset) {
  const stagelab::Strategy s = stagelab::catalog(strategy_name);
  const stagelab::PlanDoc doc = stagelab::plan(s, preset);
  std::cout << stagelab::render_plan(doc);
  return 0;
}

int cmd_run(const std::string& config_path) {
  const stagelab::RunConfig cfg = stagelab::load_run_config(config_path);
  stagelab::catalog(cfg.strategy);  // validate the name before doing any work
  const stagelab::RunArtifacts artifacts = stagelab::run_pipeline(cfg);
  for (const auto& f : artifacts.files) std::cout << f.string() << "\n";
  return 0;
}

int cmd_energy(const std::string& runtime, bool from_fixtures, const std::string& csv_out,
               const stagelab::EnergyConfig& energy_cfg) {
  std::vector<stagelab::EnergyRow> rows;
  if (from_fixtures) {
    rows = stagelab::energy_table(stagelab::reference_runtimes(), energy_cfg);
  } else {
    const double hours = stagelab::parse_duration(runtime);
    rows = stagelab::energy_table({{"run", stagelab::RuntimeLog{{hours}}}}, energy_cfg);
  }
  std::cout << stagelab::render_energy_table(rows);
  if (!csv_out.empty()) {
    std::ofstream f(csv_out, std::ios::binary | std::ios::trunc);
    if (!f) stagelab::raise(stagelab::concat("cannot write '", csv_out, "'"));
    f << stagelab::energy_csv(rows);
  }
  return 0;
}

stagelab::RunRecord record_from_json(const nlohmann::json& doc, const std::string& origin) {
  stagelab::RunRecord r;
  try {
    r.strategy = doc.at("strategy").get<std::string>();
    r.seed = doc.value("seed", 0ULL);
    for (const auto& e : doc.at("epochs")) {
      stagelab::EpochEntry entry;
      entry.epoch = e.at("epoch").get<int>();
      entry.train_loss = e.at("train_loss").get<double>();
      entry.dev_auc = e.at("dev_auc").get<double>();
      if (e.contains("ext_auc") && !e.at("ext_auc").is_null())
        entry.ext_auc = e.at("ext_auc").get<double>();
      r.epochs.push_back(entry);
    }
  } catch (const nlohmann::json::exception& ex) {
    stagelab::raise_config(stagelab::concat(origin, ": not a run record: ", ex.what()));
  }
  return r;
}

int cmd_report(const std::vector<std::string>& record_paths, const std::string& out_dir,
               const std::string& format, bool with_dip) {
  std::vector<stagelab::AucCurve> curves;
  std::vector<stagelab::RunRecord> records;
  for (const auto& path : record_paths) {
    std::ifstream f(path);
    if (!f) stagelab::raise_config(stagelab::concat("cannot open record '", path, "'"));
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      stagelab::raise_config(stagelab::concat("record '", path, "' is not JSON: ", e.what()));
    }
    records.push_back(record_from_json(doc, path));
    const auto& r = records.back();
    auto dev = stagelab::curve_from_record(r, "development");
    if (!dev.points.empty()) curves.push_back(std::move(dev));
    auto ext = stagelab::curve_from_record(r, "external");
    if (!ext.points.empty()) curves.push_back(std::move(ext));
  }
  std::filesystem::create_directories(out_dir);
  if (format == "csv" || format == "both")
    for (const auto& p : stagelab::emit_csv(curves, out_dir)) std::cout << p.string() << "\n";
  if (format == "svg" || format == "both") {
    const auto p = stagelab::emit_svg(curves, std::filesystem::path(out_dir) / "auc.svg");
    std::cout << p.string() << "\n";
  }
  if (with_dip) {
    for (const auto& r : records) {
      auto dev = stagelab::curve_from_record(r, "development");
      auto ext = stagelab::curve_from_record(r, "external");
      if (dev.points.empty() || ext.points.empty()) continue;
      const auto dip = stagelab::dip_report(dev, ext);
      std::printf("%s: dev median %.4f, ext median %.4f, dip %.4f\n", r.strategy.c_str(),
                  dip.development.median, dip.external.median, dip.median_dip);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stagelab: staged transfer-learning schedules with exact parameter accounting,\n"
               "AUC evaluation and an energy model"};
  app.require_subcommand(1);

  std::string plan_strategy, plan_preset = "resnet50";
  auto* plan = app.add_subcommand("plan", "print a strategy's phase/parameter plan");
  plan->add_option("--strategy", plan_strategy, "strategy name")->required();
  plan->add_option("--preset", plan_preset, "architecture preset (resnet50|nano)");

  std::string run_config;
  auto* run = app.add_subcommand("run", "execute a configured run end to end");
  run->add_option("--config", run_config, "JSON config path")->required();

  std::string energy_runtime, energy_csv_out;
  bool energy_fixtures = false;
  stagelab::EnergyConfig energy_cfg;
  auto* energy = app.add_subcommand("energy", "estimate energy from run times");
  energy->add_option("--runtime", energy_runtime, "duration as hours:minutes, e.g. 215:56.988");
  energy->add_flag("--from-fixtures", energy_fixtures, "use the bundled reference runtimes");
  energy->add_option("--csv", energy_csv_out, "also write a CSV report to this path");
  energy->add_option("--device-power", energy_cfg.device_power_watts, "device power draw, watts");
  energy->add_option("--devices", energy_cfg.device_count, "device count");
  energy->add_option("--usage", energy_cfg.usage_factor, "usage factor in (0,1]");
  energy->add_option("--memory-gb", energy_cfg.memory_gb, "memory, GB");
  energy->add_option("--pue", energy_cfg.pue, "power usage effectiveness");
  energy->add_option("--psf", energy_cfg.psf, "pragmatic scaling factor");

  std::vector<std::string> report_records;
  std::string report_out = "reports", report_format = "both";
  bool report_dip = false;
  auto* report = app.add_subcommand("report", "emit CSV/SVG charts from run records");
  report->add_option("--records", report_records, "run record JSON files")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--format", report_format, "csv|svg|both");
  report->add_flag("--dip", report_dip, "print development/external dip statistics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (plan->parsed()) return cmd_plan(plan_strategy, plan_preset);
    if (run->parsed()) return cmd_run(run_config);
    if (energy->parsed()) {
      if (energy_fixtures && !energy_runtime.empty())
        stagelab::raise_config("use either --runtime or --from-fixtures, not both");
      if (!energy_fixtures && energy_runtime.empty())
        stagelab::raise_config("energy needs --runtime or --from-fixtures");
      return cmd_energy(energy_runtime, energy_fixtures, energy_csv_out, energy_cfg);
    }
    if (report->parsed())
      return cmd_report(report_records, report_out, report_format, report_dip);
  } catch (const stagelab::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
