// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the installed binary: golden plan output, exit
// codes, config validation, and a small deterministic run.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "stagelab/config.hpp"

using namespace stagelab;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string output;
};

CmdResult run_cmd(const std::string& args) {
  const char* bin = std::getenv("STAGELAB_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe) != nullptr) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path golden_dir() {
  const char* dir = std::getenv("STAGELAB_GOLDEN_DIR");
  REQUIRE(dir != nullptr);
  return fs::path(dir);
}

fs::path temp_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json smoke_config(const fs::path& out_dir) {
  return {
      {"strategy", "DA_TF_F1B"},
      {"preset", "nano"},
      {"seed", 11},
      {"precision", "f64"},
      {"output_dir", out_dir.string()},
      {"archive", {{"generate_seed", 3}}},
      {"dataset",
       {{"synthetic",
         {{"kind", "binary_blobs"}, {"n", 24}, {"channels", 3}, {"height", 64}, {"width", 64},
          {"seed", 5}, {"difficulty", 0.0}}}}},
      {"split", {{"ratio", 0.75}, {"seed", 2}}},
      {"overrides",
       {{"phase_epochs", {2, 1}}, {"phase_learning_rates", {0.01, 0.003}}, {"batch_size", 16}}},
      {"downstream",
       {{"model", "model1"},
        {"classes", 3},
        {"epochs", 3},
        {"learning_rate", 0.002},
        {"seed", 7},
        {"dataset",
         {{"synthetic",
           {{"kind", "kclass_textures"}, {"n", 18}, {"classes", 3}, {"channels", 3},
            {"height", 64}, {"width", 64}, {"seed", 13}}}}}}},
  };
}

}  // namespace

TEST_CASE("plan output is byte-stable against the golden files") {
  for (const char* name : {"DA", "DA_L2SB_PFT", "ImageNet"}) {
    const auto r = run_cmd(std::string("plan --strategy ") + name + " --preset resnet50");
    CHECK(r.exit_code == 0);
    CHECK(r.output == slurp(golden_dir() / (std::string("plan_") + name + "_resnet50.txt")));
  }
}

TEST_CASE("plan prints the canonical counts") {
  const auto da = run_cmd("plan --strategy DA --preset resnet50");
  CHECK(da.output.find("2,049") != std::string::npos);
  CHECK(da.output.find("23,483,521") != std::string::npos);
  const auto tf = run_cmd("plan --strategy ImageNet_TF_F1B");
  CHECK(tf.exit_code == 0);
  CHECK(tf.output.find("229,760") != std::string::npos);
  CHECK(tf.output.find("transfusion only") != std::string::npos);
}

TEST_CASE("unknown strategies and bad flags exit with 2") {
  const auto bogus = run_cmd("plan --strategy bogus");
  CHECK(bogus.exit_code == 2);
  CHECK(bogus.output.find("DA_L2SB_PFT") != std::string::npos);  // lists valid names
  CHECK(run_cmd("plan").exit_code == 2);                         // missing required flag
  CHECK(run_cmd("frobnicate").exit_code == 2);                   // unknown subcommand
}

TEST_CASE("energy subcommand: values, fixtures, errors") {
  const auto r = run_cmd("energy --runtime 215:56.988");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("94.86") != std::string::npos);

  const auto zero = run_cmd("energy --runtime 0:00");
  CHECK(zero.exit_code == 0);
  CHECK(zero.output.find("0.00") != std::string::npos);

  const auto fx = run_cmd("energy --from-fixtures");
  CHECK(fx.exit_code == 0);
  for (const char* kwh : {"94.86", "67.93", "30.41", "78.64", "76.90", "56.28"})
    CHECK(fx.output.find(kwh) != std::string::npos);

  CHECK(run_cmd("energy --runtime nonsense").exit_code == 2);
  CHECK(run_cmd("energy").exit_code == 2);
}

TEST_CASE("config validation rejects unknown keys with field paths") {
  auto doc = smoke_config("/tmp/unused");
  doc["typo_key"] = 1;
  try {
    parse_run_config(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
  }

  auto nested = smoke_config("/tmp/unused");
  nested["overrides"]["batchsize"] = 4;
  try {
    parse_run_config(nested);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batchsize") != std::string::npos);
    CHECK(msg.find("$.overrides") != std::string::npos);
  }

  auto no_archive = smoke_config("/tmp/unused");
  no_archive.erase("archive");
  CHECK_THROWS_AS(parse_run_config(no_archive), ConfigError);

  auto two_sources = smoke_config("/tmp/unused");
  two_sources["dataset"]["directory"] = "/tmp/x";
  CHECK_THROWS_AS(parse_run_config(two_sources), ConfigError);

  auto bad_precision = smoke_config("/tmp/unused");
  bad_precision["precision"] = "f57";
  CHECK_THROWS_AS(parse_run_config(bad_precision), ConfigError);
}

TEST_CASE("run executes end to end and its artifacts parse") {
  const auto out_dir = temp_dir("stagelab_cli_run");
  const auto cfg_path = out_dir / "config.json";
  std::ofstream(cfg_path) << smoke_config(out_dir / "artifacts").dump(2);

  const auto r = run_cmd("run --config " + cfg_path.string());
  INFO(r.output);
  REQUIRE(r.exit_code == 0);

  const auto art = out_dir / "artifacts";
  for (const char* f : {"final_weights.stgw", "run_record.json", "runtime_log.json",
                        "energy_report.csv", "energy_report.txt", "downstream_record.json",
                        "auc.svg"})
    CHECK(fs::exists(art / f));

  // The weights archive loads and the records parse.
  const WeightArchive a = load_archive(art / "final_weights.stgw");
  CHECK(a.entries.size() > 0);
  const auto record = nlohmann::json::parse(slurp(art / "run_record.json"));
  CHECK(record.at("strategy") == "DA_TF_F1B");
  CHECK(record.at("epochs").size() == 3);
  const auto down = nlohmann::json::parse(slurp(art / "downstream_record.json"));
  CHECK(down.at("epochs").size() == 3);
  const auto runtime = nlohmann::json::parse(slurp(art / "runtime_log.json"));
  CHECK(runtime.at("phase_hours").size() == 2);
  const std::string energy = slurp(art / "energy_report.csv");
  CHECK(energy.rfind("strategy,total_hours,kwh\n", 0) == 0);

  // The development curve CSV exists under the <strategy>__<evalset> scheme.
  CHECK(fs::exists(art / "DA_TF_F1B__development.csv"));
}

TEST_CASE("run is deterministic: same config and seed, identical records") {
  const auto base = temp_dir("stagelab_cli_det");
  auto cfg1 = smoke_config(base / "a");
  auto cfg2 = smoke_config(base / "b");
  std::ofstream(base / "c1.json") << cfg1.dump();
  std::ofstream(base / "c2.json") << cfg2.dump();

  REQUIRE(run_cmd("run --config " + (base / "c1.json").string()).exit_code == 0);
  REQUIRE(run_cmd("run --config " + (base / "c2.json").string()).exit_code == 0);

  auto strip_output_dir = [](const std::string& body, const std::string& dir) {
    std::string out = body;
    std::size_t pos;
    while ((pos = out.find(dir)) != std::string::npos) out.erase(pos, dir.size());
    return out;
  };
  // Identical up to the output_dir echoed inside the config snapshot.
  const std::string r1 = strip_output_dir(slurp(base / "a" / "run_record.json"), (base / "a").string());
  const std::string r2 = strip_output_dir(slurp(base / "b" / "run_record.json"), (base / "b").string());
  CHECK(r1 == r2);
  const std::string d1 =
      strip_output_dir(slurp(base / "a" / "downstream_record.json"), (base / "a").string());
  const std::string d2 =
      strip_output_dir(slurp(base / "b" / "downstream_record.json"), (base / "b").string());
  CHECK(d1 == d2);
  // Final weights are bitwise identical.
  CHECK(slurp(base / "a" / "final_weights.stgw") == slurp(base / "b" / "final_weights.stgw"));
}

TEST_CASE("run removes partial outputs when a late stage fails") {
  const auto dir = temp_dir("stagelab_cli_cleanup");
  auto doc = smoke_config(dir / "out");
  // Pre-training succeeds, then the downstream class count mismatches.
  doc["downstream"]["classes"] = 5;
  std::ofstream(dir / "cfg.json") << doc.dump();
  const auto r = run_cmd("run --config " + (dir / "cfg.json").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("classes") != std::string::npos);
  // Everything written before the failure is gone again.
  CHECK_FALSE(fs::exists(dir / "out" / "run_record.json"));
  CHECK_FALSE(fs::exists(dir / "out" / "final_weights.stgw"));
}

TEST_CASE("config accepts the class-weighting override") {
  auto doc = smoke_config("/tmp/unused");
  doc["overrides"]["class_weights"] = "inverse_frequency";
  CHECK(parse_run_config(doc).overrides.inverse_frequency_weights);
  doc["overrides"]["class_weights"] = "none";
  CHECK_FALSE(parse_run_config(doc).overrides.inverse_frequency_weights);
  doc["overrides"]["class_weights"] = "sqrt";
  CHECK_THROWS_AS(parse_run_config(doc), ConfigError);
}

TEST_CASE("run rejects configs with unknown keys before any work") {
  const auto dir = temp_dir("stagelab_cli_badcfg");
  auto doc = smoke_config(dir / "out");
  doc["extra"] = true;
  std::ofstream(dir / "bad.json") << doc.dump();
  const auto r = run_cmd("run --config " + (dir / "bad.json").string());
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("extra") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("report subcommand renders curves from records") {
  const auto dir = temp_dir("stagelab_cli_report");
  nlohmann::json record = {
      {"strategy", "DA"},
      {"seed", 1},
      {"config", nlohmann::json::object()},
      {"epochs",
       {{{"epoch", 1}, {"train_loss", 0.9}, {"dev_auc", 0.6}, {"ext_auc", 0.5}},
        {{"epoch", 2}, {"train_loss", 0.5}, {"dev_auc", 0.8}, {"ext_auc", 0.66}}}}};
  std::ofstream(dir / "rec.json") << record.dump();

  const auto r = run_cmd("report --records " + (dir / "rec.json").string() + " --out " +
                         (dir / "rpt").string() + " --format both --dip");
  INFO(r.output);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "rpt" / "DA__development.csv"));
  CHECK(fs::exists(dir / "rpt" / "DA__external.csv"));
  CHECK(fs::exists(dir / "rpt" / "auc.svg"));
  CHECK(r.output.find("dip") != std::string::npos);

  CHECK(run_cmd("report --records /nonexistent.json").exit_code == 2);
}
