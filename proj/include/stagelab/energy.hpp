// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cstdio>
#include <string>
#include <vector>

#include "stagelab/common.hpp"

namespace stagelab {

/// Energy model inputs. The defaults describe the single-accelerator cloud
/// setup the bundled reference runtimes were recorded on: one 250 W device
/// fully used, 35 GB of memory at 0.3725 W/GB, data-centre PUE 1.67, no
/// pragmatic scaling.
struct EnergyConfig {
  int device_count = 1;
  double device_power_watts = 250.0;
  double usage_factor = 1.0;  // in (0, 1]
  double memory_gb = 35.0;
  double memory_power_per_gb = 0.3725;  // W/GB
  double pue = 1.67;                    // >= 1
  double psf = 1.0;                     // >= 1

  void validate() const {
    if (device_count < 1) raise_config("energy: device_count must be >= 1");
    if (device_power_watts <= 0) raise_config("energy: device_power_watts must be positive");
    if (usage_factor <= 0 || usage_factor > 1) raise_config("energy: usage_factor must be in (0,1]");
    if (memory_gb <= 0 || memory_power_per_gb <= 0) raise_config("energy: memory terms must be positive");
    if (pue < 1) raise_config("energy: pue must be >= 1");
    if (psf < 1) raise_config("energy: psf must be >= 1");
  }
};

/// kWh = hours * (devices * device_power * usage + memory_gb * W/GB)
///       * PUE * PSF / 1000
inline double estimate_kwh(double hours, const EnergyConfig& cfg = {}) {
  if (hours < 0) raise(concat("estimate_kwh: negative duration ", hours));
  cfg.validate();
  const double watts = cfg.device_count * cfg.device_power_watts * cfg.usage_factor +
                       cfg.memory_gb * cfg.memory_power_per_gb;
  return hours * watts * cfg.pue * cfg.psf / 1000.0;
}

/// Parses "H:M.mmm" (hours, then decimal minutes) into hours.
/// "132:12.163" -> 132 h + 12.163 min; "29:00" -> 29 h.
inline double parse_duration(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= text.size())
    raise_config(concat("malformed duration '", text, "', expected hours:minutes"));
  const std::string hours_part = text.substr(0, colon);
  const std::string minutes_part = text.substr(colon + 1);
  for (char ch : hours_part)
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      raise_config(concat("malformed duration '", text, "': bad hours field"));
  bool dot_seen = false;
  for (char ch : minutes_part) {
    if (ch == '.' && !dot_seen) {
      dot_seen = true;
      continue;
    }
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      raise_config(concat("malformed duration '", text, "': bad minutes field"));
  }
  const double hours = std::strtod(hours_part.c_str(), nullptr);
  const double minutes = std::strtod(minutes_part.c_str(), nullptr);
  if (minutes >= 60.0)
    raise_config(concat("malformed duration '", text, "': minutes must be below 60"));
  return hours + minutes / 60.0;
}

struct RuntimeLog {
  std::vector<double> phase_hours;

  double total_hours() const {
    double t = 0;
    for (double h : phase_hours) t += h;
    return t;
  }
};

struct EnergyRow {
  std::string strategy;
  std::vector<double> phase_hours;
  double total_hours = 0;
  double kwh = 0;
};

/// Recorded wall times of the reference training runs, one row per
/// strategy; zero-phase strategies cost nothing. Feeding these through
/// estimate_kwh with the default config reproduces their published energy
/// figures.
inline std::vector<std::pair<std::string, RuntimeLog>> reference_runtimes() {
  auto h = [](const char* t) { return parse_duration(t); };
  std::vector<std::pair<std::string, RuntimeLog>> rows;
  rows.push_back({"ImageNet", RuntimeLog{{}}});
  rows.push_back({"ImageNet_TF_F1B", RuntimeLog{{}}});
  rows.push_back({"ImageNet_TF_F2B", RuntimeLog{{}}});
  rows.push_back({"DA_L1SB", RuntimeLog{{h("132:12.163"), h("22:25.804")}}});
  rows.push_back({"DA_L2SB", RuntimeLog{{h("132:12.163"), h("27:27.366")}}});
  rows.push_back({"DA", RuntimeLog{{h("132:12.163"), h("83:44.825")}}});
  rows.push_back({"DA_TF_F1B", RuntimeLog{{h("40:14.181"), h("29:00")}}});
  rows.push_back({"DA_TF_F2B", RuntimeLog{{h("68:17.844"), h("59:49.728")}}});
  rows.push_back({"DA_L1SB_PFT", RuntimeLog{{h("132:12.163"), h("14:56.916"), h("27:54.942")}}});
  rows.push_back({"DA_L2SB_PFT", RuntimeLog{{h("132:12.163"), h("18:54.731"), h("27:54.942")}}});
  return rows;
}

inline std::vector<EnergyRow> energy_table(
    const std::vector<std::pair<std::string, RuntimeLog>>& runtimes, const EnergyConfig& cfg = {}) {
  std::vector<EnergyRow> rows;
  rows.reserve(runtimes.size());
  for (const auto& [strategy, log] : runtimes) {
    EnergyRow row;
    row.strategy = strategy;
    row.phase_hours = log.phase_hours;
    row.total_hours = log.total_hours();
    row.kwh = estimate_kwh(row.total_hours, cfg);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string energy_csv(const std::vector<EnergyRow>& rows) {
  std::string out = "strategy,total_hours,kwh\n";
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%s,%.5f,%.2f\n", r.strategy.c_str(), r.total_hours, r.kwh);
    out += line;
  }
  return out;
}

/// Aligned text table: phase times, total, kWh.
inline std::string render_energy_table(const std::vector<EnergyRow>& rows) {
  std::size_t max_phases = 0;
  for (const auto& r : rows) max_phases = std::max(max_phases, r.phase_hours.size());
  std::string out = "strategy         ";
  for (std::size_t p = 0; p < max_phases; ++p) out += concat(" phase", p + 1, " (h) ");
  out += "  total (h)      kWh\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-17s", r.strategy.c_str());
    out += buf;
    for (std::size_t p = 0; p < max_phases; ++p) {
      if (p < r.phase_hours.size())
        std::snprintf(buf, sizeof(buf), " %10.3f ", r.phase_hours[p]);
      else
        std::snprintf(buf, sizeof(buf), " %10s ", "-");
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), " %10.3f %8.2f\n", r.total_hours, r.kwh);
    out += buf;
  }
  return out;
}

}  // namespace stagelab
