// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "stagelab/common.hpp"

namespace stagelab {

/// Binary ranking AUC: the Mann-Whitney statistic U/(n+ * n-) with ties
/// counted one half. The numerator is accumulated in integers (twice the
/// rank sum), so the result is exact and matches pairwise counting bit for
/// bit.
inline double auc_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) raise("auc: scores and labels differ in length");
  std::int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1)
      ++n_pos;
    else if (y == 0)
      ++n_neg;
    else
      raise(concat("auc: label must be 0 or 1, got ", y));
  }
  if (n_pos == 0 || n_neg == 0) raise("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, walking tie groups: every member of a tie
  // group shares the average rank, whose double (lo + hi) is an integer.
  std::int64_t two_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::int64_t two_avg_rank = static_cast<std::int64_t>(i + 1) + static_cast<std::int64_t>(j + 1);
    for (std::size_t t = i; t <= j; ++t)
      if (labels[order[t]] == 1) two_rank_sum += two_avg_rank;
    i = j + 1;
  }
  const std::int64_t two_u = two_rank_sum - n_pos * (n_pos + 1);
  return static_cast<double>(two_u) / static_cast<double>(2 * n_pos * n_neg);
}

/// Macro one-vs-rest AUC: the mean over classes of the binary AUC of that
/// class's score column against "label == class".
inline double auc_multiclass(const std::vector<std::vector<double>>& scores,
                             const std::vector<int>& labels) {
  if (scores.empty()) raise("auc: empty score matrix");
  const std::size_t k = scores[0].size();
  if (k < 2) raise("auc: need at least two classes");
  if (scores.size() != labels.size()) raise("auc: scores and labels differ in length");
  std::vector<std::int64_t> counts(k, 0);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      raise(concat("auc: label ", y, " out of range for ", k, " classes"));
    ++counts[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < k; ++c)
    if (counts[c] == 0) raise(concat("auc: class ", c, " has no samples"));

  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> col(labels.size());
    std::vector<int> ovr(labels.size());
    for (std::size_t r = 0; r < labels.size(); ++r) {
      if (scores[r].size() != k) raise("auc: ragged score matrix");
      col[r] = scores[r][c];
      ovr[r] = labels[r] == static_cast<int>(c) ? 1 : 0;
    }
    sum += auc_binary(col, ovr);
  }
  return sum / static_cast<double>(k);
}

struct AucCurve {
  std::string strategy;
  std::string eval_set;  // "development" or "external"
  std::vector<std::pair<int, double>> points;  // (epoch, auc), epochs strictly increasing
};

/// First epoch whose AUC reaches the threshold; empty if none does.
inline std::optional<int> threshold_epoch(const AucCurve& curve, double threshold = 0.9) {
  if (curve.points.empty()) raise("threshold_epoch: empty curve");
  for (const auto& [epoch, auc] : curve.points)
    if (auc >= threshold) return epoch;
  return std::nullopt;
}

struct BoxStats {
  double whisker_low = 0;   // 1st percentile
  double q1 = 0;
  double median = 0;
  double q3 = 0;
  double whisker_high = 0;  // 99th percentile
  std::size_t n = 0;
};

/// Quantile by linear interpolation between order statistics:
/// q(p) sits at index (n-1)*p of the sorted values.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

/// Box statistics with fixed 1%/99% whiskers.
inline BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) raise("box_stats: empty input");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.n = values.size();
  s.whisker_low = quantile_sorted(values, 0.01);
  s.q1 = quantile_sorted(values, 0.25);
  s.median = quantile_sorted(values, 0.50);
  s.q3 = quantile_sorted(values, 0.75);
  s.whisker_high = quantile_sorted(values, 0.99);
  return s;
}

struct DipReport {
  BoxStats development;
  BoxStats external;
  double median_dip = 0;  // median(dev) - median(ext); negative means external is better
};

inline DipReport dip_report(const AucCurve& dev, const AucCurve& ext) {
  auto values = [](const AucCurve& c) {
    std::vector<double> v;
    v.reserve(c.points.size());
    for (const auto& p : c.points) v.push_back(p.second);
    return v;
  };
  DipReport r;
  r.development = box_stats(values(dev));
  r.external = box_stats(values(ext));
  r.median_dip = r.development.median - r.external.median;
  return r;
}

namespace detail {
inline std::string fmt_auc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}
inline std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}
inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(concat("cannot open '", path.string(), "' for writing"));
  f << body;
  if (!f) raise(concat("write failed for '", path.string(), "'"));
}
}  // namespace detail

inline std::string curves_csv(const std::vector<AucCurve>& curves) {
  std::string out = "strategy,eval_set,epoch,auc\n";
  for (const auto& c : curves)
    for (const auto& [epoch, auc] : c.points)
      out += concat(c.strategy, ",", c.eval_set, ",", epoch, ",", detail::fmt_auc(auc), "\n");
  return out;
}

/// One CSV per curve, named <strategy>__<evalset>.csv. Returns written paths.
inline std::vector<std::filesystem::path> emit_csv(const std::vector<AucCurve>& curves,
                                                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& c : curves) {
    const auto path = dir / concat(c.strategy, "__", c.eval_set, ".csv");
    detail::write_file(path, curves_csv({c}));
    written.push_back(path);
  }
  return written;
}

/// Static SVG line chart, fixed 800x500 viewport, one polyline per curve.
/// Markup is emitted directly so identical input gives identical bytes.
inline std::string curves_svg(const std::vector<AucCurve>& curves) {
  const double width = 800, height = 500;
  const double ml = 60, mr = 150, mt = 20, mb = 45;
  const double px = width - ml - mr, py = height - mt - mb;

  int max_epoch = 1;
  for (const auto& c : curves)
    for (const auto& p : c.points) max_epoch = std::max(max_epoch, p.first);

  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const std::size_t n_colors = sizeof(palette) / sizeof(palette[0]);

  auto x_of = [&](double epoch) { return ml + px * (epoch / static_cast<double>(max_epoch)); };
  auto y_of = [&](double auc) { return mt + py * (1.0 - auc); };

  std::string s;
  s += concat("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"", width, "\" height=\"", height,
              "\" viewBox=\"0 0 ", width, " ", height, "\">\n");
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Axes.
  s += concat("<line x1=\"", detail::fmt_coord(ml), "\" y1=\"", detail::fmt_coord(mt), "\" x2=\"",
              detail::fmt_coord(ml), "\" y2=\"", detail::fmt_coord(mt + py),
              "\" stroke=\"black\"/>\n");
  s += concat("<line x1=\"", detail::fmt_coord(ml), "\" y1=\"", detail::fmt_coord(mt + py),
              "\" x2=\"", detail::fmt_coord(ml + px), "\" y2=\"", detail::fmt_coord(mt + py),
              "\" stroke=\"black\"/>\n");
  for (int tick = 0; tick <= 10; tick += 2) {
    const double v = tick / 10.0;
    s += concat("<text x=\"", detail::fmt_coord(ml - 8), "\" y=\"", detail::fmt_coord(y_of(v) + 4),
                "\" font-size=\"11\" text-anchor=\"end\">", detail::fmt_coord(v), "</text>\n");
    s += concat("<line x1=\"", detail::fmt_coord(ml - 4), "\" y1=\"", detail::fmt_coord(y_of(v)),
                "\" x2=\"", detail::fmt_coord(ml), "\" y2=\"", detail::fmt_coord(y_of(v)),
                "\" stroke=\"black\"/>\n");
  }
  s += concat("<text x=\"", detail::fmt_coord(ml + px / 2), "\" y=\"",
              detail::fmt_coord(height - 10), "\" font-size=\"13\" text-anchor=\"middle\">epoch</text>\n");
  s += concat("<text x=\"16\" y=\"", detail::fmt_coord(mt + py / 2),
              "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 ",
              detail::fmt_coord(mt + py / 2), ")\">AUC</text>\n");

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = palette[ci % n_colors];
    std::string pts;
    for (const auto& [epoch, auc] : c.points) {
      if (!pts.empty()) pts += " ";
      pts += concat(detail::fmt_coord(x_of(epoch)), ",", detail::fmt_coord(y_of(auc)));
    }
    s += concat("<polyline fill=\"none\" stroke=\"", color, "\" stroke-width=\"1.5\" points=\"",
                pts, "\"/>\n");
    // Legend.
    const double ly = mt + 16 + 18 * static_cast<double>(ci);
    s += concat("<line x1=\"", detail::fmt_coord(ml + px + 10), "\" y1=\"", detail::fmt_coord(ly),
                "\" x2=\"", detail::fmt_coord(ml + px + 34), "\" y2=\"", detail::fmt_coord(ly),
                "\" stroke=\"", color, "\" stroke-width=\"1.5\"/>\n");
    s += concat("<text x=\"", detail::fmt_coord(ml + px + 40), "\" y=\"",
                detail::fmt_coord(ly + 4), "\" font-size=\"11\">", c.strategy, " (", c.eval_set,
                ")</text>\n");
  }
  s += "</svg>\n";
  return s;
}

inline std::filesystem::path emit_svg(const std::vector<AucCurve>& curves,
                                      const std::filesystem::path& path) {
  detail::write_file(path, curves_svg(curves));
  return path;
}

}  // namespace stagelab
