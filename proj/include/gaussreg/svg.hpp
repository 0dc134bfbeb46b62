// Copyright 2026 The gaussreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Standalone SVG charts for the band and anomaly views.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "gaussreg/error.hpp"
#include "gaussreg/gauss_head.hpp"
#include "gaussreg/uq_apps.hpp"

namespace gaussreg::svg {

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  static Range of(std::span<const double> v) {
    if (v.empty()) return {};
    auto [a, b] = std::minmax_element(v.begin(), v.end());
    Range r{*a, *b};
    if (r.hi - r.lo <= 0.0) {
      r.lo -= 0.5;
      r.hi += 0.5;
    }
    return r;
  }
  Range merged(const Range& o) const { return {std::min(lo, o.lo), std::max(hi, o.hi)}; }
  Range padded(double frac) const {
    const double p = (hi - lo) * frac;
    return {lo - p, hi + p};
  }
};

/// Fixed-precision coordinates keep output byte-stable.
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Canvas {
 public:
  Canvas(double width, double height, Range x, Range y) : width_(width), height_(height), x_(x), y_(y) {}

  double px(double x) const { return kMargin + (x - x_.lo) / (x_.hi - x_.lo) * (width_ - 2 * kMargin); }
  double py(double y) const { return height_ - kMargin - (y - y_.lo) / (y_.hi - y_.lo) * (height_ - 2 * kMargin); }
  double py(double y, const Range& r) const {
    return height_ - kMargin - (y - r.lo) / (r.hi - r.lo) * (height_ - 2 * kMargin);
  }

  void polyline(std::span<const double> xs, std::span<const double> ys, const std::string& stroke,
                const std::string& cls, const Range* y_range = nullptr) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) pts += ' ';
      pts += num(px(xs[i])) + "," + num(y_range ? py(ys[i], *y_range) : py(ys[i]));
    }
    body_ += "<polyline class=\"" + cls + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\" points=\"" +
             pts + "\"/>\n";
  }

  /// Closed region between upper and lower curves over the same xs.
  void band(std::span<const double> xs, std::span<const double> lower, std::span<const double> upper,
            const std::string& fill, const std::string& cls) {
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) pts += num(px(xs[i])) + "," + num(py(upper[i])) + " ";
    for (std::size_t i = xs.size(); i-- > 0;) pts += num(px(xs[i])) + "," + num(py(lower[i])) + (i ? " " : "");
    body_ += "<polygon class=\"" + cls + "\" fill=\"" + fill + "\" fill-opacity=\"0.6\" stroke=\"none\" points=\"" + pts +
             "\"/>\n";
  }

  void points(std::span<const double> xs, std::span<const double> ys, const std::string& fill) {
    body_ += "<g class=\"data\" fill=\"" + fill + "\">\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      body_ += "<circle cx=\"" + num(px(xs[i])) + "\" cy=\"" + num(py(ys[i])) + "\" r=\"1.2\"/>\n";
    }
    body_ += "</g>\n";
  }

  /// Horizontal rule across the plot area at a y position in pixels.
  void rule(double y_px, const std::string& stroke, const std::string& cls) {
    body_ += "<line class=\"" + cls + "\" x1=\"" + num(kMargin) + "\" y1=\"" + num(y_px) + "\" x2=\"" +
             num(width_ - kMargin) + "\" y2=\"" + num(y_px) + "\" stroke=\"" + stroke +
             "\" stroke-dasharray=\"6 4\" stroke-width=\"1\"/>\n";
  }

  void text(double x_px, double y_px, const std::string& s, const std::string& anchor = "start") {
    body_ += "<text x=\"" + num(x_px) + "\" y=\"" + num(y_px) + "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"" +
             anchor + "\">" + escape(s) + "</text>\n";
  }

  std::string str(const std::string& title) const {
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" + num(height_) +
           "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n";
    out += "<title>" + escape(title) + "</title>\n";
    out += "<rect x=\"0\" y=\"0\" width=\"" + num(width_) + "\" height=\"" + num(height_) + "\" fill=\"white\"/>\n";
    out += "<rect class=\"frame\" x=\"" + num(kMargin) + "\" y=\"" + num(kMargin) + "\" width=\"" +
           num(width_ - 2 * kMargin) + "\" height=\"" + num(height_ - 2 * kMargin) +
           "\" fill=\"none\" stroke=\"#444\" stroke-width=\"1\"/>\n";
    out += body_;
    out += "</svg>\n";
    return out;
  }

  static constexpr double kMargin = 50.0;

 private:
  double width_, height_;
  Range x_, y_;
  std::string body_;
};

/// Regression mean as a line, the mu +/- k sigma region as a filled band,
/// and the raw samples as dots. grid_pred is in original units.
inline std::string band_plot(std::span<const double> grid_x, const GaussianBatch& grid_pred, double k,
                             std::span<const double> data_x, std::span<const double> data_y) {
  if (grid_pred.dim() != 1 || grid_pred.size() != grid_x.size()) {
    throw DimensionError("band_plot: expects one-dimensional predictions on the grid");
  }
  std::vector<double> lower(grid_x.size()), upper(grid_x.size()), mean(grid_x.size());
  for (std::size_t i = 0; i < grid_x.size(); ++i) {
    const IntervalBand b = confidence_interval(grid_pred.at(i), k);
    lower[i] = b.lower[0];
    upper[i] = b.upper[0];
    mean[i] = grid_pred.mu[i];
  }
  Range xr = Range::of(grid_x);
  if (!data_x.empty()) xr = xr.merged(Range::of(data_x));
  Range yr = Range::of(lower).merged(Range::of(upper));
  if (!data_y.empty()) yr = yr.merged(Range::of(data_y));
  Canvas c(800, 500, xr.padded(0.02), yr.padded(0.05));
  c.band(grid_x, lower, upper, "#bbbbbb", "band");
  c.points(data_x, data_y, "#1f77b4");
  c.polyline(grid_x, mean, "#d62728", "mean");
  c.text(Canvas::kMargin, 30, "mean with +/-" + format_double(k) + " sigma band");
  return c.str("Gaussian regression band");
}

/// Series values and normalized uncertainty on a shared time axis, with the
/// flagging threshold drawn as a dashed rule.
inline std::string anomaly_plot(std::span<const double> values, const AnomalyReport& report) {
  if (values.empty()) throw DataError("anomaly_plot: empty series");
  std::vector<double> t(values.size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  std::vector<double> ut;
  for (auto i : report.time_index) ut.push_back(static_cast<double>(i));

  const Range vr = Range::of(values).padded(0.05);
  const Range ur{-0.05, 1.05};
  Canvas c(900, 450, Range{0.0, static_cast<double>(std::max<std::size_t>(values.size() - 1, 1))}, vr);
  c.polyline(t, values, "#1f77b4", "value");
  c.polyline(ut, report.normalized, "#d62728", "uncertainty", &ur);

  double level = report.threshold;
  if (!report.normalized_threshold && !report.uncertainty.empty()) {
    const auto [lo, hi] = std::minmax_element(report.uncertainty.begin(), report.uncertainty.end());
    level = *hi > *lo ? (report.threshold - *lo) / (*hi - *lo) : 0.0;
  }
  c.rule(c.py(level, ur), "#555555", "threshold");
  c.text(Canvas::kMargin, 30, "value (blue), normalized uncertainty (red), threshold " + format_double(report.threshold));
  return c.str("Uncertainty-flagged anomalies");
}

}  // namespace gaussreg::svg
