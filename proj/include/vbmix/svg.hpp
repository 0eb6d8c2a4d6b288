#pragma once

// Minimal static line plots as standalone SVG. Output bytes depend only on the input.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vbmix/errors.hpp"

namespace vbmix {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotLabels {
  std::string title;
  std::string x_label;
  std::string y_label;
};

namespace detail {

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Roughly five round-numbered ticks covering [lo, hi].
inline std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    step = m * mag;
    if (span / step <= 6.0) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

}  // namespace detail

inline std::string render_svg_lines(const std::vector<Series>& series, const PlotLabels& labels) {
  if (series.empty()) throw ContractViolation("render_svg_lines: no series");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw ContractViolation("render_svg_lines: series '" + s.name + "' is empty or ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]))
        throw ContractViolation("render_svg_lines: non-finite point in series '" + s.name + "'");
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) { xmin -= 0.5; xmax += 0.5; }
  if (ymax == ymin) { ymin -= 0.5; ymax += 0.5; }
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  constexpr double W = 720, H = 480, left = 80, right = 170, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;
  const auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  const auto py = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"480\" viewBox=\"0 0 720 480\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"720\" height=\"480\" fill=\"white\"/>\n";
  svg += "<text x=\"" + detail::fmt("%.2f", left + pw / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::xml_escape(labels.title) + "</text>\n";
  svg += "<rect x=\"" + detail::fmt("%.2f", left) + "\" y=\"" + detail::fmt("%.2f", top) + "\" width=\"" + detail::fmt("%.2f", pw) +
         "\" height=\"" + detail::fmt("%.2f", ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::nice_ticks(xmin, xmax)) {
    const std::string x = detail::fmt("%.2f", px(t));
    svg += "<line x1=\"" + x + "\" y1=\"" + detail::fmt("%.2f", top + ph) + "\" x2=\"" + x + "\" y2=\"" +
           detail::fmt("%.2f", top + ph + 5) + "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + x + "\" y=\"" + detail::fmt("%.2f", top + ph + 18) + "\" text-anchor=\"middle\">" + detail::fmt("%g", t) + "</text>\n";
  }
  for (double t : detail::nice_ticks(ymin, ymax)) {
    const std::string y = detail::fmt("%.2f", py(t));
    svg += "<line x1=\"" + detail::fmt("%.2f", left - 5) + "\" y1=\"" + y + "\" x2=\"" + detail::fmt("%.2f", left) + "\" y2=\"" + y +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + detail::fmt("%.2f", left - 8) + "\" y=\"" + y + "\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
           detail::fmt("%g", t) + "</text>\n";
  }
  svg += "<text x=\"" + detail::fmt("%.2f", left + pw / 2) + "\" y=\"" + detail::fmt("%.2f", H - 15) + "\" text-anchor=\"middle\">" +
         detail::xml_escape(labels.x_label) + "</text>\n";
  svg += "<text x=\"18\" y=\"" + detail::fmt("%.2f", top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " +
         detail::fmt("%.2f", top + ph / 2) + ")\">" + detail::xml_escape(labels.y_label) + "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = palette[s % std::size(palette)];
    std::string points;
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (i) points += ' ';
      points += detail::fmt("%.2f", px(series[s].x[i])) + "," + detail::fmt("%.2f", py(series[s].y[i]));
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + points + "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(s);
    svg += "<line x1=\"" + detail::fmt("%.2f", W - right + 12) + "\" y1=\"" + detail::fmt("%.2f", ly) + "\" x2=\"" +
           detail::fmt("%.2f", W - right + 36) + "\" y2=\"" + detail::fmt("%.2f", ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::fmt("%.2f", W - right + 42) + "\" y=\"" + detail::fmt("%.2f", ly) + "\" dominant-baseline=\"middle\">" +
           detail::xml_escape(series[s].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

inline void emit_svg_lines(const std::vector<Series>& series, const PlotLabels& labels, const std::filesystem::path& path) {
  const std::string svg = render_svg_lines(series, labels);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << svg;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace vbmix
