#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "hsdecay/error.hpp"

namespace hsdecay {

struct plot_series {
  std::string name;
  std::vector<double> x, y;
  bool staircase = false;  // horizontal then vertical segments
};

struct plot_options {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 640;
  int height = 400;
};

namespace detail {
inline std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string fmt_tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape_xml(std::string const& s) {
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

inline char const* palette(std::size_t i) {
  static char const* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return colors[i % 8];
}
}  // namespace detail

// Fixed-canvas SVG with one polyline per series. Output depends only on the
// input values, so equal tables give byte-identical files.
inline std::string render_svg(std::vector<plot_series> const& series, plot_options const& opt = {}) {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool any = false;
  for (auto const& s : series) {
    if (s.x.size() != s.y.size()) fail(error_kind::schema, "plot series '" + s.name + "' has mismatched x and y");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!any) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        any = true;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!any) fail(error_kind::precondition, "nothing to plot: the table is empty");
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;

  int const ml = 70, mr = 20, mt = 40, mb = 50;
  double const pw = opt.width - ml - mr, ph = opt.height - mt - mb;
  auto px = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(opt.width) + "\" height=\"" +
         std::to_string(opt.height) + "\" viewBox=\"0 0 " + std::to_string(opt.width) + " " +
         std::to_string(opt.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<rect x=\"" + std::to_string(ml) + "\" y=\"" + std::to_string(mt) + "\" width=\"" + detail::fmt(pw) +
         "\" height=\"" + detail::fmt(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    double const fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    out += "<text x=\"" + detail::fmt(px(fx)) + "\" y=\"" + std::to_string(opt.height - mb + 18) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + detail::fmt_tick(fx) + "</text>\n";
    out += "<text x=\"" + std::to_string(ml - 6) + "\" y=\"" + detail::fmt(py(fy) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt_tick(fy) + "</text>\n";
  }
  if (!opt.title.empty())
    out += "<text x=\"" + std::to_string(opt.width / 2) + "\" y=\"22\" font-size=\"14\" text-anchor=\"middle\">" +
           detail::escape_xml(opt.title) + "</text>\n";
  if (!opt.x_label.empty())
    out += "<text x=\"" + detail::fmt(ml + pw / 2) + "\" y=\"" + std::to_string(opt.height - 10) +
           "\" font-size=\"12\" text-anchor=\"middle\">" + detail::escape_xml(opt.x_label) + "</text>\n";
  if (!opt.y_label.empty())
    out += "<text x=\"16\" y=\"" + detail::fmt(mt + ph / 2) + "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           detail::fmt(mt + ph / 2) + ")\">" + detail::escape_xml(opt.y_label) + "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    auto const& s = series[si];
    std::string pts;
    double prev_y = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (s.staircase && !first) pts += detail::fmt(px(s.x[i])) + "," + detail::fmt(py(prev_y)) + " ";
      pts += detail::fmt(px(s.x[i])) + "," + detail::fmt(py(s.y[i])) + " ";
      prev_y = s.y[i];
      first = false;
    }
    if (!pts.empty()) pts.pop_back();
    out += "<polyline fill=\"none\" stroke=\"" + std::string(detail::palette(si)) + "\" stroke-width=\"1.5\" points=\"" +
           pts + "\"><title>" + detail::escape_xml(s.name) + "</title></polyline>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace hsdecay
