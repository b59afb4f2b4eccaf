//
// Copyright 2026 The CWRF Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Minimal SVG charts: scatter and line series on linear or log10 axes.

#ifndef CWRF_SVG_HPP_
#define CWRF_SVG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cwrf/error.hpp"

namespace cwrf::svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Series {
  std::string name;
  std::string color = "#1f77b4";
  std::vector<Point> points;
  bool line = false;  // polyline through the points instead of markers
  double marker_radius = 3.0;
};

struct Axis {
  std::string label;
  bool log = false;
  // Range; computed from the data when lo >= hi.
  double lo = 0.0;
  double hi = 0.0;
};

struct Plot {
  std::string title;
  Axis x, y;
  std::vector<Series> series;
  bool diagonal = false;  // y = x reference line
  int width = 640;
  int height = 480;
};

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                               "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return colors;
}

// Keeps every k-th point so at most `limit` remain.
inline std::vector<Point> subsample(const std::vector<Point>& pts, std::size_t limit) {
  if (pts.size() <= limit || limit == 0) return pts;
  std::vector<Point> out;
  out.reserve(limit);
  const double step = static_cast<double>(pts.size()) / static_cast<double>(limit);
  for (std::size_t i = 0; i < limit; ++i) {
    out.push_back(pts[static_cast<std::size_t>(static_cast<double>(i) * step)]);
  }
  return out;
}

namespace detail {

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

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Scale {
  double lo, hi;
  bool log;
  double pixel_lo, pixel_hi;

  double operator()(double v) const {
    const double a = log ? std::log10(lo) : lo;
    const double b = log ? std::log10(hi) : hi;
    const double t = ((log ? std::log10(v) : v) - a) / (b - a);
    return pixel_lo + t * (pixel_hi - pixel_lo);
  }
};

inline void resolve_range(Axis& axis, const std::vector<Series>& series, bool is_x) {
  if (axis.lo < axis.hi) return;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      const double v = is_x ? p.x : p.y;
      if (!std::isfinite(v) || (axis.log && v <= 0.0)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  require(std::isfinite(lo), "svg: no plottable points");
  if (axis.log) {
    lo = std::pow(10.0, std::floor(std::log10(lo)));
    hi = std::pow(10.0, std::ceil(std::log10(hi)));
    if (lo == hi) hi = lo * 10.0;
  } else {
    const double pad = hi > lo ? 0.05 * (hi - lo) : std::max(1e-3, 0.05 * std::abs(lo));
    lo -= pad;
    hi += pad;
  }
  axis.lo = lo;
  axis.hi = hi;
}

inline std::vector<double> ticks(const Axis& a) {
  std::vector<double> t;
  if (a.log) {
    for (double v = a.lo; v <= a.hi * 1.0000001; v *= 10.0) t.push_back(v);
    return t;
  }
  for (int i = 0; i <= 5; ++i) t.push_back(a.lo + (a.hi - a.lo) * i / 5.0);
  return t;
}

}  // namespace detail

inline std::string render(Plot plot) {
  require(!plot.series.empty(), "svg: plot without series");
  detail::resolve_range(plot.x, plot.series, true);
  detail::resolve_range(plot.y, plot.series, false);
  const double left = 70, right = plot.width - 150.0, top = 40, bottom = plot.height - 50.0;
  const detail::Scale sx{plot.x.lo, plot.x.hi, plot.x.log, left, right};
  const detail::Scale sy{plot.y.lo, plot.y.hi, plot.y.log, bottom, top};
  auto inside = [&](const Point& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && (!plot.x.log || p.x > 0.0) &&
           (!plot.y.log || p.y > 0.0);
  };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\""
    << plot.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << plot.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << detail::escape(plot.title) << "</text>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << right - left << "\" height=\""
    << bottom - top << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::ticks(plot.x)) {
    o << "<line x1=\"" << sx(t) << "\" y1=\"" << bottom << "\" x2=\"" << sx(t) << "\" y2=\""
      << bottom + 5 << "\" stroke=\"black\"/><text x=\"" << sx(t) << "\" y=\"" << bottom + 18
      << "\" text-anchor=\"middle\">" << detail::fmt(t) << "</text>\n";
  }
  for (double t : detail::ticks(plot.y)) {
    o << "<line x1=\"" << left - 5 << "\" y1=\"" << sy(t) << "\" x2=\"" << left << "\" y2=\""
      << sy(t) << "\" stroke=\"black\"/><text x=\"" << left - 8 << "\" y=\"" << sy(t) + 4
      << "\" text-anchor=\"end\">" << detail::fmt(t) << "</text>\n";
  }
  o << "<text x=\"" << (left + right) / 2 << "\" y=\"" << plot.height - 12
    << "\" text-anchor=\"middle\">" << detail::escape(plot.x.label) << "</text>\n";
  o << "<text transform=\"translate(16," << (top + bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(plot.y.label) << "</text>\n";
  if (plot.diagonal) {
    const double lo = std::max(plot.x.lo, plot.y.lo);
    const double hi = std::min(plot.x.hi, plot.y.hi);
    if (lo < hi) {
      o << "<line x1=\"" << sx(lo) << "\" y1=\"" << sy(lo) << "\" x2=\"" << sx(hi) << "\" y2=\""
        << sy(hi) << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    }
  }
  o << "<g clip-path=\"none\">\n";
  for (const auto& s : plot.series) {
    if (s.line) {
      o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
      for (const auto& p : s.points) {
        if (inside(p)) o << sx(p.x) << ',' << sy(p.y) << ' ';
      }
      o << "\"/>\n";
    } else {
      for (const auto& p : s.points) {
        if (!inside(p)) continue;
        o << "<circle cx=\"" << sx(p.x) << "\" cy=\"" << sy(p.y) << "\" r=\"" << s.marker_radius
          << "\" fill=\"" << s.color << "\" fill-opacity=\"0.6\"/>\n";
      }
    }
  }
  o << "</g>\n";
  double ly = top + 10;
  for (const auto& s : plot.series) {
    o << "<rect x=\"" << right + 12 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\""
      << s.color << "\"/><text x=\"" << right + 28 << "\" y=\"" << ly + 1 << "\">"
      << detail::escape(s.name) << "</text>\n";
    ly += 18;
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace cwrf::svg

#endif  // CWRF_SVG_HPP_
