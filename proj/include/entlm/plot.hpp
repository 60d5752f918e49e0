#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "entlm/error.hpp"

namespace entlm {

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

inline std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

// Vertical bar chart, one bar per (label, value).
inline std::string svg_bar_chart(const std::string& title, const std::string& y_label,
                                 const std::vector<std::pair<std::string, double>>& bars) {
  if (bars.empty()) throw ContractError("bar chart needs at least one bar");
  const double w = 120.0 * static_cast<double>(bars.size()) + 120.0;
  const double h = 360.0;
  const double left = 70, bottom = 80, top = 40;
  double vmax = 0;
  for (const auto& b : bars) vmax = std::max(vmax, b.second);
  if (vmax <= 0) vmax = 1;
  const double plot_h = h - bottom - top;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << detail::xml_escape(title) << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
     << ")\" text-anchor=\"middle\" font-size=\"12\">" << detail::xml_escape(y_label) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - 20 << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double bh = plot_h * bars[i].second / vmax;
    const double x = left + 20 + 120.0 * static_cast<double>(i);
    os << "<rect x=\"" << x << "\" y=\"" << h - bottom - bh << "\" width=\"80\" height=\"" << bh
       << "\" fill=\"#4a7ab5\"/>\n";
    os << "<text x=\"" << x + 40 << "\" y=\"" << h - bottom - bh - 6 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << detail::fmt(bars[i].second) << "</text>\n";
    os << "<text x=\"" << x + 40 << "\" y=\"" << h - bottom + 18
       << "\" text-anchor=\"middle\" font-size=\"11\">" << detail::xml_escape(bars[i].first) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

// Polyline through (x, y) points with a log-scaled x axis.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                                  const std::vector<std::pair<double, double>>& points) {
  if (points.empty()) throw ContractError("line chart needs at least one point");
  const double w = 640, h = 400, left = 80, right = 30, top = 40, bottom = 60;
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& [x, y] : points) {
    if (x <= 0) throw ContractError("line chart x values must be positive");
    xmin = std::min(xmin, std::log10(x));
    xmax = std::max(xmax, std::log10(x));
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  auto px = [&](double x) { return left + (std::log10(x) - xmin) / (xmax - xmin) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - ymin) / (ymax - ymin) * (h - top - bottom); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
     << detail::xml_escape(title) << "</text>\n";
  os << "<text x=\"" << w / 2 << "\" y=\"" << h - 16 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << detail::xml_escape(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << h / 2 << "\" transform=\"rotate(-90 18 " << h / 2
     << ")\" text-anchor=\"middle\" font-size=\"12\">" << detail::xml_escape(y_label) << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#b5534a\" stroke-width=\"2\" points=\"";
  for (const auto& [x, y] : points) os << px(x) << ',' << py(y) << ' ';
  os << "\"/>\n";
  for (const auto& [x, y] : points) {
    os << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"4\" fill=\"#b5534a\"/>\n";
    os << "<text x=\"" << px(x) << "\" y=\"" << py(y) - 8 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << detail::fmt(y) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace entlm
