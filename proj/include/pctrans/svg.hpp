#pragma once
// Static 2-D scatter projections of point clouds.
#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pctrans/point_cloud.hpp"

namespace pctrans::svg {

struct Series {
  std::string label;
  std::string color;
  const data::PointCloud* cloud = nullptr;
};

struct PanelSpec {
  std::size_t axis_h = 0;  // 0 = x, 1 = y, 2 = z
  std::size_t axis_v = 2;
};

namespace detail {
inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}
inline const char* axis_name(std::size_t a) { return a == 0 ? "x" : a == 1 ? "y" : a == 2 ? "z" : "q"; }
}  // namespace detail

// One row of panels per call, each panel a projection shared by all series.
inline std::string scatter(std::span<const Series> series, std::span<const PanelSpec> panels,
                           const std::string& title = {}, double panel_px = 320.0) {
  const double margin = 36.0;
  const double width = panels.size() * (panel_px + margin) + margin;
  const double height = panel_px + 2 * margin + 18.0 * static_cast<double>(series.size());
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) + "\" height=\"" +
                    detail::num(height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) out += "<text x=\"" + detail::num(margin) + "\" y=\"20\" font-size=\"14\">" + title + "</text>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto [h, v] = std::array{panels[p].axis_h, panels[p].axis_v};
    double lo_h = std::numeric_limits<double>::infinity(), hi_h = -lo_h, lo_v = lo_h, hi_v = -lo_h;
    for (const auto& s : series) {
      for (std::size_t i = 0; i < s.cloud->size(); ++i) {
        lo_h = std::min<double>(lo_h, s.cloud->at(i, h));
        hi_h = std::max<double>(hi_h, s.cloud->at(i, h));
        lo_v = std::min<double>(lo_v, s.cloud->at(i, v));
        hi_v = std::max<double>(hi_v, s.cloud->at(i, v));
      }
    }
    if (!(hi_h > lo_h)) hi_h = lo_h + 1.0;
    if (!(hi_v > lo_v)) hi_v = lo_v + 1.0;
    const double x0 = margin + static_cast<double>(p) * (panel_px + margin);
    const double y0 = margin;
    out += "<rect x=\"" + detail::num(x0) + "\" y=\"" + detail::num(y0) + "\" width=\"" + detail::num(panel_px) +
           "\" height=\"" + detail::num(panel_px) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    out += "<text x=\"" + detail::num(x0 + panel_px / 2) + "\" y=\"" + detail::num(y0 + panel_px + 16) +
           "\" font-size=\"12\">" + detail::axis_name(h) + "</text>\n";
    out += "<text x=\"" + detail::num(x0 - 14) + "\" y=\"" + detail::num(y0 + panel_px / 2) + "\" font-size=\"12\">" +
           detail::axis_name(v) + "</text>\n";
    for (const auto& s : series) {
      out += "<g fill=\"" + s.color + "\" fill-opacity=\"0.6\">\n";
      for (std::size_t i = 0; i < s.cloud->size(); ++i) {
        const double px = x0 + (s.cloud->at(i, h) - lo_h) / (hi_h - lo_h) * panel_px;
        const double py = y0 + panel_px - (s.cloud->at(i, v) - lo_v) / (hi_v - lo_v) * panel_px;
        out += "<circle cx=\"" + detail::num(px) + "\" cy=\"" + detail::num(py) + "\" r=\"1.5\"/>\n";
      }
      out += "</g>\n";
    }
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = panel_px + 2 * margin + 18.0 * static_cast<double>(k);
    out += "<circle cx=\"" + detail::num(margin + 5) + "\" cy=\"" + detail::num(y - 4) + "\" r=\"4\" fill=\"" +
           series[k].color + "\"/><text x=\"" + detail::num(margin + 14) + "\" y=\"" + detail::num(y) +
           "\" font-size=\"12\">" + series[k].label + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

// x-z and y-z views.
inline std::string projections(std::span<const Series> series, const std::string& title = {}) {
  const std::array<PanelSpec, 2> panels{PanelSpec{0, 2}, PanelSpec{1, 2}};
  return scatter(series, panels, title);
}

}  // namespace pctrans::svg
