#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "idapbc/contour.hpp"
#include "idapbc/lyapunov.hpp"
#include "idapbc/sim.hpp"

namespace idapbc::io {

/// 15 significant digits; NaN prints as "nan".
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

/// Writes through a sibling temporary file and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string trajectory_csv(const Trajectory& tr) {
  std::ostringstream os;
  const auto cols = tr.columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : tr.rows) {
    const auto v = tr.values(r);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v[i]);
    os << '\n';
  }
  return os.str();
}

/// Parsed numeric CSV (header + rows), used to read trajectories back.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::out_of_range("no column " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (std::getline(is, line)) t.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& c : split(line)) row.push_back(c == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(c));
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return colors[i % 7];
}

struct Axis {
  double lo = 0.0, hi = 1.0;

  static Axis fit(const std::vector<double>& v) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double x : v)
      if (std::isfinite(x)) lo = std::min(lo, x), hi = std::max(hi, x);
    if (!std::isfinite(lo)) return {0.0, 1.0};
    if (hi - lo < 1e-12 * std::max(1.0, std::abs(hi))) {
      const double pad = std::max(1e-6, 0.05 * std::abs(hi));
      return {lo - pad, hi + pad};
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
  }
};

struct Panel {
  double x, y, w, h;
  Axis ax, ay;

  double px(double v) const { return x + (v - ax.lo) / (ax.hi - ax.lo) * w; }
  double py(double v) const { return y + h - (v - ay.lo) / (ay.hi - ay.lo) * h; }
};

inline void frame(std::ostringstream& os, const Panel& p, const std::string& xlabel, const std::string& ylabel) {
  os << "<rect x='" << p.x << "' y='" << p.y << "' width='" << p.w << "' height='" << p.h
     << "' fill='none' stroke='#333'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = p.ax.lo + (p.ax.hi - p.ax.lo) * i / 4.0;
    const double fy = p.ay.lo + (p.ay.hi - p.ay.lo) * i / 4.0;
    os << "<text x='" << p.px(fx) << "' y='" << p.y + p.h + 14 << "' font-size='10' text-anchor='middle'>"
       << fmt(std::round(fx * 1e4) / 1e4) << "</text>\n";
    os << "<text x='" << p.x - 4 << "' y='" << p.py(fy) + 3 << "' font-size='10' text-anchor='end'>"
       << fmt(std::round(fy * 1e4) / 1e4) << "</text>\n";
  }
  os << "<text x='" << p.x + p.w / 2 << "' y='" << p.y + p.h + 28 << "' font-size='11' text-anchor='middle'>"
     << xlabel << "</text>\n";
  os << "<text x='" << p.x - 48 << "' y='" << p.y + p.h / 2 << "' font-size='11' text-anchor='middle' transform='rotate(-90 "
     << p.x - 48 << ' ' << p.y + p.h / 2 << ")'>" << ylabel << "</text>\n";
}

inline void polyline(std::ostringstream& os, const Panel& p, const std::vector<double>& xs,
                     const std::vector<double>& ys, const char* color, double width = 1.2) {
  os << "<polyline fill='none' stroke='" << color << "' stroke-width='" << width << "' points='";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) continue;
    os << fmt(std::round(p.px(xs[i]) * 100) / 100) << ',' << fmt(std::round(p.py(ys[i]) * 100) / 100) << ' ';
  }
  os << "'/>\n";
}

}  // namespace detail

/// Three stacked panels: x1, x2 (with the active reference dashed) and u against t.
inline std::string timeseries_svg(const Trajectory& tr) {
  const double W = 720, panel_h = 160, left = 70, top = 30;
  std::vector<double> t, x1, x2, ref, u;
  for (const auto& r : tr.rows) {
    t.push_back(r.t);
    x1.push_back(r.x1);
    x2.push_back(r.x2);
    ref.push_back(r.x2_ref);
    u.push_back(r.u_applied);
  }
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << top + 3 * (panel_h + 45) + 10
     << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='18' font-size='13' text-anchor='middle'>" << tr.id << " ("
     << to_string(tr.kind) << ")</text>\n";
  const detail::Axis at = t.size() > 1 && t.back() > t.front() ? detail::Axis{t.front(), t.back()} : detail::Axis::fit(t);
  std::vector<double> x2_all = x2;
  x2_all.insert(x2_all.end(), ref.begin(), ref.end());
  const struct {
    const std::vector<double>* v;
    detail::Axis ay;
    const char* label;
  } rows[] = {{&x1, detail::Axis::fit(x1), "x1"}, {&x2, detail::Axis::fit(x2_all), "x2"}, {&u, detail::Axis::fit(u), "u"}};
  for (std::size_t i = 0; i < 3; ++i) {
    const detail::Panel p{left, top + i * (panel_h + 45), W - left - 20, panel_h, at, rows[i].ay};
    detail::frame(os, p, "t", rows[i].label);
    if (i == 1) {
      os << "<g stroke-dasharray='5,4'>\n";
      detail::polyline(os, p, t, ref, "#888", 1.0);
      os << "</g>\n";
    }
    detail::polyline(os, p, t, *rows[i].v, detail::palette(i));
  }
  os << "</svg>\n";
  return os.str();
}

struct PhaseCurve {
  std::vector<Point2> points;
  std::string label;
};

/// Phase portrait (x1 horizontal, x2 vertical): level curves, trajectories
/// and the equilibrium marker.
inline std::string phase_portrait_svg(const std::string& title, const VerificationRegion& region,
                                      const std::vector<PhaseCurve>& levels,
                                      const std::vector<std::vector<Point2>>& trajectories, const Point2& x_star) {
  const double W = 640, H = 560, left = 80, top = 40;
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
     << "' font-family='sans-serif'>\n<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='22' font-size='13' text-anchor='middle'>" << title << "</text>\n";
  const detail::Panel p{left, top, W - left - 150, H - top - 60, {region.x1.lo, region.x1.hi},
                        {region.x2.lo, region.x2.hi}};
  detail::frame(os, p, "x1", "x2");
  os << "<clipPath id='plot'><rect x='" << p.x << "' y='" << p.y << "' width='" << p.w << "' height='" << p.h
     << "'/></clipPath>\n<g clip-path='url(#plot)'>\n";
  for (const auto& tr : trajectories) {
    std::vector<double> xs, ys;
    for (const auto& q : tr) xs.push_back(q.x()), ys.push_back(q.y());
    detail::polyline(os, p, xs, ys, "#999", 0.7);
  }
  for (std::size_t i = 0; i < levels.size(); ++i) {
    std::vector<double> xs, ys;
    for (const auto& q : levels[i].points) xs.push_back(q.x()), ys.push_back(q.y());
    detail::polyline(os, p, xs, ys, detail::palette(i), 1.6);
  }
  os << "<circle cx='" << p.px(x_star.x()) << "' cy='" << p.py(x_star.y()) << "' r='3.5' fill='black'/>\n</g>\n";
  std::vector<std::string> seen;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (std::find(seen.begin(), seen.end(), levels[i].label) != seen.end()) continue;
    seen.push_back(levels[i].label);
    const double ly = top + 14 + 18 * static_cast<double>(seen.size() - 1);
    os << "<line x1='" << W - 140 << "' y1='" << ly - 4 << "' x2='" << W - 120 << "' y2='" << ly - 4 << "' stroke='"
       << detail::palette(i) << "' stroke-width='2'/>\n<text x='" << W - 115 << "' y='" << ly
       << "' font-size='11'>" << levels[i].label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace idapbc::io
