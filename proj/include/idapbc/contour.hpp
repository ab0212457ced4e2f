#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

namespace idapbc {

/// Scalar field sampled on a rectilinear nx-by-ny grid; value(i, j) sits at (xs[i], ys[j]).
struct GridField {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;  ///< row-major in j: values[j * nx + i]

  std::size_t nx() const { return xs.size(); }
  std::size_t ny() const { return ys.size(); }
  double value(std::size_t i, std::size_t j) const { return values[j * nx() + i]; }
};

using Point2 = Eigen::Vector2d;
using Contour = std::vector<Point2>;

namespace detail {

// Grid edges are keyed by their lower-left node and orientation.
inline std::uint64_t edge_key(std::size_t i, std::size_t j, bool vertical) {
  return (static_cast<std::uint64_t>(j) << 33) | (static_cast<std::uint64_t>(i) << 1) | (vertical ? 1u : 0u);
}

}  // namespace detail

/// Marching-squares extraction of the iso-line {f = level}. Segments are joined
/// into polylines; closed curves repeat their first point at the end.
/// Saddle cells are disambiguated with the cell-centre average.
inline std::vector<Contour> marching_squares(const GridField& grid, double level) {
  const std::size_t nx = grid.nx();
  const std::size_t ny = grid.ny();
  std::vector<Contour> out;
  if (nx < 2 || ny < 2) return out;

  struct Segment {
    std::uint64_t a, b;
  };
  std::vector<Segment> segments;
  std::unordered_map<std::uint64_t, Point2> points;

  auto crossing = [&](std::size_t i, std::size_t j, bool vertical) {
    const std::uint64_t key = detail::edge_key(i, j, vertical);
    if (points.find(key) == points.end()) {
      const std::size_t i2 = vertical ? i : i + 1;
      const std::size_t j2 = vertical ? j + 1 : j;
      const double f0 = grid.value(i, j);
      const double f1 = grid.value(i2, j2);
      const double t = (f1 == f0) ? 0.5 : (level - f0) / (f1 - f0);
      points.emplace(key, Point2(grid.xs[i] + t * (grid.xs[i2] - grid.xs[i]),
                                 grid.ys[j] + t * (grid.ys[j2] - grid.ys[j])));
    }
    return key;
  };

  for (std::size_t j = 0; j + 1 < ny; ++j) {
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const double v00 = grid.value(i, j);
      const double v10 = grid.value(i + 1, j);
      const double v11 = grid.value(i + 1, j + 1);
      const double v01 = grid.value(i, j + 1);
      const int code = (v00 > level ? 1 : 0) | (v10 > level ? 2 : 0) | (v11 > level ? 4 : 0) | (v01 > level ? 8 : 0);
      if (code == 0 || code == 15) continue;

      const auto bottom = [&] { return crossing(i, j, false); };
      const auto top = [&] { return crossing(i, j + 1, false); };
      const auto left = [&] { return crossing(i, j, true); };
      const auto right = [&] { return crossing(i + 1, j, true); };

      switch (code) {
        case 1: case 14: segments.push_back({left(), bottom()}); break;
        case 2: case 13: segments.push_back({bottom(), right()}); break;
        case 3: case 12: segments.push_back({left(), right()}); break;
        case 4: case 11: segments.push_back({right(), top()}); break;
        case 6: case 9: segments.push_back({bottom(), top()}); break;
        case 7: case 8: segments.push_back({left(), top()}); break;
        case 5: case 10: {
          const bool centre_above = 0.25 * (v00 + v10 + v11 + v01) > level;
          // code 5: corners 00 and 11 above.
          if ((code == 5) == centre_above) {
            segments.push_back({left(), top()});
            segments.push_back({bottom(), right()});
          } else {
            segments.push_back({left(), bottom()});
            segments.push_back({right(), top()});
          }
          break;
        }
        default: break;
      }
    }
  }

  std::unordered_multimap<std::uint64_t, std::size_t> incident;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    incident.emplace(segments[s].a, s);
    incident.emplace(segments[s].b, s);
  }
  std::vector<bool> used(segments.size(), false);

  auto next_segment = [&](std::uint64_t key) -> std::ptrdiff_t {
    auto [lo, hi] = incident.equal_range(key);
    for (auto it = lo; it != hi; ++it)
      if (!used[it->second]) return static_cast<std::ptrdiff_t>(it->second);
    return -1;
  };

  auto walk = [&](std::uint64_t from, std::vector<std::uint64_t>& keys) {
    std::uint64_t cur = from;
    for (std::ptrdiff_t s = next_segment(cur); s >= 0; s = next_segment(cur)) {
      used[static_cast<std::size_t>(s)] = true;
      const auto& seg = segments[static_cast<std::size_t>(s)];
      cur = seg.a == cur ? seg.b : seg.a;
      keys.push_back(cur);
    }
  };

  for (std::size_t s = 0; s < segments.size(); ++s) {
    if (used[s]) continue;
    used[s] = true;
    std::vector<std::uint64_t> forward{segments[s].a, segments[s].b};
    walk(segments[s].b, forward);
    if (forward.back() != forward.front()) {
      // Open curve: extend backwards from the start as well.
      std::vector<std::uint64_t> backward;
      walk(segments[s].a, backward);
      forward.insert(forward.begin(), backward.rbegin(), backward.rend());
    }
    Contour c;
    c.reserve(forward.size());
    for (auto key : forward) c.push_back(points.at(key));
    out.push_back(std::move(c));
  }
  return out;
}

inline bool is_closed(const Contour& c) { return c.size() > 2 && (c.front() - c.back()).norm() == 0.0; }

/// Even-odd ray casting test against a closed polyline.
inline bool encloses(const Contour& c, const Point2& p) {
  bool inside = false;
  for (std::size_t a = 0, b = c.size() - 1; a < c.size(); b = a++) {
    const Point2& pa = c[a];
    const Point2& pb = c[b];
    if ((pa.y() > p.y()) != (pb.y() > p.y())) {
      const double x_cross = pa.x() + (p.y() - pa.y()) * (pb.x() - pa.x()) / (pb.y() - pa.y());
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

inline double arc_length(const Contour& c) {
  double len = 0.0;
  for (std::size_t s = 1; s < c.size(); ++s) len += (c[s] - c[s - 1]).norm();
  return len;
}

/// `n` points equally spaced in arc length along the polyline (closed curves
/// are sampled without repeating the start point).
inline std::vector<Point2> resample(const Contour& c, std::size_t n) {
  std::vector<Point2> out;
  if (c.empty() || n == 0) return out;
  const double total = arc_length(c);
  if (total == 0.0) return std::vector<Point2>(n, c.front());
  const double spacing = is_closed(c) ? total / static_cast<double>(n)
                                      : total / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  std::size_t seg = 1;
  double walked = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = std::min(spacing * static_cast<double>(k), total);
    while (seg + 1 < c.size() && walked + (c[seg] - c[seg - 1]).norm() < target) {
      walked += (c[seg] - c[seg - 1]).norm();
      ++seg;
    }
    const double len = (c[seg] - c[seg - 1]).norm();
    const double t = len > 0.0 ? std::clamp((target - walked) / len, 0.0, 1.0) : 0.0;
    out.push_back(c[seg - 1] + t * (c[seg] - c[seg - 1]));
  }
  return out;
}

}  // namespace idapbc
