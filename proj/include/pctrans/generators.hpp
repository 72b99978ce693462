#pragma once
// Synthetic benchmark domains.
//
// Lines: x = 0, one y ~ U(0, 2) per event, z ~ U(0, 2) per point. The noisy
// variant adds N(0, (0.1 y)^2) independently to x, y and z of every point.
//
// Shapes: half triangular prisms, half cuboids (alternating, even index =
// prism). Per-axis extents ~ U(0.5, 1.5), uniform random rotation, bounding
// box centered at the origin; points uniform by arc length over the wire
// frame (9 prism edges, 12 cuboid edges). The noisy variant adds
// N(0, noise_sigma^2) to every coordinate.
//
// Event i draws from Rng(seed, {stream, i}); geometry is drawn before noise,
// so clean and noisy datasets with the same seed hold the same objects.
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "pctrans/errors.hpp"
#include "pctrans/point_cloud.hpp"
#include "pctrans/rng.hpp"

namespace pctrans::data {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

struct Segment {
  Vec3 a;
  Vec3 b;
};

inline constexpr std::uint64_t kLinesStream = 0x4C494E45;   // "LINE"
inline constexpr std::uint64_t kShapesStream = 0x53485045;  // "SHPE"

// Shoemake's uniform random rotation.
inline Mat3 random_rotation(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double s1 = std::sqrt(1.0 - u1);
  const double s2 = std::sqrt(u1);
  const double w = s1 * std::sin(2.0 * std::numbers::pi * u2);
  const double x = s1 * std::cos(2.0 * std::numbers::pi * u2);
  const double y = s2 * std::sin(2.0 * std::numbers::pi * u3);
  const double z = s2 * std::cos(2.0 * std::numbers::pi * u3);
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
           {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
           {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
}

inline Vec3 rotate(const Mat3& r, const Vec3& p) {
  return {r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2], r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
          r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2]};
}

inline std::vector<Segment> cuboid_edges(const Vec3& size) {
  const double a = size[0] / 2, b = size[1] / 2, c = size[2] / 2;
  std::vector<Segment> edges;
  edges.reserve(12);
  for (double s : {-b, b}) {
    for (double t : {-c, c}) edges.push_back({{-a, s, t}, {a, s, t}});
  }
  for (double s : {-a, a}) {
    for (double t : {-c, c}) edges.push_back({{s, -b, t}, {s, b, t}});
  }
  for (double s : {-a, a}) {
    for (double t : {-b, b}) edges.push_back({{s, t, -c}, {s, t, c}});
  }
  return edges;
}

// Isosceles triangle (-a,-b), (a,-b), (0,b) in the xy plane, extruded over z.
inline std::vector<Segment> prism_edges(const Vec3& size) {
  const double a = size[0] / 2, b = size[1] / 2, c = size[2] / 2;
  const std::array<std::array<double, 2>, 3> tri{{{-a, -b}, {a, -b}, {0.0, b}}};
  std::vector<Segment> edges;
  edges.reserve(9);
  for (double h : {-c, c}) {
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& p = tri[i];
      const auto& q = tri[(i + 1) % 3];
      edges.push_back({{p[0], p[1], h}, {q[0], q[1], h}});
    }
  }
  for (const auto& p : tri) edges.push_back({{p[0], p[1], -c}, {p[0], p[1], c}});
  return edges;
}

// World-space wire frame of shape event `index`; consumes the event's
// geometry draws from `rng`.
inline std::vector<Segment> draw_shape_geometry(Rng& rng, std::uint8_t shape_class) {
  Vec3 size{};
  for (auto& s : size) s = rng.uniform(0.5, 1.5);
  const Mat3 rot = random_rotation(rng);
  auto edges = shape_class == kCuboid ? cuboid_edges(size) : prism_edges(size);
  for (auto& e : edges) {
    e.a = rotate(rot, e.a);
    e.b = rotate(rot, e.b);
  }
  return edges;
}

inline std::uint8_t shape_class_of(std::size_t index) {
  return index % 2 == 0 ? kTriangularPrism : kCuboid;
}

inline std::vector<Segment> shape_geometry(std::uint64_t seed, std::size_t index) {
  Rng rng(seed, {kShapesStream, index});
  return draw_shape_geometry(rng, shape_class_of(index));
}

inline Dataset gen_lines(std::size_t n_events, std::size_t n_points, std::uint64_t seed, bool noisy) {
  if (n_events < 1) throw ConfigError("gen_lines: n_events must be >= 1");
  if (n_points < 2) throw ConfigError("gen_lines: n_points must be >= 2");
  Dataset ds;
  ds.domain_label = noisy ? "lines_noisy" : "lines_clean";
  ds.events.reserve(n_events);
  for (std::size_t e = 0; e < n_events; ++e) {
    Rng rng(seed, {kLinesStream, e});
    const double y = rng.uniform(0.0, 2.0);
    std::vector<double> z(n_points);
    for (auto& v : z) v = rng.uniform(0.0, 2.0);
    PointCloud cloud(n_points, 3);
    for (std::size_t i = 0; i < n_points; ++i) {
      double p[3] = {0.0, y, z[i]};
      if (noisy) {
        for (double& c : p) c += rng.normal(0.0, 0.1 * y);
      }
      for (std::size_t d = 0; d < 3; ++d) cloud.at(i, d) = static_cast<float>(p[d]);
    }
    ds.events.push_back(std::move(cloud));
  }
  ds.metadata = {{"generator", "lines"}, {"seed", seed}, {"n_events", n_events},
                 {"n_points", n_points}, {"noisy", noisy}};
  return ds;
}

inline Dataset gen_shapes(std::size_t n_events, std::size_t n_points, std::uint64_t seed, bool noisy,
                          double noise_sigma = 0.05) {
  if (n_events == 0 || n_events % 2 != 0) {
    throw ConfigError("gen_shapes: n_events must be a positive even number, got " + std::to_string(n_events));
  }
  if (n_points < 2) throw ConfigError("gen_shapes: n_points must be >= 2");
  if (noisy && !(noise_sigma >= 0.0)) throw ConfigError("gen_shapes: noise_sigma must be >= 0");
  Dataset ds;
  ds.domain_label = noisy ? "shapes_noisy" : "shapes_clean";
  ds.events.reserve(n_events);
  for (std::size_t e = 0; e < n_events; ++e) {
    Rng rng(seed, {kShapesStream, e});
    const std::uint8_t cls = shape_class_of(e);
    const auto edges = draw_shape_geometry(rng, cls);
    std::vector<double> cumulative(edges.size());
    double total = 0.0;
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& s = edges[k];
      total += std::hypot(s.b[0] - s.a[0], s.b[1] - s.a[1], s.b[2] - s.a[2]);
      cumulative[k] = total;
    }
    std::vector<Vec3> pts(n_points);
    for (auto& p : pts) {
      const double u = rng.uniform(0.0, total);
      std::size_t k = 0;
      while (k + 1 < edges.size() && u >= cumulative[k]) ++k;
      const double start = k == 0 ? 0.0 : cumulative[k - 1];
      const double len = cumulative[k] - start;
      const double t = len > 0.0 ? std::min(1.0, (u - start) / len) : 0.0;
      for (std::size_t d = 0; d < 3; ++d) p[d] = edges[k].a[d] + t * (edges[k].b[d] - edges[k].a[d]);
    }
    if (noisy) {
      for (auto& p : pts) {
        for (double& c : p) c += rng.normal(0.0, noise_sigma);
      }
    }
    PointCloud cloud(n_points, 3);
    for (std::size_t i = 0; i < n_points; ++i) {
      for (std::size_t d = 0; d < 3; ++d) cloud.at(i, d) = static_cast<float>(pts[i][d]);
    }
    ds.events.push_back(std::move(cloud));
    ds.class_labels.emplace_back(cls);
  }
  ds.metadata = {{"generator", "shapes"}, {"seed", seed},         {"n_events", n_events},
                 {"n_points", n_points},  {"noisy", noisy},       {"noise_sigma", noisy ? noise_sigma : 0.0}};
  return ds;
}

}  // namespace pctrans::data
