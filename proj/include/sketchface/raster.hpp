#pragma once

#include "sketchface/face_model.hpp"
#include "sketchface/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace sketchface {

// Pixel (x, y) samples the continuous image point (x, y).

/// Calls f(x, y, l0, l1, l2) for every pixel inside triangle (a, b, c), with
/// screen-space barycentrics. Edges are inclusive. Degenerate triangles are skipped.
template <typename F>
void scan_triangle(const Vec2& a, const Vec2& b, const Vec2& c, int width, int height, F&& f) {
  const double area = (b - a).x() * (c - a).y() - (b - a).y() * (c - a).x();
  if (std::abs(area) < 1e-12) return;
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.x(), b.x(), c.x()}))));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.x(), b.x(), c.x()}))));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.y(), b.y(), c.y()}))));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.y(), b.y(), c.y()}))));
  if (x0 > x1 || y0 > y1) return;
  const double inv = 1.0 / area;
  constexpr double kEps = -1e-12;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double px = x;
      const double py = y;
      const double l0 = ((b.x() - px) * (c.y() - py) - (b.y() - py) * (c.x() - px)) * inv;
      const double l1 = ((c.x() - px) * (a.y() - py) - (c.y() - py) * (a.x() - px)) * inv;
      const double l2 = 1.0 - l0 - l1;
      if (l0 >= kEps && l1 >= kEps && l2 >= kEps) f(x, y, l0, l1, l2);
    }
  }
}

/// Per-pixel visible surface of a posed mesh (camera space).
struct RasterBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> depth;     // +inf where uncovered
  std::vector<int> triangle;     // -1 where uncovered
  std::vector<Eigen::Vector3d> bary;  // perspective-correct barycentrics

  bool covered(int x, int y) const { return triangle[static_cast<std::size_t>(y) * width + x] >= 0; }
  double depth_at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
};

/// True when the triangle's winding normal faces the camera at the origin.
bool front_facing(const Vec3& a, const Vec3& b, const Vec3& c);

/// Z-buffered rasterization of `posed` (camera space) through `cam`.
/// Triangles with a vertex at non-positive depth are skipped.
RasterBuffer rasterize(const Camera& cam, std::span<const Vec3> posed, std::span<const Triangle> triangles,
                       bool cull_back_faces);

}  // namespace sketchface
