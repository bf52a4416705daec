#include "sketchface/raster.hpp"

namespace sketchface {

bool front_facing(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  return n.dot((a + b + c) / 3.0) < 0.0;
}

RasterBuffer rasterize(const Camera& cam, std::span<const Vec3> posed, std::span<const Triangle> triangles,
                       bool cull_back_faces) {
  RasterBuffer buf;
  buf.width = cam.width();
  buf.height = cam.height();
  const std::size_t n = static_cast<std::size_t>(buf.width) * buf.height;
  buf.depth.assign(n, std::numeric_limits<double>::infinity());
  buf.triangle.assign(n, -1);
  buf.bary.assign(n, Eigen::Vector3d::Zero());

  std::vector<Vec2> screen(posed.size());
  std::vector<char> valid(posed.size(), 0);
  for (std::size_t i = 0; i < posed.size(); ++i) {
    if (posed[i].z() > 0.0) {
      screen[i] = cam.project(posed[i]);
      valid[i] = 1;
    }
  }

  for (int t = 0; t < static_cast<int>(triangles.size()); ++t) {
    const Triangle& tri = triangles[t];
    if (!valid[tri[0]] || !valid[tri[1]] || !valid[tri[2]]) continue;
    const Vec3& p0 = posed[tri[0]];
    const Vec3& p1 = posed[tri[1]];
    const Vec3& p2 = posed[tri[2]];
    if (cull_back_faces && !front_facing(p0, p1, p2)) continue;
    const double iz0 = 1.0 / p0.z();
    const double iz1 = 1.0 / p1.z();
    const double iz2 = 1.0 / p2.z();
    scan_triangle(screen[tri[0]], screen[tri[1]], screen[tri[2]], buf.width, buf.height,
                  [&](int x, int y, double l0, double l1, double l2) {
                    const double w0 = l0 * iz0;
                    const double w1 = l1 * iz1;
                    const double w2 = l2 * iz2;
                    const double sum = w0 + w1 + w2;
                    const double z = 1.0 / sum;
                    const std::size_t idx = static_cast<std::size_t>(y) * buf.width + x;
                    if (z < buf.depth[idx]) {
                      buf.depth[idx] = z;
                      buf.triangle[idx] = t;
                      buf.bary[idx] = Eigen::Vector3d(w0, w1, w2) / sum;
                    }
                  });
  }
  return buf;
}

}  // namespace sketchface
