#include "sketchface/isomap.hpp"

#include "sketchface/raster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace sketchface {

namespace {

bool power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

Isomap::Isomap(int w, int h) : width(w), height(h) {
  if (!power_of_two(w) || !power_of_two(h)) {
    throw ValidationError("isomap dimensions must be powers of two, got " + std::to_string(w) + "x" +
                          std::to_string(h));
  }
  pixels.assign(static_cast<std::size_t>(w) * h * 3, 0.0f);
  valid.assign(static_cast<std::size_t>(w) * h, 0);
}

void Isomap::set(int i, int j, const Vec3& c) {
  const std::size_t k = 3 * texel(i, j);
  pixels[k] = static_cast<float>(c[0]);
  pixels[k + 1] = static_cast<float>(c[1]);
  pixels[k + 2] = static_cast<float>(c[2]);
  valid[texel(i, j)] = 1;
}

std::size_t Isomap::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), 1));
}

int isomap_size_for_height(int frame_height) { return frame_height >= 720 ? 512 : 256; }

Isomap isomap_from_function(int size, const std::function<Vec3(double, double)>& color) {
  Isomap out(size, size);
  for (int j = 0; j < size; ++j) {
    for (int i = 0; i < size; ++i) out.set(i, j, color((i + 0.5) / size, (j + 0.5) / size));
  }
  return out;
}

Isomap extract_isomap(const FrameImage& frame, std::span<const Vec3> posed_mesh, const FaceMesh& mesh,
                      const Camera& cam, int size) {
  if (!mesh.has_uvs()) throw ValidationError("mesh has no texture coordinates");
  if (posed_mesh.size() != mesh.vertices.size()) throw DimensionError("posed mesh vertex count mismatch");
  Isomap out(size, size);
  const RasterBuffer zbuf = rasterize(cam, posed_mesh, mesh.triangles, true);

  // World size of half a texel, from total surface area over total UV area.
  double area3d = 0.0;
  double area_uv = 0.0;
  for (const Triangle& t : mesh.triangles) {
    area3d += triangle_area(mesh.vertices, t);
    const Vec2 a = mesh.uvs[t[1]] - mesh.uvs[t[0]];
    const Vec2 b = mesh.uvs[t[2]] - mesh.uvs[t[0]];
    area_uv += 0.5 * std::abs(a.x() * b.y() - a.y() * b.x());
  }
  const double texel_world = area_uv > 0.0 ? std::sqrt(area3d / area_uv) / size : 0.0;
  const double bias = 0.5 * texel_world;

  for (const Triangle& tri : mesh.triangles) {
    const Vec3& p0 = posed_mesh[tri[0]];
    const Vec3& p1 = posed_mesh[tri[1]];
    const Vec3& p2 = posed_mesh[tri[2]];
    if (p0.z() <= 0.0 || p1.z() <= 0.0 || p2.z() <= 0.0) continue;
    if (!front_facing(p0, p1, p2)) continue;
    const Vec2 t0 = mesh.uvs[tri[0]] * size - Vec2(0.5, 0.5);
    const Vec2 t1 = mesh.uvs[tri[1]] * size - Vec2(0.5, 0.5);
    const Vec2 t2 = mesh.uvs[tri[2]] * size - Vec2(0.5, 0.5);
    scan_triangle(t0, t1, t2, size, size, [&](int i, int j, double l0, double l1, double l2) {
      const Vec3 p = l0 * p0 + l1 * p1 + l2 * p2;
      const Vec2 q = cam.project(p);
      if (q.x() < 0.0 || q.y() < 0.0 || q.x() > frame.width - 1 || q.y() > frame.height - 1) return;
      const int x0 = static_cast<int>(std::floor(q.x()));
      const int y0 = static_cast<int>(std::floor(q.y()));
      bool visible = false;
      for (int dy = 0; dy <= 1 && !visible; ++dy) {
        for (int dx = 0; dx <= 1 && !visible; ++dx) {
          const int x = std::min(x0 + dx, zbuf.width - 1);
          const int y = std::min(y0 + dy, zbuf.height - 1);
          visible = zbuf.depth_at(x, y) >= p.z() - bias;
        }
      }
      if (!visible) return;
      out.set(i, j, frame.sample(q.x(), q.y()));
    });
  }
  return out;
}

Isomap mean_isomap(std::span<const Isomap> maps) {
  if (maps.empty()) throw ValidationError("mean of an empty isomap list");
  const int w = maps.front().width;
  const int h = maps.front().height;
  for (const Isomap& m : maps) {
    if (m.width != w || m.height != h) throw DimensionError("isomap dimensions differ");
  }
  constexpr double kScale = 1048576.0;  // 2^20
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<std::int64_t> sum(3 * n, 0);
  std::vector<std::int32_t> count(n, 0);
  for (const Isomap& m : maps) {
    for (std::size_t t = 0; t < n; ++t) {
      if (!m.valid[t]) continue;
      ++count[t];
      for (int c = 0; c < 3; ++c) sum[3 * t + c] += std::llround(static_cast<double>(m.pixels[3 * t + c]) * kScale);
    }
  }
  Isomap out(w, h);
  for (std::size_t t = 0; t < n; ++t) {
    if (!count[t]) continue;
    out.valid[t] = 1;
    for (int c = 0; c < 3; ++c) {
      out.pixels[3 * t + c] = static_cast<float>(static_cast<double>(sum[3 * t + c]) / kScale / count[t]);
    }
  }
  return out;
}

RefinedIsomap refine_isomap(const Isomap& m, const Isomap& mean, double blur_sigma) {
  if (m.width != mean.width || m.height != mean.height) throw DimensionError("isomap dimensions differ");
  const int w = m.width;
  const int h = m.height;
  RefinedIsomap out{m, {}};
  Isomap& r = out.map;
  std::vector<std::uint8_t> filled(m.valid.size(), 0);
  bool any_filled = false;
  for (std::size_t t = 0; t < m.valid.size(); ++t) {
    if (m.valid[t]) continue;
    if (mean.valid[t]) {
      for (int c = 0; c < 3; ++c) r.pixels[3 * t + c] = mean.pixels[3 * t + c];
      r.valid[t] = 1;
      filled[t] = 1;
      any_filled = true;
    } else {
      out.unfilled.push_back(static_cast<int>(t));
    }
  }
  if (!any_filled || !(blur_sigma > 0.0)) return out;

  // Seam texels: valid texels with a 4-neighbor of the other kind (filled vs original).
  std::vector<std::uint8_t> band(m.valid.size(), 0);
  const int reach = static_cast<int>(std::ceil(2.0 * blur_sigma));
  const double reach2 = 4.0 * blur_sigma * blur_sigma;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const std::size_t t = r.texel(i, j);
      if (!r.valid[t]) continue;
      bool seam = false;
      const int ni[4] = {i - 1, i + 1, i, i};
      const int nj[4] = {j, j, j - 1, j + 1};
      for (int k = 0; k < 4 && !seam; ++k) {
        if (ni[k] < 0 || nj[k] < 0 || ni[k] >= w || nj[k] >= h) continue;
        const std::size_t u = r.texel(ni[k], nj[k]);
        seam = r.valid[u] && filled[u] != filled[t];
      }
      if (!seam) continue;
      for (int dj = -reach; dj <= reach; ++dj) {
        for (int di = -reach; di <= reach; ++di) {
          if (di * di + dj * dj > reach2) continue;
          const int x = i + di;
          const int y = j + dj;
          if (x >= 0 && y >= 0 && x < w && y < h) band[r.texel(x, y)] = 1;
        }
      }
    }
  }

  const int radius = static_cast<int>(std::ceil(3.0 * blur_sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k) kernel[k + radius] = std::exp(-(k * k) / (2.0 * blur_sigma * blur_sigma));
  const Isomap source = r;
  for (int j = 0; j < h; ++j) {
    for (int i = 0; i < w; ++i) {
      const std::size_t t = r.texel(i, j);
      if (!band[t] || !r.valid[t]) continue;
      Vec3 acc = Vec3::Zero();
      double wsum = 0.0;
      for (int dj = -radius; dj <= radius; ++dj) {
        const int y = j + dj;
        if (y < 0 || y >= h) continue;
        for (int di = -radius; di <= radius; ++di) {
          const int x = i + di;
          if (x < 0 || x >= w || !source.is_valid(x, y)) continue;
          const double wk = kernel[di + radius] * kernel[dj + radius];
          acc += wk * source.color(x, y);
          wsum += wk;
        }
      }
      r.set(i, j, acc / wsum);
    }
  }
  return out;
}

namespace {

// Index of a nearby valid texel for every texel (multi-source BFS), -1 if none.
std::vector<int> nearest_valid(const Isomap& tex) {
  std::vector<int> near(tex.valid.size(), -1);
  std::deque<int> queue;
  for (std::size_t t = 0; t < tex.valid.size(); ++t) {
    if (tex.valid[t]) {
      near[t] = static_cast<int>(t);
      queue.push_back(static_cast<int>(t));
    }
  }
  while (!queue.empty()) {
    const int t = queue.front();
    queue.pop_front();
    const int i = t % tex.width;
    const int j = t / tex.width;
    const int ni[4] = {i - 1, i + 1, i, i};
    const int nj[4] = {j, j, j - 1, j + 1};
    for (int k = 0; k < 4; ++k) {
      if (ni[k] < 0 || nj[k] < 0 || ni[k] >= tex.width || nj[k] >= tex.height) continue;
      const std::size_t u = tex.texel(ni[k], nj[k]);
      if (near[u] >= 0) continue;
      near[u] = near[t];
      queue.push_back(static_cast<int>(u));
    }
  }
  return near;
}

}  // namespace

RenderedFace render_face(const FrameImage& frame, std::span<const Vec3> posed_modified_mesh, const FaceMesh& mesh,
                         const Camera& cam, const Isomap& tex) {
  if (!mesh.has_uvs()) throw ValidationError("mesh has no texture coordinates");
  if (posed_modified_mesh.size() != mesh.vertices.size()) throw DimensionError("posed mesh vertex count mismatch");
  if (cam.width() != frame.width || cam.height() != frame.height) {
    throw DimensionError("camera image size does not match frame");
  }
  RenderedFace out{frame, Mask(frame.width, frame.height), 0};
  const RasterBuffer buf = rasterize(cam, posed_modified_mesh, mesh.triangles, true);
  std::vector<int> near;

  for (int y = 0; y < buf.height; ++y) {
    for (int x = 0; x < buf.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * buf.width + x;
      const int t = buf.triangle[idx];
      if (t < 0) continue;
      const Triangle& tri = mesh.triangles[t];
      const Eigen::Vector3d& b = buf.bary[idx];
      const Vec2 uv = b[0] * mesh.uvs[tri[0]] + b[1] * mesh.uvs[tri[1]] + b[2] * mesh.uvs[tri[2]];
      const double tx = std::clamp(uv.x() * tex.width - 0.5, 0.0, tex.width - 1.0);
      const double ty = std::clamp(uv.y() * tex.height - 0.5, 0.0, tex.height - 1.0);
      const int i0 = static_cast<int>(std::floor(tx));
      const int j0 = static_cast<int>(std::floor(ty));
      const int i1 = std::min(i0 + 1, tex.width - 1);
      const int j1 = std::min(j0 + 1, tex.height - 1);
      const double fx = tx - i0;
      const double fy = ty - j0;
      const int ti[4] = {i0, i1, i0, i1};
      const int tj[4] = {j0, j0, j1, j1};
      const double tw[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      Vec3 acc = Vec3::Zero();
      double wsum = 0.0;
      for (int k = 0; k < 4; ++k) {
        if (tw[k] > 0.0 && tex.is_valid(ti[k], tj[k])) {
          acc += tw[k] * tex.color(ti[k], tj[k]);
          wsum += tw[k];
        }
      }
      Vec3 color;
      if (wsum > 0.0) {
        color = acc / wsum;
      } else {
        ++out.fallback_samples;
        if (near.empty()) near = nearest_valid(tex);
        const int nt = near[tex.texel(static_cast<int>(std::lround(tx)), static_cast<int>(std::lround(ty)))];
        if (nt < 0) continue;  // texture has no valid texel at all
        color = tex.color(nt % tex.width, nt / tex.width);
      }
      std::uint8_t* p = out.image.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = to_byte(color[c]);
      out.mask.set(x, y, true);
    }
  }
  return out;
}

}  // namespace sketchface
