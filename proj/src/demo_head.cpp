#include "sketchface/demo_head.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

namespace sketchface {

namespace {

constexpr double kPi = std::numbers::pi;

// Piecewise-linear reparameterization putting `density` times more samples in [a, b].
double densify(double s, double a, double b, double density) {
  const double total = a + (b - a) * density + (1.0 - b);
  const double sa = a / total;
  const double sb = (a + (b - a) * density) / total;
  if (s < sa) return s / sa * a;
  if (s < sb) return a + (s - sa) / (sb - sa) * (b - a);
  return b + (s - sb) / (1.0 - sb) * (1.0 - b);
}

double gauss2(double u, double v, double cu, double cv, double su, double sv) {
  const double du = (u - cu) / su;
  const double dv = (v - cv) / sv;
  return std::exp(-0.5 * (du * du + dv * dv));
}

// Relief toward the camera, model units.
double relief(double u, double v) {
  double h = 0.0;
  h += 1.8 * gauss2(u, v, 0.5, 0.60, 0.035, 0.05);    // nose tip
  h += 0.8 * gauss2(u, v, 0.5, 0.50, 0.025, 0.07);    // bridge
  h -= 0.6 * gauss2(u, v, 0.37, 0.45, 0.05, 0.035);   // eye sockets
  h -= 0.6 * gauss2(u, v, 0.63, 0.45, 0.05, 0.035);
  h += 0.4 * gauss2(u, v, 0.5, 0.37, 0.18, 0.03);     // brow ridge
  h += 0.5 * gauss2(u, v, 0.5, 0.79, 0.07, 0.03);     // lips
  h += 0.5 * gauss2(u, v, 0.5, 0.93, 0.06, 0.06);     // chin
  return h;
}

// Nominal UV of each of the 68 landmarks.
Points2 landmark_uvs() {
  Points2 p;
  for (int k = 0; k <= 16; ++k) {
    const double a = kPi * k / 16.0;
    p.emplace_back(0.5 - 0.36 * std::cos(a), 0.45 + 0.47 * std::sin(a));
  }
  Points2 brow;
  for (int k = 0; k < 5; ++k) brow.emplace_back(0.27 + 0.045 * k, 0.375 - 0.02 * std::sin(kPi * k / 4.0));
  for (const Vec2& q : brow) p.push_back(q);
  for (int k = 0; k < 5; ++k) p.emplace_back(1.0 - brow[4 - k].x(), brow[4 - k].y());
  for (double v : {0.44, 0.49, 0.54, 0.59}) p.emplace_back(0.5, v);
  p.emplace_back(0.45, 0.635);
  p.emplace_back(0.475, 0.645);
  p.emplace_back(0.5, 0.65);
  p.emplace_back(0.525, 0.645);
  p.emplace_back(0.55, 0.635);
  const Points2 right_eye = {{0.32, 0.45}, {0.35, 0.435}, {0.39, 0.435}, {0.42, 0.45}, {0.39, 0.465}, {0.35, 0.465}};
  for (const Vec2& q : right_eye) p.push_back(q);
  // Mirror keeps the iBUG order: inner corner first on the left eye.
  const int mirror[6] = {3, 2, 1, 0, 5, 4};
  for (int k : mirror) p.emplace_back(1.0 - right_eye[k].x(), right_eye[k].y());
  const Points2 outer = {{0.41, 0.785}, {0.44, 0.765}, {0.47, 0.755}, {0.5, 0.76},   {0.53, 0.755}, {0.56, 0.765},
                         {0.59, 0.785}, {0.56, 0.81},  {0.53, 0.822}, {0.5, 0.825}, {0.47, 0.822}, {0.44, 0.81}};
  for (const Vec2& q : outer) p.push_back(q);
  const Points2 inner = {{0.43, 0.785}, {0.46, 0.777}, {0.5, 0.777},  {0.54, 0.777},
                         {0.57, 0.785}, {0.54, 0.795}, {0.5, 0.797}, {0.46, 0.795}};
  for (const Vec2& q : inner) p.push_back(q);
  return p;
}

std::vector<Triangle> grid_triangles(int nx, int ny) {
  std::vector<Triangle> tris;
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const int a = j * nx + i;
      const int b = a + 1;
      const int c = a + nx;
      const int d = c + 1;
      // Wound so the normal points to -z, toward a camera on the -z side.
      tris.push_back({a, c, b});
      tris.push_back({b, c, d});
    }
  }
  return tris;
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / std::max(ab.squaredNorm(), 1e-30), 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double polyline_distance(const Vec2& p, std::span<const Vec2> pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) best = std::min(best, segment_distance(p, pts[i], pts[i + 1]));
  return best;
}

Vec3 mix(const Vec3& a, const Vec3& b, double w) { return (1.0 - w) * a + w * b; }

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

FaceMesh make_demo_head(int grid) {
  if (grid < 16) throw ValidationError("demo head grid must be at least 16");
  constexpr double rx = 7.5, ry = 9.5, rz = 7.0;
  constexpr double theta_max = 75.0 * kPi / 180.0;
  constexpr double phi_max = 50.0 * kPi / 180.0;
  Vertices verts;
  Points2 uvs;
  for (int j = 0; j < grid; ++j) {
    const double v = densify(static_cast<double>(j) / (grid - 1), 0.28, 0.90, 4.0);
    for (int i = 0; i < grid; ++i) {
      const double u = densify(static_cast<double>(i) / (grid - 1), 0.25, 0.75, 4.0);
      const double theta = (2.0 * u - 1.0) * theta_max;
      const double phi = (2.0 * v - 1.0) * phi_max;
      verts.emplace_back(rx * std::sin(theta) * std::cos(phi), ry * std::sin(phi),
                         -rz * std::cos(theta) * std::cos(phi) - relief(u, v));
      uvs.emplace_back(u, v);
    }
  }
  // Greedy snap of each landmark to the closest vertex not taken yet.
  std::vector<int> ids;
  std::vector<char> used(verts.size(), 0);
  for (const Vec2& target : landmark_uvs()) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < uvs.size(); ++k) {
      const double d = (uvs[k] - target).squaredNorm();
      if (!used[k] && d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    used[best] = 1;
    ids.push_back(best);
  }
  return FaceMesh::build(std::move(verts), grid_triangles(grid, grid), std::move(ids), std::move(uvs));
}

std::vector<GroupDefinition> demo_groups() {
  auto range = [](int a, int b) {
    std::vector<int> r;
    for (int k = a; k <= b; ++k) r.push_back(k);
    return r;
  };
  return {
      {"jaw", range(0, 16)},
      {"right_eyebrow", range(17, 21)},
      {"left_eyebrow", range(22, 26)},
      {"nose_bridge", range(27, 30)},
      {"nose_base", range(31, 35)},
      {"right_upper_eyelid", range(36, 39)},
      {"right_lower_eyelid", {41, 40}},
      {"left_upper_eyelid", range(42, 45)},
      {"left_lower_eyelid", {47, 46}},
      {"outer_upper_lip", range(48, 54)},
      {"outer_lower_lip", range(55, 59)},
      {"inner_upper_lip", range(60, 64)},
      {"inner_lower_lip", range(65, 67)},
  };
}

FaceMesh make_grid_mesh(int nx, int ny, double spacing) {
  if (nx < 2 || ny < 2) throw ValidationError("grid mesh needs at least 2x2 vertices");
  Vertices verts;
  Points2 uvs;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      verts.emplace_back(i * spacing, j * spacing, 0.0);
      uvs.emplace_back(static_cast<double>(i) / (nx - 1), static_cast<double>(j) / (ny - 1));
    }
  }
  return FaceMesh::build(std::move(verts), grid_triangles(nx, ny), {}, std::move(uvs));
}

FaceMesh make_icosphere(int subdivisions, double radius) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  Vertices v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int id = static_cast<int>(v.size()) - 1;
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> next;
    for (const Triangle& tri : f) {
      const int ab = midpoint(tri[0], tri[1]);
      const int bc = midpoint(tri[1], tri[2]);
      const int ca = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  // The base list above winds inward for this axis convention; flip to outward.
  if (triangle_normal(v, f.front()).dot(v[f.front()[0]] + v[f.front()[1]] + v[f.front()[2]]) < 0.0) {
    for (Triangle& tri : f) std::swap(tri[1], tri[2]);
  }
  for (Vec3& p : v) p *= radius;
  return FaceMesh::build(std::move(v), std::move(f), {}, {});
}

Isomap demo_texture(const FaceMesh& head, int size) {
  const auto& ids = head.landmark_vertex_ids;
  if (ids.size() != 68 || !head.has_uvs()) throw ValidationError("demo texture needs the 68-landmark demo head");
  auto uv = [&](int k) { return head.uvs[ids[k]]; };
  auto run = [&](int a, int b) {
    Points2 r;
    for (int k = a; k <= b; ++k) r.push_back(uv(k));
    return r;
  };
  const Points2 right_brow = run(17, 21);
  const Points2 left_brow = run(22, 26);
  const Vec2 right_eye = 0.5 * (uv(36) + uv(39));
  const Vec2 left_eye = 0.5 * (uv(42) + uv(45));
  const Points2 markers = run(48, 59);

  return isomap_from_function(size, [&](double u, double v) {
    const Vec2 p(u, v);
    Vec3 c(205.0 + 10.0 * std::sin(2 * kPi * 2 * u) + 6.0 * std::sin(40 * u) * std::sin(35 * v),
           165.0 + 8.0 * std::cos(2 * kPi * 1.5 * v) + 5.0 * std::sin(31 * u + 7 * v),
           140.0 + 6.0 * std::sin(2 * kPi * (u + v)));
    const double db = std::min(polyline_distance(p, right_brow), polyline_distance(p, left_brow));
    c = mix(c, Vec3(80, 55, 40), 0.85 * std::exp(-db * db / (2 * 0.012 * 0.012)));
    for (const Vec2& e : {right_eye, left_eye}) {
      c = mix(c, Vec3(235, 235, 228), 0.9 * gauss2(u, v, e.x(), e.y(), 0.025, 0.01));
      c = mix(c, Vec3(60, 40, 30), 0.9 * gauss2(u, v, e.x(), e.y(), 0.008, 0.008));
    }
    const double du = (u - 0.5) / 0.075;
    const double dv = (v - 0.79) / 0.025;
    c = mix(c, Vec3(170, 60, 70), 0.8 * std::exp(-du * du * du * du - dv * dv));
    c = mix(c, Vec3(90, 50, 45), 0.7 * gauss2(u, v, 0.47, 0.64, 0.008, 0.006));
    c = mix(c, Vec3(90, 50, 45), 0.7 * gauss2(u, v, 0.53, 0.64, 0.008, 0.006));
    double dot = 0.0;
    for (const Vec2& m : markers) dot = std::max(dot, gauss2(u, v, m.x(), m.y(), 0.0055, 0.0055));
    return mix(c, Vec3(30, 60, 235), dot);
  });
}

FrameImage demo_background(int width, int height) {
  FrameImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = to_byte(110 + 50 * std::sin(x / 19.0 + 0.5 * std::sin(y / 31.0)));
      p[1] = to_byte(120 + 45 * std::cos(y / 23.0));
      p[2] = to_byte(130 + 40 * std::sin((x + y) / 29.0));
    }
  }
  return img;
}

SessionBundle write_demo_bundle(const std::filesystem::path& root, const DemoOptions& opt) {
  if (opt.frames < 1) throw ValidationError("demo bundle needs at least one frame");
  SessionBundle b;
  b.root = root;
  b.camera = Camera(opt.focal, Vec2(opt.width / 2.0, opt.height / 2.0), opt.width, opt.height);
  b.fps = 30.0;
  b.frame_count = opt.frames;
  b.isomap_size = isomap_size_for_height(opt.height);

  const FaceMesh base = make_demo_head(opt.grid);
  b.core = synthesize_core(opt.seed, base.vertex_count(), opt.n_identity, opt.n_expression, base);
  std::mt19937_64 rng(opt.seed ^ 0x5eedULL);
  Eigen::VectorXd delta(opt.n_identity - 1);
  for (int i = 0; i < delta.size(); ++i) delta[i] = 2.0 * unit(rng) - 1.0;
  if (delta.size() > 0 && delta.norm() > 0.0) delta *= 0.6 / delta.norm();
  b.identity.u.resize(opt.n_identity);
  b.identity.u << 1.0, delta;
  b.blendshapes = build_blendshapes(b.core, b.identity);
  b.mesh = FaceMesh::build(b.blendshapes.neutral(), base.triangles, base.landmark_vertex_ids, base.uvs);
  b.groups = demo_groups();
  b.relation_pairs = default_relation_pairs(b.groups);

  const int n_lm = static_cast<int>(b.mesh.landmark_vertex_ids.size());
  for (int t = 0; t < opt.frames; ++t) {
    const double ph = 2 * kPi * t / 30.0;
    FrameParams fp;
    fp.frame_index = t;
    fp.pose = RigidPose(yaw_pitch_rotation(0.25 * std::sin(ph), 0.08 * std::sin(2 * ph)),
                        Vec3(0.3 * std::sin(ph), 0.2 * std::cos(ph), opt.distance));
    fp.expression.e.resize(opt.n_expression - 1);
    for (int n = 0; n < fp.expression.e.size(); ++n) {
      fp.expression.e[n] = 0.15 * (1.0 + std::sin(ph * (n + 1) / 2.0 + n));
    }
    for (int k = 0; k < n_lm; ++k) fp.displacements.emplace_back(0.4 * std::sin(0.3 * t + k), 0.3 * std::cos(0.2 * t + 2 * k));
    b.params.push_back(std::move(fp));

    // Static background anchors.
    std::vector<ControlPair> pairs;
    const double w = opt.width - 1.0, h = opt.height - 1.0;
    for (double fx : {0.03, 0.27, 0.5, 0.73, 0.97}) {
      for (double fy : {0.05, 0.95}) pairs.push_back({Vec2(fx * w, fy * h), Vec2(fx * w, fy * h)});
    }
    pairs.push_back({Vec2(0.03 * w, 0.5 * h), Vec2(0.03 * w, 0.5 * h)});
    pairs.push_back({Vec2(0.97 * w, 0.5 * h), Vec2(0.97 * w, 0.5 * h)});
    b.tracks.push_back(std::move(pairs));
  }

  save_bundle_metadata(root, b);
  const Isomap tex = demo_texture(b.mesh, 1024);
  const FrameImage background = demo_background(opt.width, opt.height);
  for (int t = 0; t < opt.frames; ++t) {
    const Vertices posed = b.posed(t, b.mesh.vertices);
    write_png(b.frame_path(t), render_face(background, posed, b.mesh, b.camera, tex).image);
  }
  return load_bundle(root);
}

}  // namespace sketchface
