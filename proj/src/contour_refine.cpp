#include "sketchface/contour_refine.hpp"

#include "sketchface/raster.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

namespace sketchface {

namespace {

struct HalfEdge {
  int from;
  int to;
};

struct Chain {
  std::vector<int> verts;
  bool closed = false;
};

// Links oriented edges head to tail. Every walk is first extended forward,
// then backward from its start, so open chains come out maximal.
std::vector<Chain> link_chains(const std::vector<HalfEdge>& edges) {
  std::map<int, std::vector<int>> out, in;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    out[edges[e].from].push_back(e);
    in[edges[e].to].push_back(e);
  }
  std::vector<char> used(edges.size(), 0);
  auto take = [&](std::map<int, std::vector<int>>& m, int v) {
    const auto it = m.find(v);
    if (it == m.end()) return -1;
    for (int e : it->second) {
      if (!used[e]) {
        used[e] = 1;
        return e;
      }
    }
    return -1;
  };

  std::vector<Chain> chains;
  for (int s = 0; s < static_cast<int>(edges.size()); ++s) {
    if (used[s]) continue;
    used[s] = 1;
    std::vector<int> fwd = {edges[s].from, edges[s].to};
    const int start = edges[s].from;
    while (fwd.back() != start) {
      const int e = take(out, fwd.back());
      if (e < 0) break;
      fwd.push_back(edges[e].to);
    }
    Chain c;
    if (fwd.back() == start) {
      c.verts = std::move(fwd);
      c.closed = true;
    } else {
      std::vector<int> back;
      int head = start;
      while (true) {
        const int e = take(in, head);
        if (e < 0) break;
        head = edges[e].from;
        back.push_back(head);
      }
      c.verts.assign(back.rbegin(), back.rend());
      c.verts.insert(c.verts.end(), fwd.begin(), fwd.end());
    }
    chains.push_back(std::move(c));
  }
  return chains;
}

// Splits a chain into maximal runs of visible vertices.
std::vector<Chain> visible_runs(const Chain& c, const std::vector<char>& visible) {
  std::vector<int> v = c.verts;
  if (c.closed) {
    v.pop_back();
    const auto hidden = std::find_if(v.begin(), v.end(), [&](int id) { return !visible[id]; });
    if (hidden == v.end()) return {c};
    std::rotate(v.begin(), hidden, v.end());
    v.push_back(v.front());
  }
  std::vector<Chain> runs;
  Chain cur;
  for (int id : v) {
    if (visible[id]) {
      cur.verts.push_back(id);
    } else {
      if (cur.verts.size() >= 2) runs.push_back(cur);
      cur.verts.clear();
    }
  }
  if (cur.verts.size() >= 2) runs.push_back(cur);
  return runs;
}

// True when some pixel near p (radius r) is off-image or uncovered.
bool touches_outside(const RasterBuffer& buf, const Vec2& p, double r) {
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4.0;
    const int x = static_cast<int>(std::lround(p.x() + r * std::cos(a)));
    const int y = static_cast<int>(std::lround(p.y() + r * std::sin(a)));
    if (x < 0 || y < 0 || x >= buf.width || y >= buf.height) return true;
    if (!buf.covered(x, y)) return true;
  }
  return false;
}

ContourPolyline make_polyline(ContourLabel label, const std::vector<int>& verts, bool closed, const Points2& proj,
                              const Vertices& posed) {
  ContourPolyline pl;
  pl.label = label;
  pl.closed = closed;
  for (int id : verts) {
    pl.points.push_back(proj[id]);
    pl.sources.push_back({id, posed[id], posed[id].z()});
  }
  return pl;
}

}  // namespace

std::string label_name(ContourLabel label) {
  switch (label) {
    case ContourLabel::exterior_silhouette:
      return "exterior_silhouette";
    case ContourLabel::occluding_contour:
      return "occluding_contour";
    case ContourLabel::shape_boundary:
      return "shape_boundary";
  }
  return "unknown";
}

RigidPose contour_view(const FaceMesh& mesh, const Camera& cam, double yaw, double pitch) {
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const Vec3& p : mesh.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double diag = (hi - lo).norm();
  const double depth = cam.focal() * diag / (0.7 * std::min(cam.width(), cam.height())) + diag;
  const Mat3 r = yaw_pitch_rotation(yaw, pitch);
  return RigidPose(r, Vec3(0.0, 0.0, depth) - r * center);
}

ContourMap render_contours(const FaceMesh& mesh, const RigidPose& view, const Camera& cam) {
  ContourMap map;
  map.view = view;
  map.camera = cam;
  const Vertices posed = transform_mesh(mesh.vertices, view);
  Points2 proj(posed.size());
  for (std::size_t i = 0; i < posed.size(); ++i) {
    if (!(posed[i].z() > 0.0)) throw ProjectionError("vertex " + std::to_string(i) + " is behind the camera");
    proj[i] = cam.project(posed[i]);
  }

  std::vector<char> facing(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    facing[t] = front_facing(posed[tri[0]], posed[tri[1]], posed[tri[2]]);
  }
  // True if the winding of triangle f runs a -> b.
  auto runs_forward = [&](int f, int a, int b) {
    const Triangle& tri = mesh.triangles[f];
    for (int k = 0; k < 3; ++k) {
      if (tri[k] == a && tri[(k + 1) % 3] == b) return true;
    }
    return false;
  };

  std::vector<HalfEdge> occluding, boundary;
  for (const Edge& e : build_edges(mesh.triangles)) {
    if (e.face_count == 1) {
      const int f = e.faces[0];
      boundary.push_back(runs_forward(f, e.a, e.b) ? HalfEdge{e.a, e.b} : HalfEdge{e.b, e.a});
    } else if (facing[e.faces[0]] != facing[e.faces[1]]) {
      // Oriented along the winding of the front-facing side.
      const int f = facing[e.faces[0]] ? e.faces[0] : e.faces[1];
      occluding.push_back(runs_forward(f, e.a, e.b) ? HalfEdge{e.a, e.b} : HalfEdge{e.b, e.a});
    }
  }

  const RasterBuffer buf = rasterize(cam, posed, mesh.triangles, false);
  // Camera-space tolerance: a vertex is hidden only if something is clearly in front of it.
  const double tol = mean_edge_length(posed, mesh.triangles);
  std::vector<char> visible(posed.size(), 1);
  for (std::size_t i = 0; i < posed.size(); ++i) {
    const int cx = static_cast<int>(std::lround(proj[i].x()));
    const int cy = static_cast<int>(std::lround(proj[i].y()));
    bool vis = false;
    bool any_inside = false;
    for (int dy = -1; dy <= 1 && !vis; ++dy) {
      for (int dx = -1; dx <= 1 && !vis; ++dx) {
        const int x = cx + dx, y = cy + dy;
        if (x < 0 || y < 0 || x >= buf.width || y >= buf.height) continue;
        any_inside = true;
        if (!buf.covered(x, y) || buf.depth_at(x, y) >= posed[i].z() - tol) vis = true;
      }
    }
    visible[i] = vis || !any_inside;
  }

  std::vector<ContourPolyline> base;
  for (const auto& [edges, label] : {std::pair{&occluding, ContourLabel::occluding_contour},
                                     std::pair{&boundary, ContourLabel::shape_boundary}}) {
    for (const Chain& chain : link_chains(*edges)) {
      for (const Chain& run : visible_runs(chain, visible)) {
        const int n_edges = static_cast<int>(run.verts.size()) - 1;
        if (label == ContourLabel::occluding_contour && n_edges < kMinContourEdges) continue;
        base.push_back(make_polyline(label, run.verts, run.closed, proj, posed));
      }
    }
  }

  map.polylines = base;
  for (const ContourPolyline& pl : base) {
    std::vector<char> outer(pl.points.size());
    for (std::size_t k = 0; k < pl.points.size(); ++k) outer[k] = touches_outside(buf, pl.points[k], 2.5);
    if (std::all_of(outer.begin(), outer.end(), [](char c) { return c != 0; })) {
      ContourPolyline ext = pl;
      ext.label = ContourLabel::exterior_silhouette;
      map.polylines.push_back(std::move(ext));
      continue;
    }
    std::size_t k = 0;
    while (k < pl.points.size()) {
      if (!outer[k]) {
        ++k;
        continue;
      }
      std::size_t end = k;
      while (end + 1 < pl.points.size() && outer[end + 1]) ++end;
      if (end > k) {
        ContourPolyline ext;
        ext.label = ContourLabel::exterior_silhouette;
        ext.points.assign(pl.points.begin() + k, pl.points.begin() + end + 1);
        ext.sources.assign(pl.sources.begin() + k, pl.sources.begin() + end + 1);
        map.polylines.push_back(std::move(ext));
      }
      k = end + 1;
    }
  }
  return map;
}

bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon) {
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    if ((a.y() > p.y()) != (b.y() > p.y()) && p.x() < (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

RefineResult refine_constraints(const ContourMap& map, const RefineEdit& edit, const FaceMesh& mesh,
                                const DeformConfig& cfg) {
  if (edit.erased_region.size() < 3) throw ValidationError("erased region needs at least 3 vertices");
  validate_stroke(edit.replacement_stroke);
  RefineResult result;

  // Longest run of consecutive polyline points inside the erased region.
  const ContourPolyline* best_pl = nullptr;
  std::size_t best_start = 0, best_len = 0;
  for (const ContourPolyline& pl : map.polylines) {
    const std::size_t n = pl.closed ? pl.points.size() - 1 : pl.points.size();
    std::vector<char> in(n);
    for (std::size_t k = 0; k < n; ++k) in[k] = point_in_polygon(pl.points[k], edit.erased_region);
    if (std::all_of(in.begin(), in.end(), [](char c) { return c != 0; })) {
      if (n > best_len) {
        best_pl = &pl;
        best_start = 0;
        best_len = n;
      }
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      // Start only where the previous point (cyclically for loops) is outside.
      const bool prev_in = pl.closed ? in[(k + n - 1) % n] : (k > 0 && in[k - 1]);
      if (!in[k] || prev_in) continue;
      std::size_t len = 0;
      while (len < n && (pl.closed || k + len < n) && in[(k + len) % n]) ++len;
      if (len > best_len) {
        best_pl = &pl;
        best_start = k;
        best_len = len;
      }
    }
  }
  if (best_pl == nullptr || best_len < 2) {
    result.warnings.push_back("erased region does not cover any contour line");
    return result;
  }

  const std::size_t n = best_pl->closed ? best_pl->points.size() - 1 : best_pl->points.size();
  std::vector<ContourSource> src;
  for (std::size_t k = 0; k < best_len; ++k) {
    const std::size_t idx = (best_start + k) % n;
    result.erased.push_back(best_pl->points[idx]);
    src.push_back(best_pl->sources[idx]);
  }

  // Key points at the erased line's own arc-length positions, in whichever
  // direction matches it better.
  const std::vector<double> fractions = arc_length_fractions(result.erased);
  const Points2& sp = edit.replacement_stroke.points;
  const Points2 forward = resample_at(sp, fractions);
  const Points2 reversed_pts(sp.rbegin(), sp.rend());
  const Points2 backward = resample_at(reversed_pts, fractions);
  double df = 0.0, db = 0.0;
  for (std::size_t k = 0; k < best_len; ++k) {
    df += (forward[k] - result.erased[k]).norm();
    db += (backward[k] - result.erased[k]).norm();
  }
  const Points2& keypoints = db < df ? backward : forward;

  LandmarkGroup group;
  group.name = "contour";
  for (std::size_t k = 0; k < best_len; ++k) group.landmark_indices.push_back(static_cast<int>(k));
  group.current_points = result.erased;
  result.fitted = deform_group(group, keypoints, cfg).points;

  const double radius = 2.0 * mean_edge_length(mesh.vertices, mesh.triangles);
  std::map<int, std::pair<double, Vec3>> chosen;  // vertex -> (distance, target)
  for (std::size_t k = 0; k < best_len; ++k) {
    const Vec3 cam_point = map.camera.unproject(result.fitted[k], src[k].depth);
    const Vec3 target = map.view.apply_inverse(cam_point);
    int best_v = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (const ContourSource& s : src) {
      const double d = (mesh.vertices[s.vertex_id] - target).norm();
      if (d < best_d) {
        best_d = d;
        best_v = s.vertex_id;
      }
    }
    if (best_d > radius) {
      result.warnings.push_back("point " + std::to_string(k) + " is farther than the snapping radius from the mesh");
      continue;
    }
    if (mesh.is_boundary(best_v)) {
      result.warnings.push_back("point " + std::to_string(k) + " snaps to fixed boundary vertex " +
                                std::to_string(best_v));
      continue;
    }
    const auto it = chosen.find(best_v);
    if (it == chosen.end() || best_d < it->second.first) chosen[best_v] = {best_d, target};
  }
  for (const auto& [v, dt] : chosen) result.constraints.push_back({v, dt.second});
  return result;
}

}  // namespace sketchface
