#include "sketchface/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

namespace sketchface {

namespace {

std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

std::vector<Edge> build_edges(std::span<const Triangle> triangles) {
  std::vector<Edge> edges;
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(triangles.size() * 2);
  for (int f = 0; f < static_cast<int>(triangles.size()); ++f) {
    const Triangle& t = triangles[f];
    for (int k = 0; k < 3; ++k) {
      int a = t[k];
      int b = t[(k + 1) % 3];
      auto [it, inserted] = index.try_emplace(edge_key(a, b), static_cast<int>(edges.size()));
      if (inserted) {
        Edge e;
        e.a = std::min(a, b);
        e.b = std::max(a, b);
        edges.push_back(e);
      }
      Edge& e = edges[it->second];
      if (e.face_count == 2) {
        throw ValidationError("edge (" + std::to_string(e.a) + "," + std::to_string(e.b) +
                              ") is shared by more than two triangles");
      }
      e.faces[e.face_count++] = f;
    }
  }
  return edges;
}

std::vector<int> compute_boundary(std::span<const Triangle> triangles, int n_vertices) {
  std::vector<char> on_boundary(n_vertices, 0);
  for (const Edge& e : build_edges(triangles)) {
    if (e.face_count == 1) {
      on_boundary[e.a] = 1;
      on_boundary[e.b] = 1;
    }
  }
  std::vector<int> out;
  for (int i = 0; i < n_vertices; ++i) {
    if (on_boundary[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<int>> triangle_adjacency(std::span<const Triangle> triangles) {
  std::vector<std::vector<int>> adj(triangles.size());
  for (const Edge& e : build_edges(triangles)) {
    if (e.face_count == 2) {
      adj[e.faces[0]].push_back(e.faces[1]);
      adj[e.faces[1]].push_back(e.faces[0]);
    }
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

Vec3 triangle_normal(const Vertices& v, const Triangle& t) {
  return (v[t[1]] - v[t[0]]).cross(v[t[2]] - v[t[0]]);
}

double triangle_area(const Vertices& v, const Triangle& t) {
  return 0.5 * triangle_normal(v, t).norm();
}

double mean_edge_length(const Vertices& v, std::span<const Triangle> triangles) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const Edge& e : build_edges(triangles)) {
    sum += (v[e.a] - v[e.b]).norm();
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

FaceMesh FaceMesh::build(Vertices vertices, std::vector<Triangle> triangles,
                         std::vector<int> landmark_vertex_ids, Points2 uvs) {
  const int n = static_cast<int>(vertices.size());
  for (const Vec3& p : vertices) {
    if (!p.allFinite()) throw ValidationError("mesh has non-finite vertex");
  }
  for (std::size_t f = 0; f < triangles.size(); ++f) {
    for (int idx : triangles[f]) {
      if (idx < 0 || idx >= n) {
        throw ValidationError("triangle " + std::to_string(f) + " references vertex " +
                              std::to_string(idx) + " outside [0," + std::to_string(n) + ")");
      }
    }
    if (triangle_area(vertices, triangles[f]) < kDegenerateAreaThreshold) {
      throw DegenerateError("triangle " + std::to_string(f) + " is degenerate");
    }
  }
  std::set<int> seen;
  for (int id : landmark_vertex_ids) {
    if (id < 0 || id >= n) throw ValidationError("landmark vertex id out of range: " + std::to_string(id));
    if (!seen.insert(id).second) throw ValidationError("duplicate landmark vertex id " + std::to_string(id));
  }
  if (!uvs.empty() && static_cast<int>(uvs.size()) != n) {
    throw ValidationError("uv count " + std::to_string(uvs.size()) + " != vertex count " + std::to_string(n));
  }

  FaceMesh mesh;
  mesh.boundary_vertices = compute_boundary(triangles, n);
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.landmark_vertex_ids = std::move(landmark_vertex_ids);
  mesh.uvs = std::move(uvs);
  return mesh;
}

bool FaceMesh::is_boundary(int vertex) const {
  return std::binary_search(boundary_vertices.begin(), boundary_vertices.end(), vertex);
}

FaceMesh FaceMesh::with_vertices(Vertices positions) const {
  if (positions.size() != vertices.size()) {
    throw DimensionError("vertex count " + std::to_string(positions.size()) + " != mesh vertex count " +
                         std::to_string(vertices.size()));
  }
  FaceMesh out = *this;
  out.vertices = std::move(positions);
  return out;
}

FaceMesh read_obj(const std::filesystem::path& path, std::vector<int> landmark_vertex_ids) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open mesh file " + path.string());

  Vertices vertices;
  Points2 texcoords;
  std::vector<Triangle> triangles;
  std::map<int, int> uv_of_vertex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 p;
      if (!(ss >> p.x() >> p.y() >> p.z())) throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad v");
      vertices.push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ss >> t.x() >> t.y())) throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad vt");
      texcoords.push_back(t);
    } else if (tag == "f") {
      Triangle tri{};
      int count = 0;
      std::string token;
      while (ss >> token) {
        if (count == 3) throw IoError(path.string() + ":" + std::to_string(line_no) + ": only triangles supported");
        int v = 0;
        int vt = 0;
        const auto slash = token.find('/');
        v = std::stoi(token.substr(0, slash));
        if (slash != std::string::npos && slash + 1 < token.size() && token[slash + 1] != '/') {
          vt = std::stoi(token.substr(slash + 1));
        }
        tri[count] = v - 1;
        if (vt > 0) uv_of_vertex.try_emplace(v - 1, vt - 1);
        ++count;
      }
      if (count != 3) throw IoError(path.string() + ":" + std::to_string(line_no) + ": only triangles supported");
      triangles.push_back(tri);
    }
  }

  Points2 uvs;
  if (!texcoords.empty()) {
    uvs.assign(vertices.size(), Vec2::Zero());
    for (auto [v, t] : uv_of_vertex) {
      if (v < 0 || v >= static_cast<int>(vertices.size()) || t < 0 || t >= static_cast<int>(texcoords.size())) {
        throw IoError(path.string() + ": face index out of range");
      }
      uvs[v] = texcoords[t];
    }
  }
  return FaceMesh::build(std::move(vertices), std::move(triangles), std::move(landmark_vertex_ids), std::move(uvs));
}

void write_obj(const std::filesystem::path& path, const FaceMesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write mesh file " + path.string());
  for (const Vec3& p : mesh.vertices) std::fprintf(f, "v %.17g %.17g %.17g\n", p.x(), p.y(), p.z());
  for (const Vec2& t : mesh.uvs) std::fprintf(f, "vt %.17g %.17g\n", t.x(), t.y());
  const bool uv = mesh.has_uvs();
  for (const Triangle& t : mesh.triangles) {
    if (uv) {
      std::fprintf(f, "f %d/%d %d/%d %d/%d\n", t[0] + 1, t[0] + 1, t[1] + 1, t[1] + 1, t[2] + 1, t[2] + 1);
    } else {
      std::fprintf(f, "f %d %d %d\n", t[0] + 1, t[1] + 1, t[2] + 1);
    }
  }
  std::fclose(f);
}

}  // namespace sketchface
