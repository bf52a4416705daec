#pragma once

#include "sketchface/types.hpp"

#include <filesystem>
#include <span>

namespace sketchface {

inline constexpr double kDegenerateAreaThreshold = 1e-12;

/// Shared-topology triangle mesh of the face.
///
/// `boundary_vertices` is derived from the triangles (vertices of edges used by
/// exactly one triangle) and kept sorted. `landmark_vertex_ids` is the ordered
/// list of landmark vertices (68 for the bundled head, but not hardcoded).
struct FaceMesh {
  Vertices vertices;
  std::vector<Triangle> triangles;
  std::vector<int> boundary_vertices;
  std::vector<int> landmark_vertex_ids;
  Points2 uvs;

  /// Builds a mesh, computes its boundary and checks every topological invariant.
  /// Throws ValidationError or DegenerateError.
  static FaceMesh build(Vertices vertices, std::vector<Triangle> triangles,
                        std::vector<int> landmark_vertex_ids, Points2 uvs);

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int triangle_count() const { return static_cast<int>(triangles.size()); }
  bool has_uvs() const { return !uvs.empty(); }
  bool is_boundary(int vertex) const;

  /// Same topology, new positions. Throws DimensionError on count mismatch.
  FaceMesh with_vertices(Vertices positions) const;
};

struct Edge {
  int a = 0;  // a < b
  int b = 0;
  std::array<int, 2> faces{-1, -1};
  int face_count = 0;
};

/// Unique undirected edges with their adjacent triangles. Throws
/// ValidationError if an edge is shared by more than two triangles.
std::vector<Edge> build_edges(std::span<const Triangle> triangles);

/// Sorted ids of vertices lying on edges used by a single triangle.
std::vector<int> compute_boundary(std::span<const Triangle> triangles, int n_vertices);

/// Edge-adjacent triangle ids for every triangle.
std::vector<std::vector<int>> triangle_adjacency(std::span<const Triangle> triangles);

Vec3 triangle_normal(const Vertices& v, const Triangle& t);  // unnormalized, length = 2*area
double triangle_area(const Vertices& v, const Triangle& t);
double mean_edge_length(const Vertices& v, std::span<const Triangle> triangles);

/// OBJ subset: `v`, `vt` and triangular `f` records. Per-vertex UVs are taken
/// from the first `vt` referenced by each vertex. Landmark ids are not stored
/// in OBJ and must be supplied separately.
FaceMesh read_obj(const std::filesystem::path& path, std::vector<int> landmark_vertex_ids = {});
void write_obj(const std::filesystem::path& path, const FaceMesh& mesh);

}  // namespace sketchface
