#pragma once

#include "sketchface/face_model.hpp"
#include "sketchface/mesh.hpp"

#include <Eigen/Sparse>

namespace sketchface {

/// Identity-space target for one mesh vertex.
struct LandmarkConstraint {
  int vertex_id = 0;
  Vec3 target = Vec3::Zero();
};

struct TransferWeights {
  double smoothness = 1.0;      // w_s
  double regularization = 0.1;  // w_r
  double landmark = 1.0;        // w_l

  static TransferWeights defaults() { return {1.0, 0.1, 1.0}; }
  /// Boosted smoothness/regularization used when re-solving after contour edits.
  static TransferWeights refinement() { return {2.0, 0.5, 1.0}; }
  void validate() const;
};

struct TransferProblem {
  FaceMesh source_identity;
  std::vector<LandmarkConstraint> constraints;
  TransferWeights weights;
  std::vector<int> boundary;                  // fixed vertices, sorted
  std::vector<std::vector<int>> adjacency;  // edge-adjacent triangles per triangle

  /// Fills boundary and adjacency from the mesh and validates everything.
  static TransferProblem make(FaceMesh source, std::vector<LandmarkConstraint> constraints,
                              TransferWeights weights = TransferWeights::defaults());
  void validate() const;
};

/// Back-projects a modified landmark pixel at the depth of the original posed vertex.
Vec3 estimate_modified_landmark_3d(const Vec2& modified_2d, const Vec3& original_vertex_posed, const Camera& cam);

/// Removes the rigid pose, then the expression offset at the vertex.
Vec3 to_identity_target(const Vec3& camera_point, const RigidPose& pose, const Vec3& expression_offset_at_vertex);

/// Columns (v2 - v1, v3 - v1, v4 - v1) with v4 = v1 + n / sqrt(|n|), n = (v2 - v1) x (v3 - v1).
/// Throws DegenerateError for area below 1e-12.
Mat3 build_vertex_matrix(const Vec3& v1, const Vec3& v2, const Vec3& v3);

/// Normal equations of the transfer energy after eliminating boundary vertices.
///
/// Unknowns per coordinate: every non-boundary vertex followed by one
/// auxiliary fourth vertex per triangle (which keeps each deformation
/// gradient linear in the unknowns). The three coordinates share `normal`.
struct TransferSystem {
  Eigen::SparseMatrix<double> normal;
  Eigen::MatrixXd rhs;             // n_unknowns x 3
  std::vector<int> unknown_of_vertex;  // -1 for boundary vertices
  int free_vertex_count = 0;
  int unknown_count = 0;
};

TransferSystem assemble_transfer_system(const TransferProblem& problem);

struct TransferReport {
  int free_vertices = 0;
  int unknowns = 0;
  bool iterative = false;
  double max_displacement = 0.0;
};

/// Minimizes w_s E_s + w_r E_r + w_l E_l with boundary vertices held at their
/// source positions. Throws SolverError when the system is rank deficient.
FaceMesh transfer_identity(const TransferProblem& problem, TransferReport* report = nullptr);

}  // namespace sketchface
