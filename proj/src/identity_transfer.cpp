#include "sketchface/identity_transfer.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <set>

namespace sketchface {

void TransferWeights::validate() const {
  if (!(smoothness >= 0.0) || !(regularization >= 0.0) || !(landmark >= 0.0)) {
    throw ValidationError("transfer weights must be non-negative");
  }
  if (smoothness == 0.0 && regularization == 0.0 && landmark == 0.0) {
    throw ValidationError("transfer weights must not all be zero");
  }
}

TransferProblem TransferProblem::make(FaceMesh source, std::vector<LandmarkConstraint> constraints,
                                      TransferWeights weights) {
  TransferProblem p;
  p.boundary = source.boundary_vertices;
  p.adjacency = triangle_adjacency(source.triangles);
  p.source_identity = std::move(source);
  p.constraints = std::move(constraints);
  p.weights = weights;
  p.validate();
  return p;
}

void TransferProblem::validate() const {
  weights.validate();
  const int n = source_identity.vertex_count();
  if (!std::is_sorted(boundary.begin(), boundary.end())) throw ValidationError("boundary ids must be sorted");
  for (int b : boundary) {
    if (b < 0 || b >= n) throw ValidationError("boundary vertex out of range: " + std::to_string(b));
  }
  for (const auto& c : constraints) {
    if (c.vertex_id < 0 || c.vertex_id >= n) {
      throw ValidationError("constraint vertex out of range: " + std::to_string(c.vertex_id));
    }
    if (!c.target.allFinite()) throw ValidationError("constraint target is not finite");
    if (std::binary_search(boundary.begin(), boundary.end(), c.vertex_id)) {
      throw ValidationError("constraint on boundary vertex " + std::to_string(c.vertex_id));
    }
  }
  if (adjacency.size() != source_identity.triangles.size()) throw ValidationError("adjacency size mismatch");
  for (std::size_t i = 0; i < adjacency.size(); ++i) {
    if (adjacency[i].empty() || adjacency[i].size() > 3) {
      throw ValidationError("triangle " + std::to_string(i) + " has " + std::to_string(adjacency[i].size()) +
                            " neighbors (expected 1-3)");
    }
    for (int j : adjacency[i]) {
      if (j < 0 || j >= static_cast<int>(adjacency.size()) ||
          std::find(adjacency[j].begin(), adjacency[j].end(), static_cast<int>(i)) == adjacency[j].end()) {
        throw ValidationError("triangle adjacency is not symmetric");
      }
    }
  }
}

Vec3 estimate_modified_landmark_3d(const Vec2& modified_2d, const Vec3& original_vertex_posed, const Camera& cam) {
  return cam.unproject(modified_2d, original_vertex_posed.z());
}

Vec3 to_identity_target(const Vec3& camera_point, const RigidPose& pose, const Vec3& expression_offset_at_vertex) {
  return pose.apply_inverse(camera_point) - expression_offset_at_vertex;
}

Mat3 build_vertex_matrix(const Vec3& v1, const Vec3& v2, const Vec3& v3) {
  const Vec3 e1 = v2 - v1;
  const Vec3 e2 = v3 - v1;
  const Vec3 n = e1.cross(e2);
  const double len = n.norm();
  if (!(0.5 * len >= kDegenerateAreaThreshold)) throw DegenerateError("degenerate triangle in vertex matrix");
  Mat3 m;
  m.col(0) = e1;
  m.col(1) = e2;
  m.col(2) = n / std::sqrt(len);
  return m;
}

namespace {

// Deformation-gradient column c as a linear form over the triangle's
// (v1, v2, v3, v4) unknowns: Q(r, c) = sum_k coef[c][k] * x_k(r).
using GradientForm = Eigen::Matrix<double, 3, 4>;

GradientForm gradient_form(const Mat3& vertex_matrix) {
  const Mat3 inv = vertex_matrix.inverse();
  GradientForm f;
  for (int c = 0; c < 3; ++c) {
    f(c, 1) = inv(0, c);
    f(c, 2) = inv(1, c);
    f(c, 3) = inv(2, c);
    f(c, 0) = -(inv(0, c) + inv(1, c) + inv(2, c));
  }
  return f;
}

}  // namespace

TransferSystem assemble_transfer_system(const TransferProblem& problem) {
  problem.validate();
  const FaceMesh& mesh = problem.source_identity;
  const int nv = mesh.vertex_count();
  const int nt = mesh.triangle_count();

  TransferSystem sys;
  sys.unknown_of_vertex.assign(nv, -1);
  int next = 0;
  for (int v = 0; v < nv; ++v) {
    if (!std::binary_search(problem.boundary.begin(), problem.boundary.end(), v)) sys.unknown_of_vertex[v] = next++;
  }
  sys.free_vertex_count = next;
  sys.unknown_count = next + nt;

  std::vector<GradientForm> forms(nt);
  for (int t = 0; t < nt; ++t) {
    const Triangle& tri = mesh.triangles[t];
    try {
      forms[t] = gradient_form(build_vertex_matrix(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]));
    } catch (const DegenerateError&) {
      throw DegenerateError("source triangle " + std::to_string(t) + " is degenerate");
    }
  }

  // The normal equations are accumulated directly from 4x4 blocks. Every
  // residual has the form F_i X_i - F_j X_j (smoothness), F_i X_i - I
  // (regularization) or x_v - target (landmark); fixed vertex slots go to the
  // right-hand side.
  std::vector<Eigen::Triplet<double>> triplets;
  sys.rhs = Eigen::MatrixXd::Zero(sys.unknown_count, 3);

  // Encodes vertex slots: unknown index >= 0, or -(vertex + 1) for fixed vertices.
  auto slots = [&](int t) {
    const Triangle& tri = mesh.triangles[t];
    std::array<int, 4> s{};
    for (int k = 0; k < 3; ++k) {
      const int u = sys.unknown_of_vertex[tri[k]];
      s[k] = u >= 0 ? u : -(tri[k] + 1);
    }
    s[3] = sys.free_vertex_count + t;
    return s;
  };
  // Adds block g (rows at slots a, columns at slots b) to the system.
  auto add_block = [&](const std::array<int, 4>& a, const std::array<int, 4>& b, const Eigen::Matrix4d& g) {
    for (int r = 0; r < 4; ++r) {
      if (a[r] < 0) continue;
      for (int c = 0; c < 4; ++c) {
        if (g(r, c) == 0.0) continue;
        if (b[c] >= 0) {
          triplets.emplace_back(a[r], b[c], g(r, c));
        } else {
          sys.rhs.row(a[r]) -= g(r, c) * mesh.vertices[-b[c] - 1].transpose();
        }
      }
    }
  };

  const TransferWeights& w = problem.weights;
  const double ws = 0.5 * w.smoothness;
  const double wr = 0.5 * w.regularization;
  const double wl = 0.5 * w.landmark;
  std::vector<std::array<int, 4>> slot(nt);
  std::vector<Eigen::Matrix4d> self(nt);
  std::size_t pairs = 0;
  for (int t = 0; t < nt; ++t) {
    slot[t] = slots(t);
    self[t] = forms[t].transpose() * forms[t];
    pairs += problem.adjacency[t].size();
  }
  triplets.reserve(16 * (nt + 2 * pairs) + problem.constraints.size());

  std::vector<double> diag(nt, 0.0);  // weight on F_t^T F_t
  for (int i = 0; i < nt; ++i) {
    if (w.smoothness > 0.0) {
      for (int j : problem.adjacency[i]) {
        const Eigen::Matrix4d cross = -ws * forms[i].transpose() * forms[j];
        add_block(slot[i], slot[j], cross);
        add_block(slot[j], slot[i], cross.transpose());
        diag[i] += ws;
        diag[j] += ws;
      }
    }
    if (w.regularization > 0.0) {
      diag[i] += wr;
      for (int k = 0; k < 4; ++k) {
        if (slot[i][k] >= 0) sys.rhs.row(slot[i][k]) += wr * forms[i].col(k).transpose();
      }
    }
  }
  for (int t = 0; t < nt; ++t) {
    if (diag[t] > 0.0) add_block(slot[t], slot[t], diag[t] * self[t]);
  }
  if (w.landmark > 0.0) {
    for (const auto& lc : problem.constraints) {
      const int u = sys.unknown_of_vertex[lc.vertex_id];
      triplets.emplace_back(u, u, wl);
      sys.rhs.row(u) += wl * lc.target.transpose();
    }
  }

  sys.normal.resize(sys.unknown_count, sys.unknown_count);
  sys.normal.setFromTriplets(triplets.begin(), triplets.end());
  sys.normal.prune(0.0);
  return sys;
}

FaceMesh transfer_identity(const TransferProblem& problem, TransferReport* report) {
  const TransferSystem sys = assemble_transfer_system(problem);
  const FaceMesh& mesh = problem.source_identity;

  Eigen::MatrixXd x(sys.unknown_count, 3);
  bool iterative = false;
  if (sys.free_vertex_count <= 50000) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(sys.normal);
    if (solver.info() != Eigen::Success) throw SolverError("transfer system factorization failed");
    const Eigen::VectorXd d = solver.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    if (!(d.minCoeff() > 1e-12 * dmax)) {
      throw SolverError("transfer system is rank deficient (min pivot " + std::to_string(d.minCoeff()) +
                        ", max pivot " + std::to_string(dmax) + ")");
    }
    x = solver.solve(sys.rhs);
  } else {
    iterative = true;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-10);
    cg.setMaxIterations(20 * sys.unknown_count);
    cg.compute(sys.normal);
    for (int c = 0; c < 3; ++c) {
      x.col(c) = cg.solve(sys.rhs.col(c));
      if (cg.info() != Eigen::Success) throw SolverError("conjugate gradient did not converge");
    }
  }
  if (!x.allFinite()) throw SolverError("transfer solution is not finite");

  Vertices out = mesh.vertices;
  double max_disp = 0.0;
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const int u = sys.unknown_of_vertex[v];
    if (u < 0) continue;
    out[v] = x.row(u).transpose();
    max_disp = std::max(max_disp, (out[v] - mesh.vertices[v]).norm());
  }
  if (report) {
    report->free_vertices = sys.free_vertex_count;
    report->unknowns = sys.unknown_count;
    report->iterative = iterative;
    report->max_displacement = max_disp;
  }
  return mesh.with_vertices(std::move(out));
}

}  // namespace sketchface
