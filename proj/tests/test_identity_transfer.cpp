#include "helpers.hpp"
#include "oracles.hpp"
#include "sketchface/demo_head.hpp"
#include "sketchface/identity_transfer.hpp"

#include <doctest.h>

using namespace sketchface;
using testutil::uniform;

namespace {

double max_error(const Vertices& a, const Vertices& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, (a[i] - b[i]).norm());
  return e;
}

double relative_error(const Vertices& got, const Vertices& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]).squaredNorm();
    den += want[i].squaredNorm();
  }
  return std::sqrt(num / den);
}

// Grid with a smooth bump so triangles are not all coplanar.
FaceMesh bumpy_grid(int nx, int ny, std::mt19937_64& rng) {
  FaceMesh g = make_grid_mesh(nx, ny, 1.0);
  Vertices v = g.vertices;
  const double a = uniform(rng, 0.3, 1.0);
  for (auto& p : v) p.z() += a * std::sin(0.7 * p.x()) * std::cos(0.5 * p.y()) + uniform(rng, -0.05, 0.05);
  return g.with_vertices(v);
}

std::vector<int> interior(const FaceMesh& m) {
  std::vector<int> out;
  for (int v = 0; v < m.vertex_count(); ++v) {
    if (!m.is_boundary(v)) out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_SUITE("identity_transfer") {

TEST_CASE("depth lift") {
  const Camera cam(900.0, Vec2(320, 180), 640, 360);
  const Vec3 p(1.2, -0.7, 48.0);
  const Vec2 px = cam.project(p);
  CHECK((estimate_modified_landmark_3d(px, p, cam) - p).norm() <= 1e-9);

  const Vec3 q(0.0, 0.0, 10.0);
  const Vec3 lifted = estimate_modified_landmark_3d(cam.project(q) + Vec2(7.5, -3.0), q, cam);
  CHECK(lifted.z() == 10.0);
  CHECK((cam.project(lifted) - (cam.project(q) + Vec2(7.5, -3.0))).norm() <= 1e-9);

  CHECK_THROWS_AS(estimate_modified_landmark_3d(px, Vec3(0, 0, -1), cam), ProjectionError);
}

TEST_CASE("identity-space targets") {
  const Vec3 p(0.3, 1.4, -2.0);
  CHECK(to_identity_target(p, RigidPose(), Vec3::Zero()) == p);
  CHECK((to_identity_target(Vec3(0, 1, 5), RigidPose(Mat3::Identity(), Vec3(0, 0, 5)), Vec3(0, 1, 0))).norm() <= 1e-15);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    const RigidPose pose(testutil::random_rotation(rng), testutil::random_vec3(rng, -10, 10));
    const Vec3 v = testutil::random_vec3(rng, -5, 5);
    const Vec3 off = testutil::random_vec3(rng, -0.2, 0.2);
    CHECK((to_identity_target(pose.apply(v + off), pose, off) - v).norm() <= 1e-9);
  }
}

TEST_CASE("vertex matrices") {
  const Mat3 m = build_vertex_matrix(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
  CHECK((m.col(0) - Vec3(1, 0, 0)).norm() == 0.0);
  CHECK((m.col(1) - Vec3(0, 1, 0)).norm() == 0.0);
  CHECK((m.col(2) - Vec3(0, 0, 1)).norm() == 0.0);

  // hand evaluation for a scaled, tilted triangle
  const Vec3 a(1, 2, 3), b(3, 2, 3), c(1, 2, 7);
  const Mat3 t = build_vertex_matrix(a, b, c);
  const Vec3 n = Vec3(2, 0, 0).cross(Vec3(0, 0, 4));  // (0, -8, 0)
  CHECK((t.col(2) - n / std::sqrt(8.0)).norm() <= 1e-15);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 10; ++i) {
    const Vec3 v1 = testutil::random_vec3(rng, -1, 1), v2 = testutil::random_vec3(rng, -1, 1),
               v3 = testutil::random_vec3(rng, -1, 1);
    const Mat3 v = build_vertex_matrix(v1, v2, v3);
    CHECK((v * v.inverse() - Mat3::Identity()).norm() <= 1e-9);
    const Mat3 r = testutil::random_rotation(rng);
    const Vec3 t0 = testutil::random_vec3(rng, -3, 3);
    const Mat3 q = build_vertex_matrix(r * v1 + t0, r * v2 + t0, r * v3 + t0) * v.inverse();
    CHECK((q - r).norm() <= 1e-9);
  }
  CHECK_THROWS_AS(build_vertex_matrix(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)), DegenerateError);
}

TEST_CASE("weights") {
  const TransferWeights w = TransferWeights::defaults();
  CHECK(w.smoothness == 1.0);
  CHECK(w.regularization == 0.1);
  CHECK(w.landmark == 1.0);
  const TransferWeights d{};
  CHECK(d.smoothness == 1.0);
  CHECK(d.regularization == 0.1);
  CHECK(d.landmark == 1.0);
  const TransferWeights r = TransferWeights::refinement();
  CHECK(r.smoothness > w.smoothness);
  CHECK(r.regularization > w.regularization);
  CHECK_THROWS_AS((TransferWeights{-1, 0.1, 1}).validate(), ValidationError);
  CHECK_THROWS_AS((TransferWeights{0, 0, 0}).validate(), ValidationError);

  const FaceMesh g = make_grid_mesh(4, 4, 1.0);
  CHECK(TransferProblem::make(g, {}).weights.regularization == 0.1);
}

TEST_CASE("pinning every landmark to itself changes nothing") {
  const FaceMesh head = make_demo_head(20);
  std::vector<LandmarkConstraint> cs;
  for (int id : head.landmark_vertex_ids) cs.push_back({id, head.vertices[id]});
  TransferReport rep;
  const FaceMesh out = transfer_identity(TransferProblem::make(head, cs), &rep);
  CHECK(max_error(out.vertices, head.vertices) <= 1e-8);
  CHECK(rep.free_vertices == head.vertex_count() - static_cast<int>(head.boundary_vertices.size()));
  CHECK(rep.unknowns == rep.free_vertices + head.triangle_count());
  CHECK_FALSE(rep.iterative);

  const FaceMesh none = transfer_identity(TransferProblem::make(head, {}));
  CHECK(max_error(none.vertices, head.vertices) <= 1e-8);
}

TEST_CASE("5x5 grid with one lifted landmark matches the dense oracle") {
  const FaceMesh g = make_grid_mesh(5, 5, 1.0);
  const double delta = 0.4;
  const std::vector<LandmarkConstraint> cs = {{12, g.vertices[12] + Vec3(0, 0, delta)}};
  const TransferProblem p = TransferProblem::make(g, cs, {1.0, 0.1, 1.0});
  const FaceMesh got = transfer_identity(p);
  const Vertices want = oracle::dense_transfer(p);
  MESSAGE("relative error vs dense oracle " << relative_error(got.vertices, want));
  CHECK(relative_error(got.vertices, want) <= 1e-6);
  CHECK(got.vertices[12].z() > 0.0);
  CHECK(got.vertices[12].z() < delta);
  for (int b : g.boundary_vertices) CHECK(got.vertices[b] == g.vertices[b]);
}

TEST_CASE("random meshes up to 200 vertices match the dense oracle") {
  std::mt19937_64 rng(41);
  const std::array<std::pair<int, int>, 4> sizes = {{{6, 6}, {9, 7}, {12, 12}, {14, 14}}};
  for (auto [nx, ny] : sizes) {
    const FaceMesh g = bumpy_grid(nx, ny, rng);
    const auto free = interior(g);
    std::vector<LandmarkConstraint> cs;
    for (int k = 0; k < 4; ++k) {
      const int v = free[(k * 7 + 3) % free.size()];
      if (std::any_of(cs.begin(), cs.end(), [&](const auto& c) { return c.vertex_id == v; })) continue;
      cs.push_back({v, g.vertices[v] + testutil::random_vec3(rng, -0.5, 0.5)});
    }
    const TransferWeights w{uniform(rng, 0.5, 2), uniform(rng, 0.05, 0.5), uniform(rng, 0.5, 2)};
    const TransferProblem p = TransferProblem::make(g, cs, w);
    const FaceMesh got = transfer_identity(p);
    const double rel = relative_error(got.vertices, oracle::dense_transfer(p));
    MESSAGE(g.vertex_count() << " vertices: relative error " << rel);
    CHECK(rel <= 1e-6);
    for (int b : g.boundary_vertices) CHECK(got.vertices[b] == g.vertices[b]);
  }
}

TEST_CASE("scaling all weights leaves the solution alone") {
  std::mt19937_64 rng(2);
  const FaceMesh g = bumpy_grid(8, 8, rng);
  const std::vector<LandmarkConstraint> cs = {{27, g.vertices[27] + Vec3(0.2, -0.1, 0.5)},
                                              {36, g.vertices[36] + Vec3(0, 0.3, 0)}};
  const FaceMesh a = transfer_identity(TransferProblem::make(g, cs, {1.0, 0.1, 1.0}));
  const FaceMesh b = transfer_identity(TransferProblem::make(g, cs, {7.0, 0.7, 7.0}));
  CHECK(max_error(a.vertices, b.vertices) <= 1e-9);
}

TEST_CASE("normal matrix is symmetric positive definite") {
  std::mt19937_64 rng(6);
  const FaceMesh g = bumpy_grid(7, 6, rng);
  const TransferProblem p = TransferProblem::make(g, {{16, g.vertices[16]}});
  const TransferSystem sys = assemble_transfer_system(p);
  const Eigen::MatrixXd n(sys.normal);
  CHECK((n - n.transpose()).norm() <= 1e-12 * n.norm());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(n);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  CHECK(sys.unknown_count == sys.free_vertex_count + g.triangle_count());
  for (int b : g.boundary_vertices) CHECK(sys.unknown_of_vertex[b] == -1);
}

TEST_CASE("failures are reported") {
  const FaceMesh g = make_grid_mesh(5, 5, 1.0);
  // landmark-only energy leaves every other vertex undetermined
  CHECK_THROWS_AS(transfer_identity(TransferProblem::make(g, {{12, g.vertices[12]}}, {0.0, 0.0, 1.0})), SolverError);
  CHECK_THROWS_AS(TransferProblem::make(g, {{0, g.vertices[0]}}), ValidationError);
  CHECK_THROWS_AS(TransferProblem::make(g, {{99, Vec3::Zero()}}), ValidationError);
  CHECK_THROWS_AS(TransferProblem::make(g, {{12, Vec3(NAN, 0, 0)}}), ValidationError);
  TransferProblem p = TransferProblem::make(g, {});
  p.adjacency[0].clear();
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

}  // TEST_SUITE
