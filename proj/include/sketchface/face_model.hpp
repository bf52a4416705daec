#pragma once

#include "sketchface/mesh.hpp"
#include "sketchface/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>

namespace sketchface {

/// Rank-3 model tensor of dims (3*n_vertices) x n_identity x n_expression.
///
/// Storage order is vertex-major, then identity, then expression:
/// entry (row, i, j) lives at `row * n_identity * n_expression + i * n_expression + j`.
class CoreTensor {
 public:
  CoreTensor() = default;
  CoreTensor(int n_vertices, int n_identity, int n_expression, std::uint64_t seed, std::vector<double> data);

  int n_vertices() const { return n_vertices_; }
  int n_identity() const { return n_identity_; }
  int n_expression() const { return n_expression_; }
  int rows() const { return 3 * n_vertices_; }
  std::uint64_t seed() const { return seed_; }

  double at(int row, int identity, int expression) const {
    return data_[(static_cast<std::size_t>(row) * n_identity_ + identity) * n_expression_ + expression];
  }
  std::span<const double> data() const { return data_; }

 private:
  int n_vertices_ = 0;
  int n_identity_ = 0;
  int n_expression_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> data_;
};

struct IdentityCoeffs {
  Eigen::VectorXd u;
};

/// Blendshape weights (one per non-neutral shape).
struct ExpressionCoeffs {
  Eigen::VectorXd e;
};

/// N_B shapes with shared topology; shapes[0] is the neutral face.
struct Blendshapes {
  std::vector<Vertices> shapes;

  int count() const { return static_cast<int>(shapes.size()); }
  const Vertices& neutral() const { return shapes.front(); }
};

class RigidPose {
 public:
  RigidPose() = default;
  /// Throws ValidationError unless `rotation` is orthonormal with det +1 (1e-9).
  RigidPose(const Mat3& rotation, const Vec3& translation);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation_.transpose() * (p - translation_); }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Rotation of `yaw` radians about +y followed by `pitch` about +x (R = Ry * Rx).
Mat3 yaw_pitch_rotation(double yaw, double pitch);

/// Pinhole camera looking down +z: pixel = focal * (x/z, y/z) + principal_point.
class Camera {
 public:
  Camera() = default;
  /// Throws ValidationError unless focal > 0 and the principal point is inside the image.
  Camera(double focal, const Vec2& principal_point, int width, int height);

  double focal() const { return focal_; }
  const Vec2& principal_point() const { return principal_point_; }
  int width() const { return width_; }
  int height() const { return height_; }

  /// Throws ProjectionError for non-positive depth.
  Vec2 project(const Vec3& p) const;
  /// Back-projection of a pixel at camera depth `z`.
  Vec3 unproject(const Vec2& pixel, double z) const;

 private:
  double focal_ = 1.0;
  Vec2 principal_point_ = Vec2::Zero();
  int width_ = 1;
  int height_ = 1;
};

struct FrameParams {
  int frame_index = 0;
  ExpressionCoeffs expression;
  RigidPose pose;
  Points2 displacements;  // one per landmark
};

/// Deterministic stand-in for a scanned face database. Slice (., 0, 0) is the
/// flattened `base_mesh`; slices (., 0, j>0) add a smooth expression field to
/// it; slices (., i>0, .) are smooth identity displacement fields. Every field
/// is band-limited with amplitude at most 2% of the mesh bounding-box diagonal.
CoreTensor synthesize_core(std::uint64_t seed, int n_vertices, int n_identity, int n_expression,
                           const FaceMesh& base_mesh);

/// Full contraction C x2 u^T x3 e^T.
Vertices contract(const CoreTensor& core, const IdentityCoeffs& u, const Eigen::VectorXd& e);

/// B = C x2 u^T: one shape per expression slice.
Blendshapes build_blendshapes(const CoreTensor& core, const IdentityCoeffs& u);

struct ComposedShape {
  Vertices shape;
  Vertices expression_offset;
};

/// V = b0 + sum_n (b_n - b0) * e_n, returned together with the offset E.
ComposedShape compose_shape(const Blendshapes& b, const ExpressionCoeffs& e);

Vertices transform_mesh(std::span<const Vec3> shape, const RigidPose& pose);

/// l = project(posed_point) + displacement.
Vec2 project_landmark(const Vec3& posed_point, const Camera& cam, const Vec2& displacement);

/// Core tensor file: "FCTN", u32 {n_vertices, n_identity, n_expression, 3},
/// u64 seed, then f64 entries in storage order, all little-endian.
void write_core(const std::filesystem::path& path, const CoreTensor& core);
CoreTensor read_core(const std::filesystem::path& path);

}  // namespace sketchface
