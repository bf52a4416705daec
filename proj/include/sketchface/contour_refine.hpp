#pragma once

#include "sketchface/face_model.hpp"
#include "sketchface/identity_transfer.hpp"
#include "sketchface/landmark_deform.hpp"
#include "sketchface/sketch_mapping.hpp"

#include <string>

namespace sketchface {

enum class ContourLabel { exterior_silhouette, occluding_contour, shape_boundary };

std::string label_name(ContourLabel label);

/// Where a contour point comes from: a mesh vertex and its camera-space position.
struct ContourSource {
  int vertex_id = 0;
  Vec3 point = Vec3::Zero();
  double depth = 0.0;
};

struct ContourPolyline {
  ContourLabel label = ContourLabel::occluding_contour;
  Points2 points;
  std::vector<ContourSource> sources;  // one per point
  bool closed = false;                 // closed loops repeat the first point at the end

  int segment_count() const { return static_cast<int>(points.size()) - 1; }
};

/// 2D line drawing of a mesh from one viewpoint. Occluding contours and shape
/// boundaries are listed once each; the parts of them that form the outer
/// outline are repeated as exterior_silhouette entries.
struct ContourMap {
  RigidPose view;
  Camera camera;
  std::vector<ContourPolyline> polylines;
};

/// Occluding-contour chains shorter than this many edges are dropped as clutter.
inline constexpr int kMinContourEdges = 5;

/// Pose that rotates the mesh about its bounding-box center by yaw/pitch and
/// frames it in the middle of the image.
RigidPose contour_view(const FaceMesh& mesh, const Camera& cam, double yaw, double pitch);

/// Throws ProjectionError if a vertex ends up at non-positive depth.
ContourMap render_contours(const FaceMesh& mesh, const RigidPose& view, const Camera& cam);

/// Erase-and-redraw edit on a contour map.
struct RefineEdit {
  Points2 erased_region;  // polygon, pixels
  Stroke replacement_stroke;
};

struct RefineResult {
  std::vector<LandmarkConstraint> constraints;
  std::vector<std::string> warnings;
  Points2 erased;  // the erased sub-polyline
  Points2 fitted;  // replacement fitted to it
};

/// Turns a redrawn contour segment into identity-space landmark constraints
/// on `mesh` (the mesh the map was rendered from). An edit that touches no
/// contour yields no constraints and a warning.
RefineResult refine_constraints(const ContourMap& map, const RefineEdit& edit, const FaceMesh& mesh,
                                const DeformConfig& cfg = {});

/// Even-odd point in polygon test.
bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon);

}  // namespace sketchface
