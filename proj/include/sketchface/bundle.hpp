#pragma once

#include "sketchface/face_model.hpp"
#include "sketchface/image.hpp"
#include "sketchface/mls_warp.hpp"
#include "sketchface/sketch_mapping.hpp"

#include <filesystem>
#include <optional>

namespace sketchface {

/// Loaded session bundle. Frames stay on disk and are read on demand.
///
/// Directory layout:
///   meta.json     camera, image size, fps, frame count, identity coefficients
///   params.json   per-frame pose, blendshape weights, landmark displacements
///   tracks.json   background control pairs per frame
///   groups.json   landmark vertex ids, landmark groups, relation pairs
///   mesh.obj      topology and UVs
///   core.fctn     core tensor
///   frames/%06d.png
struct SessionBundle {
  std::filesystem::path root;
  Camera camera;
  double fps = 30.0;
  int frame_count = 0;
  int isomap_size = 256;
  IdentityCoeffs identity;
  std::vector<FrameParams> params;
  FaceMesh mesh;  // topology, UVs and landmark ids; positions are the identity mesh
  CoreTensor core;
  Blendshapes blendshapes;
  std::vector<GroupDefinition> groups;
  std::vector<RelationPair> relation_pairs;
  double boost_factor = 2.0;
  std::optional<double> sigma;  // pixels; defaults to 5% of the face diagonal
  std::vector<std::vector<ControlPair>> tracks;

  std::filesystem::path frame_path(int t) const;
  FrameImage load_frame(int t) const;

  /// Identity mesh I = b0 with the bundle topology.
  const FaceMesh& identity_mesh() const { return mesh; }
  const FrameParams& frame(int t) const;

  /// Expression-bearing shape V_t = I + E_t and its offset E_t.
  ComposedShape shape(int t) const;
  /// Posed vertices R_t (I' + E_t) + t_t for an arbitrary identity I'.
  Vertices posed(int t, std::span<const Vec3> identity_vertices) const;
  /// 2D landmarks of frame t: projection of the posed landmark vertices plus displacements.
  Points2 landmarks(int t) const;
};

/// Loads and validates a bundle; errors name the offending file and field.
SessionBundle load_bundle(const std::filesystem::path& root);

/// Writes all metadata files (not frames) of `bundle` under `root`.
void save_bundle_metadata(const std::filesystem::path& root, const SessionBundle& bundle);

std::string frame_file_name(int t);

}  // namespace sketchface
