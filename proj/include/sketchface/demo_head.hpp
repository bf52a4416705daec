#pragma once

#include "sketchface/bundle.hpp"
#include "sketchface/isomap.hpp"
#include "sketchface/mesh.hpp"
#include "sketchface/sketch_mapping.hpp"

#include <cstdint>
#include <filesystem>

namespace sketchface {

/// Front half of an ellipsoid with nose, brow, eye-socket, lip and chin relief,
/// `grid` x `grid` vertices, denser around the eyes and mouth. Model units,
/// centered near the origin, facing -z. Carries 68 landmarks and per-vertex UVs.
FaceMesh make_demo_head(int grid = 45);

/// Landmark groups of the 68-point layout (jaw, brows, nose, eyelids, lips).
std::vector<GroupDefinition> demo_groups();

/// Flat nx x ny grid in the z = 0 plane, facing -z, UVs spanning [0,1]^2.
FaceMesh make_grid_mesh(int nx, int ny, double spacing);

/// Icosahedron subdivided `subdivisions` times, centered at the origin, outward normals.
FaceMesh make_icosphere(int subdivisions, double radius);

/// Synthetic skin texture for the demo head. Outer-lip landmarks carry small
/// blue marker dots so that mouth motion can be measured in rendered frames.
Isomap demo_texture(const FaceMesh& head, int size);

FrameImage demo_background(int width, int height);

struct DemoOptions {
  int frames = 30;
  int width = 640;
  int height = 360;
  double focal = 900.0;
  double distance = 50.0;
  int grid = 45;
  int n_identity = 6;
  int n_expression = 8;
  std::uint64_t seed = 7;
};

/// Writes a complete session bundle (metadata, mesh, core tensor and rendered
/// frames) under `root` and returns it as loaded from disk.
SessionBundle write_demo_bundle(const std::filesystem::path& root, const DemoOptions& opt = {});

}  // namespace sketchface
