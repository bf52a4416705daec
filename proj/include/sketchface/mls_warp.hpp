#pragma once

#include "sketchface/image.hpp"
#include "sketchface/types.hpp"

#include <cstdint>
#include <span>

namespace sketchface {

/// One background correspondence: where a point is in the source frame and
/// where it must land in the output.
struct ControlPair {
  Vec2 src;
  Vec2 dst;
};

/// Throws ValidationError for fewer than three pairs or collinear points.
void validate_controls(std::span<const ControlPair> ctrl);

/// Affine moving-least-squares map (weights 1/d^2) taking `from[i]` to `to[i]`,
/// evaluated at `v`. Written as v + displacement so that from == to gives v exactly.
Vec2 affine_mls(std::span<const Vec2> from, std::span<const Vec2> to, const Vec2& v);

/// Backward map of the warp (output pixel -> source position), evaluated on a
/// grid of spacing `step` and bilinearly interpolated in between. Cells that
/// hold a control point, or where interpolation misses the closed form by more
/// than `tolerance` pixels at the cell center or edge midpoints, are evaluated
/// per pixel instead.
class WarpField {
 public:
  WarpField(int width, int height, std::span<const ControlPair> ctrl, int step, double tolerance = 0.03);

  int step() const { return step_; }
  int nodes_x() const { return nx_; }
  int nodes_y() const { return ny_; }
  /// Node (i, j) sits at pixel (min(i*step, width-1), min(j*step, height-1)).
  Vec2 node_position(int i, int j) const;
  const Vec2& node(int i, int j) const { return nodes_[static_cast<std::size_t>(j) * nx_ + i]; }
  Vec2 at(double x, double y) const;
  bool exact_cell(int i, int j) const { return exact_[static_cast<std::size_t>(j) * nx_ + i] != 0; }
  int exact_cell_count() const;

 private:
  Vec2 interpolate(int i0, int j0, double x, double y) const;

  int width_;
  int height_;
  int step_;
  int nx_;
  int ny_;
  std::vector<Vec2> nodes_;
  std::vector<std::uint8_t> exact_;  // per cell, indexed like nodes
  std::vector<Vec2> from_;
  std::vector<Vec2> to_;
};

/// Warps `img` so that every control src moves to its dst. grid_step <= 1
/// evaluates the closed form at every pixel.
FrameImage mls_warp(const FrameImage& img, std::span<const ControlPair> ctrl, int grid_step = 8);

}  // namespace sketchface
