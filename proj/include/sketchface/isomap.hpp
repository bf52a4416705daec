#pragma once

#include "sketchface/face_model.hpp"
#include "sketchface/image.hpp"
#include "sketchface/mesh.hpp"

#include <functional>
#include <span>

namespace sketchface {

/// UV-space face texture with a validity mask. Texel (i, j) is centered at
/// uv ((i + 0.5) / width, (j + 0.5) / height).
struct Isomap {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;        // RGB, 0..255
  std::vector<std::uint8_t> valid;  // 1 = valid

  Isomap() = default;
  /// Throws ValidationError unless both sides are powers of two.
  Isomap(int w, int h);

  std::size_t texel(int i, int j) const { return static_cast<std::size_t>(j) * width + i; }
  bool is_valid(int i, int j) const { return valid[texel(i, j)] != 0; }
  Vec3 color(int i, int j) const {
    const std::size_t k = 3 * texel(i, j);
    return {pixels[k], pixels[k + 1], pixels[k + 2]};
  }
  void set(int i, int j, const Vec3& c);
  std::size_t valid_count() const;
};

/// 256 texels per side below 720-line frames, 512 at or above.
int isomap_size_for_height(int frame_height);

/// Texture filled from a function of uv, all texels valid.
Isomap isomap_from_function(int size, const std::function<Vec3(double u, double v)>& color);

/// Samples the frame for every texel covered by a triangle in UV space.
/// Back-facing, depth-occluded (half-texel depth bias) and off-frame texels
/// stay invalid. Throws ValidationError when the mesh has no UVs.
Isomap extract_isomap(const FrameImage& frame, std::span<const Vec3> posed_mesh, const FaceMesh& mesh,
                      const Camera& cam, int size);

/// Per-texel mean over the frames where each texel is valid. The sum is
/// accumulated in fixed point so the result does not depend on input order.
Isomap mean_isomap(std::span<const Isomap> maps);

struct RefinedIsomap {
  Isomap map;
  std::vector<int> unfilled;  // texel indices invalid in both inputs
};

/// Fills holes of `m` from `mean`, then blurs (Gaussian, std blur_sigma) only
/// the texels within 2 * blur_sigma of a seam between filled and original texels.
RefinedIsomap refine_isomap(const Isomap& m, const Isomap& mean, double blur_sigma);

struct RenderedFace {
  FrameImage image;
  Mask mask;
  int fallback_samples = 0;  // pixels whose texture lookup hit only invalid texels
};

/// Z-buffered, back-face culled rasterization of the posed mesh with bilinear
/// texture lookup, composited over `frame`.
RenderedFace render_face(const FrameImage& frame, std::span<const Vec3> posed_modified_mesh, const FaceMesh& mesh,
                         const Camera& cam, const Isomap& tex);

}  // namespace sketchface
