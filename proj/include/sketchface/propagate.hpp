#pragma once

#include "sketchface/bundle.hpp"
#include "sketchface/image.hpp"
#include "sketchface/isomap.hpp"
#include "sketchface/mls_warp.hpp"

#include <filesystem>
#include <functional>

namespace sketchface {

/// 3x3 per-channel median applied only to pixels within `band_width`
/// (Chebyshev distance) of the mask boundary. Other pixels are copied.
FrameImage blend_boundary(const FrameImage& img, const Mask& mask, int band_width);

struct PropagateOptions {
  int grid_step = 8;             // MLS grid spacing, pixels; <= 1 is exact per pixel
  bool warp_background = true;
  double blur_sigma = 1.0;       // seam blur in the refined isomap, texels
  int band_width = 2;            // boundary median band, pixels
  int threads = 0;               // 0 = hardware concurrency
  int max_face_controls = 64;    // face-anchored MLS pairs added to the bundle tracks
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// thrown by any call is rethrown after all workers stop.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Read-only data shared by every frame: the original frames, their isomaps
/// (extracted with the original identity) and the mean isomap.
class PropagationContext {
 public:
  explicit PropagationContext(const SessionBundle& bundle, int threads = 0);

  const SessionBundle& bundle() const { return bundle_; }
  const FrameImage& frame(int t) const { return frames_.at(t); }
  const Isomap& isomap(int t) const { return isomaps_.at(t); }
  const Isomap& mean() const { return mean_; }

 private:
  SessionBundle bundle_;
  std::vector<FrameImage> frames_;
  std::vector<Isomap> isomaps_;
  Isomap mean_;
};

/// Bundle tracks for frame t plus pairs that follow the face: projections of
/// boundary and landmark vertices under the original and the modified pose.
std::vector<ControlPair> frame_controls(const SessionBundle& bundle, int t, std::span<const Vec3> original_posed,
                                        std::span<const Vec3> modified_posed, int max_face_controls);

struct FrameResult {
  FrameImage image;
  Mask mask;
  int fallback_samples = 0;
  int unfilled_texels = 0;
};

/// Full pipeline for one frame with the modified identity.
FrameResult propagate_frame(const PropagationContext& ctx, const FaceMesh& modified_identity, int t,
                            const PropagateOptions& opt = {});

using ProgressFn = std::function<void(int done, int total)>;

/// All frames in order. Frames are independent, so the worker count does not
/// affect the output.
std::vector<FrameImage> propagate(const PropagationContext& ctx, const FaceMesh& modified_identity,
                                  const PropagateOptions& opt = {}, const ProgressFn& progress = {});
std::vector<FrameImage> propagate(const SessionBundle& bundle, const FaceMesh& modified_identity,
                                  const PropagateOptions& opt = {}, const ProgressFn& progress = {});

/// Writes `out_dir`/%06d.png.
void write_frames(const std::filesystem::path& out_dir, std::span<const FrameImage> frames);

}  // namespace sketchface
