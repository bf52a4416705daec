#include "sketchface/propagate.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace sketchface {

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int workers = threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::clamp(workers, 1, n);
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

FrameImage blend_boundary(const FrameImage& img, const Mask& mask, int band_width) {
  if (mask.width != img.width || mask.height != img.height) throw DimensionError("mask does not match image");
  const int w = img.width;
  const int h = img.height;
  FrameImage out = img;
  if (band_width < 0) return out;

  // Boundary pixels have a 4-neighbor on the other side of the mask.
  std::vector<std::uint8_t> band(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool m = mask.at(x, y);
      const bool edge = (x > 0 && mask.at(x - 1, y) != m) || (x + 1 < w && mask.at(x + 1, y) != m) ||
                        (y > 0 && mask.at(x, y - 1) != m) || (y + 1 < h && mask.at(x, y + 1) != m);
      if (!edge) continue;
      for (int dy = -band_width; dy <= band_width; ++dy) {
        for (int dx = -band_width; dx <= band_width; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx >= 0 && yy >= 0 && xx < w && yy < h) band[static_cast<std::size_t>(yy) * w + xx] = 1;
        }
      }
    }
  }

  std::uint8_t win[9];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!band[static_cast<std::size_t>(y) * w + x]) continue;
      for (int c = 0; c < 3; ++c) {
        int k = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = std::clamp(x + dx, 0, w - 1);
            const int yy = std::clamp(y + dy, 0, h - 1);
            win[k++] = img.px(xx, yy)[c];
          }
        }
        std::nth_element(win, win + 4, win + 9);
        out.px(x, y)[c] = win[4];
      }
    }
  }
  return out;
}

PropagationContext::PropagationContext(const SessionBundle& bundle, int threads) : bundle_(bundle) {
  const int n = bundle_.frame_count;
  frames_.resize(n);
  isomaps_.resize(n);
  parallel_for(n, threads, [&](int t) {
    frames_[t] = bundle_.load_frame(t);
    const Vertices posed = bundle_.posed(t, bundle_.mesh.vertices);
    isomaps_[t] = extract_isomap(frames_[t], posed, bundle_.mesh, bundle_.camera, bundle_.isomap_size);
  });
  mean_ = mean_isomap(isomaps_);
}

std::vector<ControlPair> frame_controls(const SessionBundle& bundle, int t, std::span<const Vec3> original_posed,
                                        std::span<const Vec3> modified_posed, int max_face_controls) {
  std::vector<ControlPair> pairs = bundle.tracks.at(t);
  std::vector<int> anchors = bundle.mesh.boundary_vertices;
  anchors.insert(anchors.end(), bundle.mesh.landmark_vertex_ids.begin(), bundle.mesh.landmark_vertex_ids.end());
  if (max_face_controls <= 0 || anchors.empty()) return pairs;
  const Camera& cam = bundle.camera;
  const std::size_t stride = std::max<std::size_t>(1, (anchors.size() + max_face_controls - 1) / max_face_controls);
  for (std::size_t k = 0; k < anchors.size(); k += stride) {
    const int v = anchors[k];
    if (!(original_posed[v].z() > 0.0) || !(modified_posed[v].z() > 0.0)) continue;
    const Vec2 src = cam.project(original_posed[v]);
    const Vec2 dst = cam.project(modified_posed[v]);
    auto inside = [&](const Vec2& p) {
      return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= cam.width() - 1.0 && p.y() <= cam.height() - 1.0;
    };
    if (inside(src) && inside(dst)) pairs.push_back({src, dst});
  }
  return pairs;
}

FrameResult propagate_frame(const PropagationContext& ctx, const FaceMesh& modified_identity, int t,
                            const PropagateOptions& opt) {
  const SessionBundle& b = ctx.bundle();
  if (modified_identity.vertex_count() != b.mesh.vertex_count()) {
    throw DimensionError("modified identity has " + std::to_string(modified_identity.vertex_count()) +
                         " vertices, bundle mesh has " + std::to_string(b.mesh.vertex_count()));
  }
  const Vertices original = b.posed(t, b.mesh.vertices);
  const Vertices modified = b.posed(t, modified_identity.vertices);
  const RefinedIsomap tex = refine_isomap(ctx.isomap(t), ctx.mean(), opt.blur_sigma);

  const FrameImage& frame = ctx.frame(t);
  FrameImage background = opt.warp_background
                              ? mls_warp(frame, frame_controls(b, t, original, modified, opt.max_face_controls),
                                         opt.grid_step)
                              : frame;
  RenderedFace face = render_face(background, modified, b.mesh, b.camera, tex.map);
  FrameResult r;
  r.image = blend_boundary(face.image, face.mask, opt.band_width);
  r.mask = std::move(face.mask);
  r.fallback_samples = face.fallback_samples;
  r.unfilled_texels = static_cast<int>(tex.unfilled.size());
  return r;
}

std::vector<FrameImage> propagate(const PropagationContext& ctx, const FaceMesh& modified_identity,
                                  const PropagateOptions& opt, const ProgressFn& progress) {
  const int n = ctx.bundle().frame_count;
  std::vector<FrameImage> out(n);
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  parallel_for(n, opt.threads, [&](int t) {
    out[t] = propagate_frame(ctx, modified_identity, t, opt).image;
    const int d = ++done;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(d, n);
    }
  });
  return out;
}

std::vector<FrameImage> propagate(const SessionBundle& bundle, const FaceMesh& modified_identity,
                                  const PropagateOptions& opt, const ProgressFn& progress) {
  const PropagationContext ctx(bundle, opt.threads);
  return propagate(ctx, modified_identity, opt, progress);
}

void write_frames(const std::filesystem::path& out_dir, std::span<const FrameImage> frames) {
  std::filesystem::create_directories(out_dir);
  for (std::size_t t = 0; t < frames.size(); ++t) write_png(out_dir / frame_file_name(static_cast<int>(t)), frames[t]);
}

}  // namespace sketchface
