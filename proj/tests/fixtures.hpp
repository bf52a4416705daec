#pragma once

#include "helpers.hpp"
#include "sketchface/demo_head.hpp"
#include "sketchface/isomap.hpp"

#include <cmath>
#include <limits>

namespace testutil {

// Small demo bundle shared by the tests of one process; written on first use.
inline const sketchface::SessionBundle& small_bundle() {
  static const sketchface::SessionBundle b = [] {
    sketchface::DemoOptions opt;
    opt.frames = 10;
    opt.width = 192;
    opt.height = 144;
    opt.focal = 420.0;
    opt.grid = 24;
    return sketchface::write_demo_bundle(scratch_dir("small_bundle"), opt);
  }();
  return b;
}

// PSNR between two isomaps over texels valid in `a` (and in `b`).
inline double isomap_psnr(const sketchface::Isomap& a, const sketchface::Isomap& b) {
  double sse = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < a.valid.size(); ++t) {
    if (!a.valid[t] || !b.valid[t]) continue;
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(a.pixels[3 * t + c]) - b.pixels[3 * t + c];
      sse += d * d;
    }
    n += 3;
  }
  if (n == 0 || sse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / (sse / static_cast<double>(n)));
}

}  // namespace testutil
