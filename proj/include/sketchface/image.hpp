#pragma once

#include "sketchface/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>

namespace sketchface {

/// 8-bit RGB frame, row-major, no padding.
struct FrameImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  FrameImage() = default;
  FrameImage(int w, int h, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

  std::size_t index(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  std::uint8_t* px(int x, int y) { return rgb.data() + index(x, y); }
  const std::uint8_t* px(int x, int y) const { return rgb.data() + index(x, y); }

  /// Bilinear sample with clamp-to-edge addressing.
  Vec3 sample(double x, double y) const;
};

/// Single-channel coverage mask matching a frame.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> on;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), on(static_cast<std::size_t>(w) * h, 0) {}
  bool at(int x, int y) const { return on[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { on[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(v <= 0.0 ? 0 : v >= 255.0 ? 255 : static_cast<int>(v + 0.5));
}

FrameImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const FrameImage& img);
std::vector<std::uint8_t> encode_png(const FrameImage& img);

/// PSNR in dB over pixels where `mask` is set (all pixels when mask is null).
/// Returns +inf for identical inputs.
double psnr(const FrameImage& a, const FrameImage& b, const Mask* mask = nullptr);

/// Box-filtered downscale so that the long side is at most `max_side`.
FrameImage downscale(const FrameImage& img, int max_side);

}  // namespace sketchface
