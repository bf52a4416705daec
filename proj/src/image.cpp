#include "sketchface/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace sketchface {

FrameImage::FrameImage(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) : width(w), height(h) {
  rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < rgb.size(); i += 3) {
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }
}

Vec3 FrameImage::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  Vec3 out;
  for (int c = 0; c < 3; ++c) {
    const double top = (1 - fx) * px(x0, y0)[c] + fx * px(x1, y0)[c];
    const double bottom = (1 - fx) * px(x0, y1)[c] + fx * px(x1, y1)[c];
    out[c] = (1 - fy) * top + fy * bottom;
  }
  return out;
}

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(on.begin(), on.end(), 1)); }

namespace {

cv::Mat to_bgr(const FrameImage& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.px(x, y);
      row[3 * x] = p[2];
      row[3 * x + 1] = p[1];
      row[3 * x + 2] = p[0];
    }
  }
  return m;
}

}  // namespace

FrameImage read_png(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw IoError("cannot read image " + path.string());
  FrameImage img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      std::uint8_t* p = img.px(x, y);
      p[0] = row[3 * x + 2];
      p[1] = row[3 * x + 1];
      p[2] = row[3 * x];
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const FrameImage& img) {
  if (!cv::imwrite(path.string(), to_bgr(img))) throw IoError("cannot write image " + path.string());
}

std::vector<std::uint8_t> encode_png(const FrameImage& img) {
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", to_bgr(img), out)) throw IoError("png encoding failed");
  return out;
}

double psnr(const FrameImage& a, const FrameImage& b, const Mask* mask) {
  if (a.width != b.width || a.height != b.height) throw DimensionError("psnr of differently sized images");
  double sse = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask && !mask->at(x, y)) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = static_cast<double>(a.px(x, y)[c]) - b.px(x, y)[c];
        sse += d * d;
      }
      n += 3;
    }
  }
  if (n == 0 || sse == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = sse / static_cast<double>(n);
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

FrameImage downscale(const FrameImage& img, int max_side) {
  const int longest = std::max(img.width, img.height);
  if (longest <= max_side) return img;
  const double s = static_cast<double>(longest) / max_side;
  const int w = std::max(1, static_cast<int>(std::round(img.width / s)));
  const int h = std::max(1, static_cast<int>(std::round(img.height / s)));
  FrameImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy0 = static_cast<int>(std::floor(y * s));
    const int sy1 = std::max(sy0 + 1, std::min(img.height, static_cast<int>(std::floor((y + 1) * s))));
    for (int x = 0; x < w; ++x) {
      const int sx0 = static_cast<int>(std::floor(x * s));
      const int sx1 = std::max(sx0 + 1, std::min(img.width, static_cast<int>(std::floor((x + 1) * s))));
      double acc[3] = {0, 0, 0};
      int count = 0;
      for (int yy = sy0; yy < sy1; ++yy) {
        for (int xx = sx0; xx < sx1; ++xx) {
          for (int c = 0; c < 3; ++c) acc[c] += img.px(xx, yy)[c];
          ++count;
        }
      }
      for (int c = 0; c < 3; ++c) out.px(x, y)[c] = to_byte(acc[c] / count);
    }
  }
  return out;
}

}  // namespace sketchface
