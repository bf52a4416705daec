#include "sketchface/mls_warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace sketchface {

namespace {

bool collinear(std::span<const Vec2> pts) {
  Vec2 mean = Vec2::Zero();
  for (const Vec2& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const Vec2& p : pts) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double hi = es.eigenvalues()[1];
  return !(hi > 0.0) || es.eigenvalues()[0] <= 1e-9 * hi;
}

}  // namespace

void validate_controls(std::span<const ControlPair> ctrl) {
  if (ctrl.size() < 3) throw ValidationError("mls warp needs at least 3 control pairs, got " + std::to_string(ctrl.size()));
  std::vector<Vec2> src, dst;
  for (const auto& c : ctrl) {
    if (!c.src.allFinite() || !c.dst.allFinite()) throw ValidationError("non-finite control point");
    src.push_back(c.src);
    dst.push_back(c.dst);
  }
  if (collinear(src) || collinear(dst)) throw ValidationError("mls control points are collinear");
}

Vec2 affine_mls(std::span<const Vec2> from, std::span<const Vec2> to, const Vec2& v) {
  double wsum = 0.0;
  Vec2 pstar = Vec2::Zero();
  Vec2 qstar = Vec2::Zero();
  std::vector<double> w(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double d2 = (from[i] - v).squaredNorm();
    if (d2 < 1e-20) return to[i];
    w[i] = 1.0 / d2;
    wsum += w[i];
    pstar += w[i] * from[i];
    qstar += w[i] * to[i];
  }
  pstar /= wsum;
  qstar /= wsum;
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d b = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    const Vec2 ph = from[i] - pstar;
    const Vec2 qh = to[i] - qstar;
    a += w[i] * ph * ph.transpose();
    b += w[i] * ph * (qh - ph).transpose();
  }
  // f(v) = v + (v - p*)^T A^-1 B + (q* - p*), row-vector convention.
  const Eigen::RowVector2d delta = (v - pstar).transpose() * a.inverse() * b;
  return v + delta.transpose() + (qstar - pstar);
}

WarpField::WarpField(int width, int height, std::span<const ControlPair> ctrl, int step, double tolerance)
    : width_(width), height_(height), step_(std::max(1, step)) {
  validate_controls(ctrl);
  for (const auto& c : ctrl) {
    from_.push_back(c.dst);
    to_.push_back(c.src);
  }
  nx_ = (width - 1 + step_ - 1) / step_ + 1;
  ny_ = (height - 1 + step_ - 1) / step_ + 1;
  nodes_.resize(static_cast<std::size_t>(nx_) * ny_);
  for (int j = 0; j < ny_; ++j) {
    for (int i = 0; i < nx_; ++i) nodes_[static_cast<std::size_t>(j) * nx_ + i] = affine_mls(from_, to_, node_position(i, j));
  }

  // 1/d^2 weights make the map kinked at each control, and neighboring
  // controls with different displacements bend it faster than one cell.
  exact_.assign(nodes_.size(), 0);
  for (int j = 0; j + 1 < ny_; ++j) {
    for (int i = 0; i + 1 < nx_; ++i) {
      const Vec2 lo = node_position(i, j);
      const Vec2 hi = node_position(i + 1, j + 1);
      bool exact = false;
      for (const Vec2& p : from_) {
        if (p.x() >= lo.x() - 1.0 && p.x() <= hi.x() + 1.0 && p.y() >= lo.y() - 1.0 && p.y() <= hi.y() + 1.0) {
          exact = true;
          break;
        }
      }
      const Vec2 mid = 0.5 * (lo + hi);
      const Vec2 probes[5] = {mid, Vec2(mid.x(), lo.y()), Vec2(mid.x(), hi.y()), Vec2(lo.x(), mid.y()),
                              Vec2(hi.x(), mid.y())};
      for (int k = 0; k < 5 && !exact; ++k) {
        exact = (interpolate(i, j, probes[k].x(), probes[k].y()) - affine_mls(from_, to_, probes[k])).norm() > tolerance;
      }
      exact_[static_cast<std::size_t>(j) * nx_ + i] = exact ? 1 : 0;
    }
  }
}

Vec2 WarpField::node_position(int i, int j) const {
  return Vec2(std::min(i * step_, width_ - 1), std::min(j * step_, height_ - 1));
}

int WarpField::exact_cell_count() const { return static_cast<int>(std::count(exact_.begin(), exact_.end(), 1)); }

Vec2 WarpField::interpolate(int i0, int j0, double x, double y) const {
  const int i1 = std::min(i0 + 1, nx_ - 1);
  const int j1 = std::min(j0 + 1, ny_ - 1);
  const Vec2 a = node_position(i0, j0);
  const Vec2 b = node_position(i1, j1);
  const double fx = b.x() > a.x() ? (x - a.x()) / (b.x() - a.x()) : 0.0;
  const double fy = b.y() > a.y() ? (y - a.y()) / (b.y() - a.y()) : 0.0;
  const Vec2 top = (1 - fx) * node(i0, j0) + fx * node(i1, j0);
  const Vec2 bottom = (1 - fx) * node(i0, j1) + fx * node(i1, j1);
  return (1 - fy) * top + fy * bottom;
}

Vec2 WarpField::at(double x, double y) const {
  const int i0 = std::clamp(static_cast<int>(std::floor(x / step_)), 0, std::max(0, nx_ - 2));
  const int j0 = std::clamp(static_cast<int>(std::floor(y / step_)), 0, std::max(0, ny_ - 2));
  if (exact_cell(i0, j0)) return affine_mls(from_, to_, Vec2(x, y));
  return interpolate(i0, j0, x, y);
}

FrameImage mls_warp(const FrameImage& img, std::span<const ControlPair> ctrl, int grid_step) {
  FrameImage out(img.width, img.height);
  if (grid_step <= 1) {
    validate_controls(ctrl);
    std::vector<Vec2> from, to;
    for (const auto& c : ctrl) {
      from.push_back(c.dst);
      to.push_back(c.src);
    }
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        const Vec2 s = affine_mls(from, to, Vec2(x, y));
        const Vec3 c = img.sample(s.x(), s.y());
        for (int k = 0; k < 3; ++k) out.px(x, y)[k] = to_byte(c[k]);
      }
    }
    return out;
  }
  const WarpField field(img.width, img.height, ctrl, grid_step);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const Vec2 s = field.at(x, y);
      const Vec3 c = img.sample(s.x(), s.y());
      for (int k = 0; k < 3; ++k) out.px(x, y)[k] = to_byte(c[k]);
    }
  }
  return out;
}

}  // namespace sketchface
