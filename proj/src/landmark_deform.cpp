#include "sketchface/landmark_deform.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace sketchface {

void validate_config(const DeformConfig& cfg) {
  if (!(cfg.step_size > 0.0)) throw ValidationError("deform step_size must be positive");
  if (cfg.max_iters < 1) throw ValidationError("deform max_iters must be >= 1");
  if (!(cfg.grad_tol > 0.0)) throw ValidationError("deform grad_tol must be positive");
  if (!(cfg.length_scale > 0.0)) throw ValidationError("deform length_scale must be positive");
}

namespace {

void check_sizes(std::span<const Vec2> original, std::span<const Vec2> stroke, std::span<const Vec2> candidate) {
  if (original.size() != stroke.size() || original.size() != candidate.size()) {
    throw DimensionError("fitting energy inputs differ in length");
  }
}

}  // namespace

// Bending term per segment: 1 - cos(angle(d) - angle(o)) = 1 - d.o / (|d||o|).
// Segments of zero length carry no direction and contribute nothing.
double fitting_energy(std::span<const Vec2> original, std::span<const Vec2> stroke, std::span<const Vec2> candidate) {
  check_sizes(original, stroke, candidate);
  double e = 0.0;
  for (std::size_t i = 0; i < candidate.size(); ++i) e += (candidate[i] - stroke[i]).squaredNorm();
  for (std::size_t i = 0; i + 1 < candidate.size(); ++i) {
    const Vec2 d = candidate[i + 1] - candidate[i];
    const Vec2 o = original[i + 1] - original[i];
    const double nd = d.norm();
    const double no = o.norm();
    if (nd == 0.0 || no == 0.0) continue;
    e += 1.0 - d.dot(o) / (nd * no);
  }
  return e;
}

Points2 fitting_gradient(std::span<const Vec2> original, std::span<const Vec2> stroke,
                         std::span<const Vec2> candidate) {
  check_sizes(original, stroke, candidate);
  Points2 g(candidate.size());
  for (std::size_t i = 0; i < candidate.size(); ++i) g[i] = 2.0 * (candidate[i] - stroke[i]);
  for (std::size_t i = 0; i + 1 < candidate.size(); ++i) {
    const Vec2 d = candidate[i + 1] - candidate[i];
    const Vec2 o = original[i + 1] - original[i];
    const double nd = d.norm();
    const double no = o.norm();
    if (nd == 0.0 || no == 0.0) continue;
    const Vec2 u = d / nd;
    const Vec2 ou = o / no;
    // d/dd of -(u . ou): the part of ou perpendicular to u, over |d|
    const Vec2 r = -(ou - u.dot(ou) * u) / nd;
    g[i + 1] += r;
    g[i] -= r;
  }
  return g;
}

namespace {

// Hessian of fitting_energy in candidate coordinates (x0, y0, x1, y1, ...).
Eigen::MatrixXd fitting_hessian(std::span<const Vec2> original, std::span<const Vec2> candidate) {
  const std::size_t n = candidate.size();
  Eigen::MatrixXd h = 2.0 * Eigen::MatrixXd::Identity(2 * n, 2 * n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 d = candidate[i + 1] - candidate[i];
    const Vec2 o = original[i + 1] - original[i];
    const double r = d.norm();
    const double no = o.norm();
    if (r == 0.0 || no == 0.0) continue;
    const Vec2 ou = o / no;
    const double r3 = r * r * r;
    const Eigen::Matrix2d hs = (ou * d.transpose() + d * ou.transpose()) / r3 +
                               ou.dot(d) * (Eigen::Matrix2d::Identity() / r3 - 3.0 * d * d.transpose() / (r3 * r * r));
    h.block<2, 2>(2 * i, 2 * i) += hs;
    h.block<2, 2>(2 * i + 2, 2 * i + 2) += hs;
    h.block<2, 2>(2 * i, 2 * i + 2) -= hs;
    h.block<2, 2>(2 * i + 2, 2 * i) -= hs;
  }
  return h;
}

double dot(const Points2& a, const Points2& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i].dot(b[i]);
  return s;
}

}  // namespace

DeformedGroup deform_group(const LandmarkGroup& g, std::span<const Vec2> stroke_keypoints, const DeformConfig& cfg) {
  validate_config(cfg);
  if (static_cast<int>(stroke_keypoints.size()) != g.size() || static_cast<int>(g.current_points.size()) != g.size()) {
    throw DimensionError("group " + g.name + " has " + std::to_string(g.size()) + " landmarks but " +
                         std::to_string(stroke_keypoints.size()) + " stroke key points");
  }
  for (std::size_t i = 0; i < stroke_keypoints.size(); ++i) {
    if (!stroke_keypoints[i].allFinite() || !g.current_points[i].allFinite()) {
      throw ValidationError("non-finite input to deform_group for group " + g.name);
    }
  }

  // Normalized frame: origin at the first stroke key point, unit = length_scale.
  const Vec2 origin = stroke_keypoints.front();
  const double inv = 1.0 / cfg.length_scale;
  const std::size_t n = stroke_keypoints.size();
  Points2 original(n), stroke(n);
  for (std::size_t i = 0; i < n; ++i) {
    original[i] = (g.current_points[i] - origin) * inv;
    stroke[i] = (stroke_keypoints[i] - origin) * inv;
  }

  Points2 x = stroke;
  double energy = fitting_energy(original, stroke, x);
  Points2 grad = fitting_gradient(original, stroke, x);
  double step = cfg.step_size;

  DeformedGroup out;
  out.name = g.name;
  out.energy_history.push_back(energy);
  int it = 0;
  bool converged = false;
  for (; it < cfg.max_iters; ++it) {
    if (std::sqrt(dot(grad, grad)) < cfg.grad_tol) {
      converged = true;
      break;
    }
    Points2 trial(n);
    double trial_energy = energy;
    bool accepted = false;
    while (step > 1e-30) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * grad[i];
      trial_energy = fitting_energy(original, stroke, trial);
      if (trial_energy <= energy) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    Points2 trial_grad = fitting_gradient(original, stroke, trial);
    Points2 ds(n), dg(n);
    for (std::size_t i = 0; i < n; ++i) {
      ds[i] = trial[i] - x[i];
      dg[i] = trial_grad[i] - grad[i];
    }
    const double sy = dot(ds, dg);
    step = sy > 0.0 ? sy / dot(dg, dg) : cfg.step_size;
    x = std::move(trial);
    grad = std::move(trial_grad);
    energy = trial_energy;
    out.energy_history.push_back(energy);
  }

  // Newton polish: a converged descent stops anywhere inside the tolerance
  // ball, so finish on the minimizer itself. Only taken while the Hessian is
  // positive definite and the energy does not rise.
  for (int k = 0; converged && it > 0 && k < 8; ++k) {
    const double gn = std::sqrt(dot(grad, grad));
    if (gn < 1e-14) break;
    const Eigen::MatrixXd h = fitting_hessian(original, x);
    const Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) break;
    Eigen::VectorXd gv(2 * n);
    for (std::size_t i = 0; i < n; ++i) gv.segment<2>(2 * i) = grad[i];
    const Eigen::VectorXd delta = llt.solve(-gv);
    Points2 trial(n);
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] + delta.segment<2>(2 * i);
    const double trial_energy = fitting_energy(original, stroke, trial);
    if (!(trial_energy <= energy)) break;
    x = std::move(trial);
    energy = trial_energy;
    grad = fitting_gradient(original, stroke, x);
    out.energy_history.push_back(energy);
  }

  out.iterations = it;
  out.energy = energy;
  if (it == 0) {
    out.points.assign(stroke_keypoints.begin(), stroke_keypoints.end());
    return out;
  }
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.points[i] = x[i] * cfg.length_scale + origin;
  return out;
}

}  // namespace sketchface
