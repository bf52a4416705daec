#pragma once

#include "sketchface/sketch_mapping.hpp"
#include "sketchface/types.hpp"

#include <span>

namespace sketchface {

struct DeformConfig {
  double step_size = 0.25;
  int max_iters = 500;
  double grad_tol = 1e-6;
  /// Coordinates are divided by this length (the face bounding-box diagonal,
  /// in pixels) before optimizing, so the position and bending terms are
  /// commensurate. 1 keeps raw pixels.
  double length_scale = 1.0;
};

void validate_config(const DeformConfig& cfg);

struct DeformedGroup {
  std::string name;
  Points2 points;
  double energy = 0.0;  // fitting energy at the result, normalized units
  int iterations = 0;
  std::vector<double> energy_history;  // one entry per accepted iterate, starting at the initialization
};

// Energies take the original group `original`, the stroke key points `stroke`
// and a candidate `candidate`, all of equal length, in the same units.

/// Sum ||c_i - s_i||^2 + sum (1 - cos(angle(c_i->c_{i+1}) - angle(g_i->g_{i+1}))).
double fitting_energy(std::span<const Vec2> original, std::span<const Vec2> stroke, std::span<const Vec2> candidate);

/// Analytic gradient of fitting_energy with respect to `candidate`.
Points2 fitting_gradient(std::span<const Vec2> original, std::span<const Vec2> stroke,
                         std::span<const Vec2> candidate);

/// Fits the group to the stroke key points by gradient descent on
/// fitting_energy, starting at the key points. Steps are Barzilai-Borwein
/// (short form) estimates, halved until the energy does not increase. Once the
/// gradient tolerance is met, a few guarded Newton steps land on the minimizer.
DeformedGroup deform_group(const LandmarkGroup& g, std::span<const Vec2> stroke_keypoints, const DeformConfig& cfg);

}  // namespace sketchface
