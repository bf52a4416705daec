#pragma once

#include "sketchface/types.hpp"

#include <span>
#include <string>
#include <utility>

namespace sketchface {

/// Ordered hand-drawn polyline in frame pixels.
struct Stroke {
  Points2 points;
  int order_index = 0;
};

/// Throws ValidationError for fewer than two points, repeated consecutive
/// points or zero arc length.
void validate_stroke(const Stroke& s);

/// Named, ordered subset of the landmark list (no positions).
struct GroupDefinition {
  std::string name;
  std::vector<int> landmark_indices;
};

struct LandmarkGroup {
  std::string name;
  std::vector<int> landmark_indices;
  Points2 current_points;

  int size() const { return static_cast<int>(landmark_indices.size()); }
};

/// Attaches frame positions to group definitions. Throws ValidationError if a
/// group has < 2 landmarks, repeats an index, or groups overlap.
std::vector<LandmarkGroup> make_landmark_groups(std::span<const GroupDefinition> defs, std::span<const Vec2> landmarks);

using RelationPair = std::pair<std::string, std::string>;

struct HmmConfig {
  double sigma = 1.0;  // pixels
  std::vector<RelationPair> relation_pairs;
  double boost_factor = 2.0;
};

/// 5% of the face bounding-box diagonal.
double default_sigma(double face_bbox_diagonal_px);

/// Eyelid pairs per eye, lip pairs and eyebrow/upper-eyelid pairs, filtered
/// to the names present in `groups`.
std::vector<RelationPair> default_relation_pairs(std::span<const GroupDefinition> groups);

void validate_config(const HmmConfig& cfg, std::span<const LandmarkGroup> groups);

/// `m` points at uniform arc-length spacing; endpoints are reproduced exactly.
Points2 resample_stroke(const Stroke& s, int m);

/// Points at the given normalized arc-length positions (each in [0,1]).
Points2 resample_at(std::span<const Vec2> polyline, std::span<const double> fractions);

/// Normalized arc-length position of every polyline vertex.
std::vector<double> arc_length_fractions(std::span<const Vec2> polyline);

struct StrokeMatch {
  double distance = 0.0;
  bool reversed = false;  // the stroke matched best when traversed backwards
  Points2 keypoints;      // resampled stroke in the matching orientation
};

/// Mean key-point distance, minimized over both stroke orientations.
StrokeMatch match_stroke(const Stroke& s, const LandmarkGroup& g);
double stroke_group_distance(const Stroke& s, const LandmarkGroup& g);

/// Gaussian likelihood gated to exactly zero beyond 3 sigma.
double emission_from_distance(double d, double sigma);
double emission_prob(const Stroke& s, const LandmarkGroup& g, const HmmConfig& cfg);

/// Row-stochastic transition matrix: uniform base, related pairs multiplied by
/// boost_factor, rows renormalized. Entry [from][to].
std::vector<std::vector<double>> transition_matrix(std::span<const LandmarkGroup> groups, const HmmConfig& cfg);

struct StrokeAssignment {
  int order_index = 0;
  int group_index = 0;
  std::string group;
  double distance = 0.0;
};

struct RejectedStroke {
  int order_index = 0;
  double min_distance = 0.0;
  std::string reason;
};

struct MappingResult {
  std::vector<StrokeAssignment> assignments;
  std::vector<RejectedStroke> rejected;
  /// Assigned strokes overridden by a later stroke on the same group.
  std::vector<int> superseded;

  /// Latest assignment per group, in group-index order.
  std::vector<StrokeAssignment> effective() const;
};

/// Most probable group sequence for the stroke sequence (sorted by
/// order_index). Strokes with zero emission for every group are rejected and
/// split the chain; decoding restarts with uniform initial probabilities after
/// each. Ties resolve to the smallest group index.
MappingResult viterbi_map(std::span<const Stroke> strokes, std::span<const LandmarkGroup> groups,
                          const HmmConfig& cfg);

}  // namespace sketchface
