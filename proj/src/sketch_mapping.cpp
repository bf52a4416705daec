#include "sketchface/sketch_mapping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace sketchface {

void validate_stroke(const Stroke& s) {
  if (s.points.size() < 2) {
    throw ValidationError("stroke " + std::to_string(s.order_index) + " has fewer than 2 points");
  }
  double length = 0.0;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (!s.points[i].allFinite()) throw ValidationError("stroke " + std::to_string(s.order_index) + " has non-finite point");
    if (i > 0) {
      if (s.points[i] == s.points[i - 1]) {
        throw ValidationError("stroke " + std::to_string(s.order_index) + " repeats consecutive point " +
                              std::to_string(i));
      }
      length += (s.points[i] - s.points[i - 1]).norm();
    }
  }
  if (!(length > 0.0)) throw ValidationError("stroke " + std::to_string(s.order_index) + " has zero length");
}

std::vector<LandmarkGroup> make_landmark_groups(std::span<const GroupDefinition> defs, std::span<const Vec2> landmarks) {
  std::vector<LandmarkGroup> out;
  std::set<int> used;
  for (const GroupDefinition& d : defs) {
    if (d.landmark_indices.size() < 2) throw ValidationError("group " + d.name + " has fewer than 2 landmarks");
    LandmarkGroup g{d.name, d.landmark_indices, {}};
    for (int idx : d.landmark_indices) {
      if (idx < 0 || idx >= static_cast<int>(landmarks.size())) {
        throw ValidationError("group " + d.name + " references landmark " + std::to_string(idx));
      }
      if (!used.insert(idx).second) {
        throw ValidationError("landmark " + std::to_string(idx) + " appears in more than one group (" + d.name + ")");
      }
      g.current_points.push_back(landmarks[idx]);
    }
    out.push_back(std::move(g));
  }
  return out;
}

double default_sigma(double face_bbox_diagonal_px) { return 0.05 * face_bbox_diagonal_px; }

std::vector<RelationPair> default_relation_pairs(std::span<const GroupDefinition> groups) {
  static const RelationPair kDefaults[] = {
      {"right_upper_eyelid", "right_lower_eyelid"}, {"left_upper_eyelid", "left_lower_eyelid"},
      {"outer_upper_lip", "outer_lower_lip"},       {"inner_upper_lip", "inner_lower_lip"},
      {"left_eyebrow", "left_upper_eyelid"},        {"right_eyebrow", "right_upper_eyelid"},
  };
  std::set<std::string> names;
  for (const auto& g : groups) names.insert(g.name);
  std::vector<RelationPair> out;
  for (const auto& p : kDefaults) {
    if (names.count(p.first) && names.count(p.second)) out.push_back(p);
  }
  return out;
}

void validate_config(const HmmConfig& cfg, std::span<const LandmarkGroup> groups) {
  if (!(cfg.sigma > 0.0) || !std::isfinite(cfg.sigma)) throw ValidationError("hmm sigma must be positive");
  if (!(cfg.boost_factor >= 1.0) || !std::isfinite(cfg.boost_factor)) {
    throw ValidationError("hmm boost_factor must be >= 1");
  }
  std::set<std::string> names;
  for (const auto& g : groups) names.insert(g.name);
  for (const auto& [a, b] : cfg.relation_pairs) {
    if (!names.count(a) || !names.count(b)) {
      throw ValidationError("relation pair (" + a + ", " + b + ") references an unknown group");
    }
  }
}

std::vector<double> arc_length_fractions(std::span<const Vec2> polyline) {
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i) cum[i] = cum[i - 1] + (polyline[i] - polyline[i - 1]).norm();
  const double total = cum.empty() ? 0.0 : cum.back();
  if (!(total > 0.0)) throw ValidationError("polyline has zero length");
  for (double& c : cum) c /= total;
  cum.back() = 1.0;
  return cum;
}

Points2 resample_at(std::span<const Vec2> polyline, std::span<const double> fractions) {
  if (polyline.size() < 2) throw ValidationError("polyline needs at least 2 points");
  std::vector<double> cum(polyline.size(), 0.0);
  for (std::size_t i = 1; i < polyline.size(); ++i) cum[i] = cum[i - 1] + (polyline[i] - polyline[i - 1]).norm();
  const double total = cum.back();
  if (!(total > 0.0)) throw ValidationError("polyline has zero length");

  Points2 out;
  out.reserve(fractions.size());
  std::size_t seg = 0;
  for (double f : fractions) {
    if (f <= 0.0) {
      out.push_back(polyline.front());
      continue;
    }
    if (f >= 1.0) {
      out.push_back(polyline.back());
      continue;
    }
    const double target = f * total;
    if (seg > 0 && cum[seg] > target) seg = 0;
    while (seg + 2 < polyline.size() && cum[seg + 1] < target) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    double t = len > 0.0 ? (target - cum[seg]) / len : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    // Land exactly on vertices instead of one ulp next to them.
    if (t < 1e-12) {
      out.push_back(polyline[seg]);
    } else if (t > 1.0 - 1e-12) {
      out.push_back(polyline[seg + 1]);
    } else {
      out.push_back(polyline[seg] + t * (polyline[seg + 1] - polyline[seg]));
    }
  }
  return out;
}

Points2 resample_stroke(const Stroke& s, int m) {
  if (m < 2) throw ValidationError("resample count must be >= 2");
  validate_stroke(s);
  std::vector<double> fractions(m);
  for (int k = 0; k < m; ++k) fractions[k] = static_cast<double>(k) / (m - 1);
  return resample_at(s.points, fractions);
}

namespace {

double mean_distance(std::span<const Vec2> a, std::span<const Vec2> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).norm();
  return sum / static_cast<double>(a.size());
}

}  // namespace

StrokeMatch match_stroke(const Stroke& s, const LandmarkGroup& g) {
  if (g.size() < 2 || static_cast<int>(g.current_points.size()) != g.size()) {
    throw ValidationError("group " + g.name + " needs at least 2 positioned landmarks");
  }
  Points2 forward = resample_stroke(s, g.size());
  Points2 backward(forward.rbegin(), forward.rend());
  const double df = mean_distance(forward, g.current_points);
  const double db = mean_distance(backward, g.current_points);
  if (db < df) return {db, true, std::move(backward)};
  return {df, false, std::move(forward)};
}

double stroke_group_distance(const Stroke& s, const LandmarkGroup& g) { return match_stroke(s, g).distance; }

double emission_from_distance(double d, double sigma) {
  if (d <= 3.0 * sigma) return std::exp(-(d * d) / (2.0 * sigma * sigma));
  return 0.0;
}

double emission_prob(const Stroke& s, const LandmarkGroup& g, const HmmConfig& cfg) {
  return emission_from_distance(stroke_group_distance(s, g), cfg.sigma);
}

std::vector<std::vector<double>> transition_matrix(std::span<const LandmarkGroup> groups, const HmmConfig& cfg) {
  const std::size_t n = groups.size();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index[groups[i].name] = i;
  std::vector<std::vector<double>> boost(n, std::vector<double>(n, 1.0));
  for (const auto& [a, b] : cfg.relation_pairs) {
    const auto ia = index.find(a);
    const auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) continue;
    boost[ia->second][ib->second] = cfg.boost_factor;
    boost[ib->second][ia->second] = cfg.boost_factor;
  }
  std::vector<std::vector<double>> a(n, std::vector<double>(n));
  const double base = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += base * boost[i][j];
    for (std::size_t j = 0; j < n; ++j) a[i][j] = base * boost[i][j] / row;
  }
  return a;
}

std::vector<StrokeAssignment> MappingResult::effective() const {
  std::map<int, StrokeAssignment> latest;
  for (const auto& a : assignments) {
    auto it = latest.find(a.group_index);
    if (it == latest.end() || it->second.order_index < a.order_index) latest[a.group_index] = a;
  }
  std::vector<StrokeAssignment> out;
  for (auto& [g, a] : latest) out.push_back(a);
  return out;
}

namespace {

// Viterbi over one unbroken run of strokes, in log space. Emission rows hold
// log P(S|G) (-inf where the gate closes). Returns group indices per stroke.
std::vector<int> decode_run(const std::vector<std::vector<double>>& log_emission,
                            const std::vector<std::vector<double>>& log_transition) {
  const std::size_t T = log_emission.size();
  const std::size_t n = log_transition.size();
  const double log_init = -std::log(static_cast<double>(n));
  std::vector<std::vector<double>> delta(T, std::vector<double>(n));
  std::vector<std::vector<int>> back(T, std::vector<int>(n, 0));
  for (std::size_t j = 0; j < n; ++j) delta[0][j] = log_init + log_emission[0][j];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < n; ++j) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = delta[t - 1][i] + log_transition[i][j];
        if (v > best) {  // strict: earliest (smallest) index wins ties
          best = v;
          arg = static_cast<int>(i);
        }
      }
      delta[t][j] = best + log_emission[t][j];
      back[t][j] = arg;
    }
  }
  std::vector<int> path(T);
  double best = -std::numeric_limits<double>::infinity();
  int arg = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (delta[T - 1][j] > best) {
      best = delta[T - 1][j];
      arg = static_cast<int>(j);
    }
  }
  path[T - 1] = arg;
  for (std::size_t t = T - 1; t > 0; --t) path[t - 1] = back[t][path[t]];
  return path;
}

}  // namespace

MappingResult viterbi_map(std::span<const Stroke> strokes, std::span<const LandmarkGroup> groups,
                          const HmmConfig& cfg) {
  if (strokes.empty()) throw ValidationError("no strokes to map");
  if (groups.empty()) throw ValidationError("no landmark groups to map onto");
  validate_config(cfg, groups);

  std::vector<const Stroke*> ordered;
  for (const Stroke& s : strokes) {
    validate_stroke(s);
    ordered.push_back(&s);
  }
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Stroke* a, const Stroke* b) { return a->order_index < b->order_index; });
  for (std::size_t i = 1; i < ordered.size(); ++i) {
    if (ordered[i]->order_index == ordered[i - 1]->order_index) {
      throw ValidationError("duplicate stroke order index " + std::to_string(ordered[i]->order_index));
    }
  }

  const auto transition = transition_matrix(groups, cfg);
  std::vector<std::vector<double>> log_transition(transition.size());
  for (std::size_t i = 0; i < transition.size(); ++i) {
    for (double p : transition[i]) log_transition[i].push_back(std::log(p));
  }

  MappingResult result;
  std::vector<std::vector<double>> run_emission;
  std::vector<std::vector<double>> run_distance;
  std::vector<const Stroke*> run_strokes;

  auto flush = [&]() {
    if (run_strokes.empty()) return;
    const std::vector<int> path = decode_run(run_emission, log_transition);
    for (std::size_t t = 0; t < path.size(); ++t) {
      const int g = path[t];
      result.assignments.push_back({run_strokes[t]->order_index, g, groups[g].name, run_distance[t][g]});
    }
    run_emission.clear();
    run_distance.clear();
    run_strokes.clear();
  };

  for (const Stroke* s : ordered) {
    std::vector<double> log_e(groups.size());
    std::vector<double> dist(groups.size());
    bool any = false;
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      dist[g] = stroke_group_distance(*s, groups[g]);
      const double p = emission_from_distance(dist[g], cfg.sigma);
      log_e[g] = p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity();
      any = any || p > 0.0;
      min_d = std::min(min_d, dist[g]);
    }
    if (!any) {
      flush();
      result.rejected.push_back({s->order_index, min_d,
                                 "stroke is farther than 3 sigma (" + std::to_string(3.0 * cfg.sigma) +
                                     " px) from every landmark group; nearest is " + std::to_string(min_d) + " px"});
      continue;
    }
    run_emission.push_back(std::move(log_e));
    run_distance.push_back(std::move(dist));
    run_strokes.push_back(s);
  }
  flush();

  std::map<int, int> latest;
  for (const auto& a : result.assignments) latest[a.group_index] = std::max(latest[a.group_index], a.order_index);
  for (const auto& a : result.assignments) {
    if (latest[a.group_index] != a.order_index) result.superseded.push_back(a.order_index);
  }
  return result;
}

}  // namespace sketchface
