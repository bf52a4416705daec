#include "fixtures.hpp"
#include "sketchface/propagate.hpp"
#include "sketchface/session.hpp"

#include <doctest.h>

using namespace sketchface;

namespace {

// Blue-weighted centroid of the marker dot near `guess`, or nullopt if none.
std::optional<Vec2> dot_centroid(const FrameImage& img, const Vec2& guess, int radius) {
  Vec2 acc = Vec2::Zero();
  double wsum = 0.0;
  const int cx = static_cast<int>(std::lround(guess.x())), cy = static_cast<int>(std::lround(guess.y()));
  for (int y = cy - radius; y <= cy + radius; ++y) {
    for (int x = cx - radius; x <= cx + radius; ++x) {
      if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
      const std::uint8_t* p = img.px(x, y);
      const double w = p[2] - std::max(p[0], p[1]) - 20.0;
      if (w <= 0.0) continue;
      acc += w * Vec2(x, y);
      wsum += w;
    }
  }
  if (wsum <= 0.0) return std::nullopt;
  return acc / wsum;
}

}  // namespace

TEST_SUITE("end_to_end") {

TEST_CASE("enlarged mouth lands where the modified mesh projects") {
  DemoOptions opt;
  opt.frames = 6;
  const SessionBundle b = write_demo_bundle(testutil::scratch_dir("mouth"), opt);
  const Points2 lms = b.landmarks(0);
  EditState state;
  Stroke upper, lower;
  for (int k = 48; k <= 54; ++k) upper.points.push_back(lms[k] + Vec2(0, k == 48 || k == 54 ? 0.0 : -9.0));
  for (int k = 54; k <= 59; ++k) lower.points.push_back(lms[k] + Vec2(0, k == 54 ? 0.0 : 9.0));
  lower.points.push_back(lms[48]);
  lower.order_index = 1;
  const StrokeOutcome mapped = submit_strokes(b, state, 0, {upper, lower});
  REQUIRE(mapped.mapping.effective().size() == 2u);
  CHECK(mapped.mapping.assignments[0].group == "outer_upper_lip");
  CHECK(mapped.mapping.assignments[1].group == "outer_lower_lip");
  apply_edit(b, state);
  const FaceMesh edited = current_identity(b, state);

  PropagateOptions popt;
  popt.threads = 2;
  const auto frames = propagate(b, edited, popt);
  REQUIRE(frames.size() == 6u);

  double worst = 0.0, moved = 0.0;
  int measured = 0;
  for (int t = 0; t < b.frame_count; ++t) {
    const Vertices posed = b.posed(t, edited.vertices);
    const Vertices original = b.posed(t, b.mesh.vertices);
    for (int k = 48; k <= 59; ++k) {
      const int v = b.mesh.landmark_vertex_ids[k];
      const Vec2 want = b.camera.project(posed[v]);
      moved = std::max(moved, (want - b.camera.project(original[v])).norm());
      const auto got = dot_centroid(frames[t], want, 4);
      REQUIRE(got.has_value());
      worst = std::max(worst, (*got - want).norm());
      ++measured;
    }
  }
  MESSAGE(measured << " marker dots, largest landmark motion " << moved << " px, worst centroid error " << worst
                   << " px");
  CHECK(moved > 2.0);  // well above the tolerance, so a stale frame would fail
  CHECK(worst <= 1.0);
}

}  // TEST_SUITE
