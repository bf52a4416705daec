#include "fixtures.hpp"
#include "sketchface/http_service.hpp"
#include "sketchface/session.hpp"

#include <doctest.h>
#include <httplib.h>

#include <chrono>
#include <thread>

using namespace sketchface;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path bundle_copy(const std::string& name) {
  const fs::path dst = testutil::scratch_dir("session_bundle_" + name);
  fs::copy(testutil::small_bundle().root, dst, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  return dst;
}

// HTTP server on an ephemeral port, stopped on destruction.
struct TestServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;

  explicit TestServer(SessionManager& mgr) {
    register_routes(server, mgr);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~TestServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

json parse(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json post(httplib::Client& c, const std::string& path, const json& body) {
  return parse(c.Post(path, body.dump(), "application/json"));
}

// Stroke along a group's landmarks at frame 0, moved by `shift`.
json group_stroke(const json& landmarks, const std::string& group, const Vec2& shift) {
  for (const json& g : landmarks["groups"]) {
    if (g["name"] != group) continue;
    json pts = json::array();
    for (const json& p : g["points"]) pts.push_back({p[0].get<double>() + shift.x(), p[1].get<double>() + shift.y()});
    return {{"frame", 0}, {"strokes", json::array({{{"points", pts}}})}};
  }
  FAIL("no group " << group);
  return {};
}

json wait_for_job(httplib::Client& c, const std::string& id, int job) {
  double last = -1.0;
  for (int k = 0; k < 6000; ++k) {
    const json j = parse(c.Get("/sessions/" + id + "/jobs/" + std::to_string(job)));
    const double p = j["progress"].get<double>();
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p >= last);
    last = p;
    if (j["state"] != "running") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  FAIL("job did not finish");
  return {};
}

std::uint64_t hash_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = testutil::fnv1a("");
  for (const auto& f : files) h = testutil::fnv1a(f.filename().string() + testutil::read_file(f), h);
  return h;
}

}  // namespace

TEST_SUITE("session") {

TEST_CASE("state survives a json round trip") {
  const SessionBundle& b = testutil::small_bundle();
  EditState s;
  const Points2 lms = b.landmarks(0);
  Stroke st;
  for (int k = 0; k <= 16; ++k) st.points.push_back(lms[k] + Vec2(2, 0));
  submit_strokes(b, s, 0, {st});
  apply_edit(b, s);
  const EditState back = state_from_json(json::parse(state_to_json(s).dump()));
  CHECK(back.frame == s.frame);
  CHECK(back.strokes.size() == 1u);
  CHECK(back.deformed.size() == s.deformed.size());
  REQUIRE(back.identity.size() == s.identity.size());
  for (std::size_t v = 0; v < s.identity.size(); ++v) CHECK(back.identity[v] == s.identity[v]);
  CHECK(back.edited_vertices == s.edited_vertices);
  CHECK(back.history.size() == 1u);
  CHECK(back.mapping.assignments.size() == s.mapping.assignments.size());
}

TEST_CASE("strokes on a new frame start over") {
  const SessionBundle& b = testutil::small_bundle();
  EditState s;
  const Points2 l0 = b.landmarks(0), l3 = b.landmarks(3);
  Stroke jaw, brow;
  for (int k = 0; k <= 16; ++k) jaw.points.push_back(l0[k]);
  for (int k = 17; k <= 21; ++k) brow.points.push_back(l0[k] + Vec2(0, -2));
  submit_strokes(b, s, 0, {jaw});
  submit_strokes(b, s, 0, {brow});
  CHECK(s.deformed.size() == 2u);
  Stroke brow3;
  for (int k = 17; k <= 21; ++k) brow3.points.push_back(l3[k]);
  submit_strokes(b, s, 3, {brow3});
  CHECK(s.deformed.size() == 1u);
  CHECK(s.frame == 3);
}

TEST_CASE("session ids are stable per bundle path") {
  const fs::path p = testutil::small_bundle().root;
  CHECK(session_id_for(p) == session_id_for(p / "."));
  CHECK(session_id_for(p).size() == 16u);
  CHECK(session_id_for(p) != session_id_for(p.parent_path()));
}

TEST_CASE("http flow") {
  const fs::path state_dir = testutil::scratch_dir("http_state");
  const fs::path bundle = bundle_copy("flow");
  std::string id;
  std::uint64_t first_hash = 0;
  std::size_t history = 0;
  {
    SessionManager mgr(state_dir, 2);
    TestServer srv(mgr);
    httplib::Client c = srv.client();

    const json created = post(c, "/sessions", {{"bundle", bundle.string()}});
    id = created["id"];
    CHECK(created["frame_count"] == 10);
    CHECK(created["width"] == 192);
    CHECK(created["height"] == 144);
    CHECK(created["fps"] == 30.0);
    CHECK(post(c, "/sessions", {{"bundle", bundle.string()}})["id"] == id);
    const std::string base = "/sessions/" + id;

    // errors
    CHECK(c.Get("/sessions/0000/frames/0/landmarks")->status == 404);
    CHECK(c.Get(base + "/frames/10/landmarks")->status == 404);
    CHECK(c.Get(base + "/frames/x/landmarks")->status == 400);
    CHECK(c.Post("/sessions", "{bad", "application/json")->status == 400);
    CHECK(c.Post("/sessions", json{{"bundle", "/no/such/dir"}}.dump(), "application/json")->status == 400);
    CHECK(c.Post(base + "/strokes", json{{"strokes", json::array()}}.dump(), "application/json")->status == 400);
    CHECK(c.Post(base + "/apply", "", "application/json")->status == 400);  // nothing drawn yet
    CHECK(c.Get(base + "/jobs/0")->status == 404);
    CHECK(c.Get(base + "/preview/99")->status == 404);

    const json lms = parse(c.Get(base + "/frames/0/landmarks"));
    CHECK(lms["landmarks"].size() == 68u);
    CHECK_FALSE(lms.contains("modified_landmarks"));

    // a stroke nowhere near the face is rejected but the request succeeds
    const json far = {{"frame", 0}, {"strokes", json::array({{{"points", {{1, 1}, {6, 2}, {11, 1}}}}})}};
    const auto far_res = c.Post(base + "/strokes", far.dump(), "application/json");
    REQUIRE(far_res);
    CHECK(far_res->status == 200);
    const json far_body = json::parse(far_res->body);
    CHECK(far_body["assignments"].empty());
    CHECK(far_body["rejected"].size() == 1u);

    const json mapped = post(c, base + "/strokes", group_stroke(lms, "jaw", Vec2(4, 0)));
    REQUIRE(mapped["assignments"].size() == 1u);
    CHECK(mapped["assignments"][0]["group"] == "jaw");
    CHECK(mapped["overlay"].size() == 68u);
    CHECK(mapped["deformed"].size() == 1u);

    const json applied = post(c, base + "/apply", json::object());
    CHECK(applied["constraints"].get<int>() > 0);
    CHECK(applied["history_length"] == 1);
    CHECK(applied["max_displacement"].get<double>() > 0.0);
    CHECK(parse(c.Get(base + "/frames/0/landmarks")).contains("modified_landmarks"));

    const json contours = parse(c.Get(base + "/contours?yaw=35&pitch=0"));
    CHECK(contours["yaw"].get<double>() == doctest::Approx(35.0 * std::numbers::pi / 180.0));
    REQUIRE(!contours["polylines"].empty());
    CHECK(c.Get(base + "/contours?yaw=abc")->status == 400);

    // redraw part of the longest occluding contour two pixels over
    json best;
    for (const json& pl : contours["polylines"]) {
      if (pl["label"] == "occluding_contour" && (best.is_null() || pl["points"].size() > best["points"].size())) best = pl;
    }
    REQUIRE(!best.is_null());
    REQUIRE(best["points"].size() >= 6u);
    Vec2 lo(1e9, 1e9), hi(-1e9, -1e9);
    json stroke = json::array();
    for (int k = 1; k <= 4; ++k) {
      const Vec2 p(best["points"][k][0].get<double>(), best["points"][k][1].get<double>());
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      stroke.push_back({p.x() + 2.0, p.y()});
    }
    const json region = {{lo.x() - 0.5, lo.y() - 0.5}, {hi.x() + 0.5, lo.y() - 0.5}, {hi.x() + 0.5, hi.y() + 0.5},
                         {lo.x() - 0.5, hi.y() + 0.5}};
    const json refined = post(c, base + "/refine", {{"yaw", 35}, {"erased_region", region}, {"stroke", stroke}});
    CHECK(refined["applied"] == true);
    CHECK(refined["history_length"] == 2);
    const json empty = post(c, base + "/refine",
                            {{"yaw", 35}, {"erased_region", {{0, 0}, {3, 0}, {3, 3}}}, {"stroke", {{0, 0}, {2, 2}}}});
    CHECK(empty["applied"] == false);
    CHECK(empty["warnings"].size() == 1u);
    CHECK(empty["history_length"] == 2);
    CHECK(c.Post(base + "/refine", json{{"stroke", stroke}}.dump(), "application/json")->status == 400);

    const auto preview = c.Get(base + "/preview/0");
    REQUIRE(preview);
    CHECK(preview->status == 200);
    CHECK(preview->get_header_value("Content-Type") == "image/png");
    CHECK(preview->body.substr(1, 3) == "PNG");

    const fs::path out1 = state_dir / "out1";
    const auto started = c.Post(base + "/propagate", json{{"out_dir", out1.string()}}.dump(), "application/json");
    REQUIRE(started);
    CHECK(started->status == 202);
    const int job = json::parse(started->body)["job"];
    const json done = wait_for_job(c, id, job);
    CHECK(done["state"] == "done");
    CHECK(done["frames_done"] == 10);
    CHECK(done["progress"].get<double>() == 1.0);
    int pngs = 0;
    for (const auto& e : fs::directory_iterator(out1)) pngs += e.path().extension() == ".png";
    CHECK(pngs == 10);
    first_hash = hash_dir(out1);

    const fs::path out2 = state_dir / "out2";
    const int job2 = post(c, base + "/propagate", {{"out_dir", out2.string()}})["job"];
    CHECK(job2 == job + 1);
    CHECK(wait_for_job(c, id, job2)["state"] == "done");
    CHECK(hash_dir(out2) == first_hash);
    history = mgr.get(id)->state().history.size();
  }

  // a new manager on the same state directory picks the session up again
  SessionManager again(state_dir, 2);
  auto s = again.get(id);
  CHECK(s->state().history.size() == history);
  TestServer srv(again);
  httplib::Client c = srv.client();
  const fs::path out3 = state_dir / "out3";
  const int job = post(c, "/sessions/" + id + "/propagate", {{"out_dir", out3.string()}})["job"];
  CHECK(wait_for_job(c, id, job)["state"] == "done");
  CHECK(hash_dir(out3) == first_hash);
}

TEST_CASE("refine history only grows") {
  const SessionBundle& b = testutil::small_bundle();
  EditState s;
  const Points2 l0 = b.landmarks(0);
  Stroke st;
  for (int k = 0; k <= 16; ++k) st.points.push_back(l0[k] + Vec2(0, 3));
  submit_strokes(b, s, 0, {st});
  apply_edit(b, s);
  std::size_t last = s.history.size();
  for (double yaw : {0.5, -0.5}) {
    const ContourMap map = session_contours(b, s, yaw, 0.0);
    const ContourPolyline* occ = nullptr;
    for (const auto& pl : map.polylines) {
      if (pl.label == ContourLabel::occluding_contour && (!occ || pl.points.size() > occ->points.size())) occ = &pl;
    }
    REQUIRE(occ != nullptr);
    RefineEdit e;
    Vec2 lo = occ->points[1], hi = lo;
    for (int k = 1; k <= 4; ++k) {
      lo = lo.cwiseMin(occ->points[k]);
      hi = hi.cwiseMax(occ->points[k]);
      e.replacement_stroke.points.push_back(occ->points[k] + Vec2(0, 1.5));
    }
    e.erased_region = {lo - Vec2(0.5, 0.5), Vec2(hi.x() + 0.5, lo.y() - 0.5), hi + Vec2(0.5, 0.5),
                       Vec2(lo.x() - 0.5, hi.y() + 0.5)};
    const Vertices before = current_identity(b, s).vertices;
    EditState unpinned = s;
    unpinned.edited_vertices.clear();
    const RefineOutcome r = submit_refine(b, s, yaw, 0.0, e);
    submit_refine(b, unpinned, yaw, 0.0, e);
    CHECK(r.applied);
    CHECK(s.history.size() == last + 1);
    last = s.history.size();
    // earlier edits are held back by their pins
    double moved = 0.0, moved_free = 0.0;
    for (int v : s.edited_vertices) {
      moved += (s.identity[v] - before[v]).norm();
      moved_free += (unpinned.identity[v] - before[v]).norm();
    }
    MESSAGE("edited vertices moved " << moved << " with pins, " << moved_free << " without");
    CHECK(moved < moved_free);
  }
  CHECK(s.history.front().kind == "apply");
  CHECK(s.history.back().kind == "refine");
}

}  // TEST_SUITE
