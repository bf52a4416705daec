#include "sketchface/session.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

namespace sketchface {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

double bbox_diagonal(std::span<const Vec2> pts) {
  if (pts.empty()) return 1.0;
  Vec2 lo = pts.front(), hi = lo;
  for (const Vec2& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double d = (hi - lo).norm();
  return d > 0.0 ? d : 1.0;
}

Points2 points_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of [x, y] pairs");
  Points2 out;
  for (const json& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw ValidationError(what + " must be an array of [x, y] pairs");
    }
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

HmmConfig hmm_config(const SessionBundle& b, double diag) {
  HmmConfig cfg;
  cfg.sigma = b.sigma.value_or(default_sigma(diag));
  cfg.relation_pairs = b.relation_pairs.empty() ? default_relation_pairs(b.groups) : b.relation_pairs;
  cfg.boost_factor = b.boost_factor;
  return cfg;
}

}  // namespace

StrokeOutcome submit_strokes(const SessionBundle& bundle, EditState& state, int frame, std::vector<Stroke> strokes) {
  if (strokes.empty()) throw ValidationError("empty stroke set");
  for (const Stroke& s : strokes) validate_stroke(s);
  const Points2 lms = bundle.landmarks(frame);
  StrokeOutcome out;
  out.groups = make_landmark_groups(bundle.groups, lms);
  const double diag = bbox_diagonal(lms);
  const HmmConfig cfg = hmm_config(bundle, diag);
  out.sigma = cfg.sigma;
  out.mapping = viterbi_map(strokes, out.groups, cfg);

  if (frame != state.frame) state.deformed.clear();
  DeformConfig dcfg;
  dcfg.length_scale = diag;
  for (const StrokeAssignment& a : out.mapping.effective()) {
    const auto it = std::find_if(strokes.begin(), strokes.end(),
                                 [&](const Stroke& s) { return s.order_index == a.order_index; });
    const LandmarkGroup& g = out.groups[a.group_index];
    const StrokeMatch match = match_stroke(*it, g);
    state.deformed[g.name] = deform_group(g, match.keypoints, dcfg);
  }
  state.frame = frame;
  state.strokes = std::move(strokes);
  state.mapping = out.mapping;
  return out;
}

FaceMesh current_identity(const SessionBundle& bundle, const EditState& state) {
  if (state.identity.empty()) return bundle.mesh;
  return bundle.mesh.with_vertices(state.identity);
}

ApplyOutcome apply_edit(const SessionBundle& bundle, EditState& state) {
  if (state.deformed.empty()) throw ValidationError("nothing to apply: no deformed landmark groups");
  const int t = state.frame;
  const FrameParams& fp = bundle.frame(t);
  const ComposedShape shape = bundle.shape(t);
  const Vertices posed = transform_mesh(shape.shape, fp.pose);
  const auto& ids = bundle.mesh.landmark_vertex_ids;

  ApplyOutcome out;
  std::set<int> seen;
  for (const GroupDefinition& def : bundle.groups) {
    const auto it = state.deformed.find(def.name);
    if (it == state.deformed.end()) continue;
    for (std::size_t i = 0; i < def.landmark_indices.size(); ++i) {
      const int k = def.landmark_indices[i];
      const int v = ids[k];
      if (bundle.mesh.is_boundary(v)) {
        out.warnings.push_back("landmark " + std::to_string(k) + " lies on the fixed boundary and is ignored");
        continue;
      }
      if (!seen.insert(v).second) continue;
      // Displacements model tracking residuals, not geometry.
      const Vec2 pixel = it->second.points[i] - fp.displacements[k];
      const Vec3 lifted = estimate_modified_landmark_3d(pixel, posed[v], bundle.camera);
      out.constraints.push_back({v, to_identity_target(lifted, fp.pose, shape.expression_offset[v])});
    }
  }
  const TransferProblem problem = TransferProblem::make(bundle.mesh, out.constraints, TransferWeights::defaults());
  const FaceMesh result = transfer_identity(problem, &out.report);
  state.identity = result.vertices;
  state.edited_vertices.clear();
  for (const auto& c : out.constraints) state.edited_vertices.push_back(c.vertex_id);
  state.history.push_back({"apply", static_cast<int>(out.constraints.size()), out.report.max_displacement, out.warnings});
  return out;
}

ContourMap session_contours(const SessionBundle& bundle, const EditState& state, double yaw, double pitch) {
  const FaceMesh mesh = current_identity(bundle, state);
  return render_contours(mesh, contour_view(mesh, bundle.camera, yaw, pitch), bundle.camera);
}

RefineOutcome submit_refine(const SessionBundle& bundle, EditState& state, double yaw, double pitch,
                            const RefineEdit& edit) {
  const FaceMesh mesh = current_identity(bundle, state);
  const ContourMap map = render_contours(mesh, contour_view(mesh, bundle.camera, yaw, pitch), bundle.camera);
  Points2 all;
  for (const auto& pl : map.polylines) all.insert(all.end(), pl.points.begin(), pl.points.end());
  DeformConfig cfg;
  cfg.length_scale = bbox_diagonal(all);

  RefineOutcome out;
  out.refine = refine_constraints(map, edit, mesh, cfg);
  if (out.refine.constraints.empty()) return out;

  std::vector<LandmarkConstraint> constraints = out.refine.constraints;
  std::set<int> taken;
  for (const auto& c : constraints) taken.insert(c.vertex_id);
  for (int v : state.edited_vertices) {
    if (!taken.count(v) && !mesh.is_boundary(v)) constraints.push_back({v, mesh.vertices[v]});
  }
  const TransferProblem problem = TransferProblem::make(mesh, constraints, TransferWeights::refinement());
  const FaceMesh result = transfer_identity(problem, &out.report);
  state.identity = result.vertices;
  out.applied = true;
  state.history.push_back({"refine", static_cast<int>(out.refine.constraints.size()), out.report.max_displacement,
                           out.refine.warnings});
  return out;
}

// --- JSON ---

json points_to_json(std::span<const Vec2> pts) {
  json a = json::array();
  for (const Vec2& p : pts) a.push_back({p.x(), p.y()});
  return a;
}

std::vector<Stroke> strokes_from_json(const json& j) {
  if (!j.is_object() || !j.contains("strokes") || !j["strokes"].is_array()) {
    throw ValidationError("body must be {\"strokes\": [...]}");
  }
  std::vector<Stroke> out;
  for (const json& s : j["strokes"]) {
    if (!s.is_object() || !s.contains("points")) throw ValidationError("each stroke needs \"points\"");
    Stroke st;
    st.order_index = s.contains("order") ? s["order"].get<int>() : static_cast<int>(out.size());
    st.points = points_from_json(s["points"], "stroke points");
    out.push_back(std::move(st));
  }
  return out;
}

json strokes_to_json(std::span<const Stroke> strokes) {
  json a = json::array();
  for (const Stroke& s : strokes) a.push_back({{"order", s.order_index}, {"points", points_to_json(s.points)}});
  return {{"strokes", a}};
}

json mapping_to_json(const MappingResult& m) {
  json assignments = json::array();
  for (const auto& a : m.assignments) {
    assignments.push_back(
        {{"order", a.order_index}, {"group", a.group}, {"group_index", a.group_index}, {"distance", a.distance}});
  }
  json rejected = json::array();
  for (const auto& r : m.rejected) {
    rejected.push_back({{"order", r.order_index}, {"min_distance", r.min_distance}, {"reason", r.reason}});
  }
  return {{"assignments", assignments}, {"rejected", rejected}, {"superseded", m.superseded}};
}

namespace {

MappingResult mapping_from_json(const json& j) {
  MappingResult m;
  for (const json& a : j.at("assignments")) {
    m.assignments.push_back({a.at("order").get<int>(), a.at("group_index").get<int>(), a.at("group").get<std::string>(),
                             a.at("distance").get<double>()});
  }
  for (const json& r : j.at("rejected")) {
    m.rejected.push_back(
        {r.at("order").get<int>(), r.at("min_distance").get<double>(), r.at("reason").get<std::string>()});
  }
  m.superseded = j.at("superseded").get<std::vector<int>>();
  return m;
}

}  // namespace

json contour_map_to_json(const ContourMap& map) {
  json lines = json::array();
  for (const ContourPolyline& pl : map.polylines) {
    json depth = json::array();
    json vertex = json::array();
    for (const ContourSource& s : pl.sources) {
      depth.push_back(s.depth);
      vertex.push_back(s.vertex_id);
    }
    lines.push_back({{"label", label_name(pl.label)},
                     {"closed", pl.closed},
                     {"points", points_to_json(pl.points)},
                     {"depth", depth},
                     {"vertex", vertex}});
  }
  return {{"width", map.camera.width()}, {"height", map.camera.height()}, {"polylines", lines}};
}

RefineEdit refine_edit_from_json(const json& j) {
  if (!j.is_object() || !j.contains("erased_region") || !j.contains("stroke")) {
    throw ValidationError("refine body needs \"erased_region\" and \"stroke\"");
  }
  RefineEdit e;
  e.erased_region = points_from_json(j["erased_region"], "erased_region");
  const json& s = j["stroke"];
  e.replacement_stroke.points = points_from_json(s.is_object() ? s.value("points", json()) : s, "stroke points");
  return e;
}

json state_to_json(const EditState& s) {
  json deformed = json::array();
  for (const auto& [name, g] : s.deformed) {
    deformed.push_back(
        {{"name", name}, {"points", points_to_json(g.points)}, {"energy", g.energy}, {"iterations", g.iterations}});
  }
  json identity = json::array();
  for (const Vec3& v : s.identity) identity.push_back({v.x(), v.y(), v.z()});
  json history = json::array();
  for (const auto& h : s.history) {
    history.push_back({{"kind", h.kind},
                       {"constraints", h.constraints},
                       {"max_displacement", h.max_displacement},
                       {"warnings", h.warnings}});
  }
  return {{"frame", s.frame},
          {"strokes", strokes_to_json(s.strokes)["strokes"]},
          {"mapping", mapping_to_json(s.mapping)},
          {"deformed", deformed},
          {"identity", identity},
          {"edited_vertices", s.edited_vertices},
          {"history", history}};
}

EditState state_from_json(const json& j) {
  EditState s;
  s.frame = j.at("frame").get<int>();
  s.strokes = strokes_from_json({{"strokes", j.at("strokes")}});
  s.mapping = mapping_from_json(j.at("mapping"));
  for (const json& d : j.at("deformed")) {
    DeformedGroup g;
    g.name = d.at("name").get<std::string>();
    g.points = points_from_json(d.at("points"), "deformed points");
    g.energy = d.at("energy").get<double>();
    g.iterations = d.at("iterations").get<int>();
    s.deformed[g.name] = std::move(g);
  }
  for (const json& v : j.at("identity")) s.identity.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  s.edited_vertices = j.at("edited_vertices").get<std::vector<int>>();
  for (const json& h : j.at("history")) {
    s.history.push_back({h.at("kind").get<std::string>(), h.at("constraints").get<int>(),
                         h.at("max_displacement").get<double>(), h.at("warnings").get<std::vector<std::string>>()});
  }
  return s;
}

std::string session_id_for(const fs::path& bundle_root) {
  const std::string s = fs::weakly_canonical(fs::absolute(bundle_root)).string();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- Session ---

Session::Session(std::string id, SessionBundle bundle, fs::path state_file, int threads)
    : id_(std::move(id)), bundle_(std::move(bundle)), state_file_(std::move(state_file)), threads_(threads) {
  // Isomaps only depend on the original sequence, so they are built once up front.
  context_ = std::async(std::launch::async, [this] {
               return std::make_shared<const PropagationContext>(bundle_, threads_);
             }).share();
}

Session::~Session() {
  wait_for_jobs();
  if (context_.valid()) context_.wait();
}

void Session::wait_for_jobs() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(jobs_mutex_);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.join();
}

std::shared_ptr<const PropagationContext> Session::context() const { return context_.get(); }

void Session::persist() const {
  if (state_file_.empty()) return;
  const json doc = {{"id", id_}, {"bundle", bundle_.root.string()}, {"state", state_to_json(state_)}};
  const fs::path tmp = state_file_.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write session state " + tmp.string());
    out << doc.dump();
  }
  fs::rename(tmp, state_file_);
}

void Session::save() const {
  std::shared_lock lock(mutex_);
  persist();
}

EditState Session::state() const {
  std::shared_lock lock(mutex_);
  return state_;
}

void Session::restore(EditState s) {
  std::unique_lock lock(mutex_);
  if (!s.identity.empty() && static_cast<int>(s.identity.size()) != bundle_.mesh.vertex_count()) {
    throw ValidationError("stored identity does not match the bundle mesh");
  }
  state_ = std::move(s);
}

json Session::landmarks(int frame) const {
  std::shared_lock lock(mutex_);
  const Points2 lms = bundle_.landmarks(frame);
  json groups = json::array();
  for (const auto& g : make_landmark_groups(bundle_.groups, lms)) {
    groups.push_back({{"name", g.name}, {"landmarks", g.landmark_indices}, {"points", points_to_json(g.current_points)}});
  }
  json out = {{"frame", frame}, {"landmarks", points_to_json(lms)}, {"groups", groups}};
  if (!state_.identity.empty()) {
    const Vertices posed = bundle_.posed(frame, state_.identity);
    const FrameParams& fp = bundle_.frame(frame);
    Points2 mod;
    for (std::size_t k = 0; k < bundle_.mesh.landmark_vertex_ids.size(); ++k) {
      mod.push_back(project_landmark(posed[bundle_.mesh.landmark_vertex_ids[k]], bundle_.camera, fp.displacements[k]));
    }
    out["modified_landmarks"] = points_to_json(mod);
  }
  return out;
}

json Session::strokes(int frame, std::vector<Stroke> strokes) {
  std::unique_lock lock(mutex_);
  EditState next = state_;
  const StrokeOutcome r = submit_strokes(bundle_, next, frame, std::move(strokes));
  state_ = std::move(next);
  persist();

  json out = mapping_to_json(r.mapping);
  out["sigma"] = r.sigma;
  out["frame"] = frame;
  json deformed = json::array();
  Points2 overlay = bundle_.landmarks(frame);
  for (const auto& g : r.groups) {
    const auto it = state_.deformed.find(g.name);
    if (it == state_.deformed.end()) continue;
    deformed.push_back({{"name", g.name}, {"points", points_to_json(it->second.points)}});
    for (std::size_t i = 0; i < g.landmark_indices.size(); ++i) overlay[g.landmark_indices[i]] = it->second.points[i];
  }
  out["deformed"] = deformed;
  out["overlay"] = points_to_json(overlay);
  return out;
}

json Session::apply() {
  std::unique_lock lock(mutex_);
  EditState next = state_;
  const ApplyOutcome r = apply_edit(bundle_, next);
  state_ = std::move(next);
  persist();
  return {{"constraints", r.constraints.size()},
          {"free_vertices", r.report.free_vertices},
          {"unknowns", r.report.unknowns},
          {"iterative", r.report.iterative},
          {"max_displacement", r.report.max_displacement},
          {"warnings", r.warnings},
          {"history_length", state_.history.size()}};
}

json Session::contours(double yaw, double pitch) const {
  std::shared_lock lock(mutex_);
  json out = contour_map_to_json(session_contours(bundle_, state_, yaw, pitch));
  out["yaw"] = yaw;
  out["pitch"] = pitch;
  return out;
}

json Session::refine(double yaw, double pitch, const RefineEdit& edit) {
  std::unique_lock lock(mutex_);
  EditState next = state_;
  const RefineOutcome r = submit_refine(bundle_, next, yaw, pitch, edit);
  if (r.applied) {
    state_ = std::move(next);
    persist();
  }
  return {{"applied", r.applied},
          {"constraints", r.refine.constraints.size()},
          {"warnings", r.refine.warnings},
          {"erased", points_to_json(r.refine.erased)},
          {"fitted", points_to_json(r.refine.fitted)},
          {"max_displacement", r.report.max_displacement},
          {"history_length", state_.history.size()}};
}

json Session::start_propagation(const fs::path& out_dir) {
  std::lock_guard jobs_lock(jobs_mutex_);
  for (const auto& j : jobs_) {
    if (!j->finished) {
      return {{"job", j->id}, {"state", "running"}};
    }
  }
  auto job = std::make_shared<PropagationJob>();
  job->id = static_cast<int>(jobs_.size());
  job->total = bundle_.frame_count;
  job->out_dir = out_dir;
  FaceMesh identity = [&] {
    std::shared_lock lock(mutex_);
    return current_identity(bundle_, state_);
  }();
  jobs_.push_back(job);
  workers_.emplace_back([this, job, identity = std::move(identity)] {
    try {
      PropagateOptions opt;
      opt.threads = threads_;
      const auto frames = propagate(*context(), identity, opt, [&](int done, int) { job->done = done; });
      write_frames(job->out_dir, frames);
    } catch (const std::exception& e) {
      job->error = e.what();
    }
    job->finished = true;
  });
  return {{"job", job->id}, {"state", "running"}};
}

json Session::job(int id) const {
  std::shared_ptr<PropagationJob> j;
  {
    std::lock_guard lock(jobs_mutex_);
    if (id < 0 || id >= static_cast<int>(jobs_.size())) throw NotFoundError("unknown job " + std::to_string(id));
    j = jobs_[id];
  }
  const bool finished = j->finished;
  const int done = j->done;
  const std::string state = !finished ? "running" : j->error.empty() ? "done" : "failed";
  json out = {{"job", j->id},
              {"state", state},
              {"frames_done", done},
              {"frame_count", j->total},
              {"progress", j->total > 0 ? static_cast<double>(done) / j->total : 1.0},
              {"output_dir", j->out_dir.string()}};
  if (finished && !j->error.empty()) out["error"] = j->error;
  return out;
}

std::vector<std::uint8_t> Session::preview_png(int frame) const {
  if (frame < 0 || frame >= bundle_.frame_count) throw NotFoundError("frame " + std::to_string(frame) + " out of range");
  FaceMesh identity = [&] {
    std::shared_lock lock(mutex_);
    return current_identity(bundle_, state_);
  }();
  PropagateOptions opt;
  opt.threads = 1;
  return encode_png(downscale(propagate_frame(*context(), identity, frame, opt).image, 512));
}

// --- SessionManager ---

SessionManager::SessionManager(fs::path state_dir, int threads) : state_dir_(std::move(state_dir)), threads_(threads) {
  fs::create_directories(state_dir_ / "sessions");
  for (const auto& entry : fs::directory_iterator(state_dir_ / "sessions")) {
    if (entry.path().extension() != ".json") continue;
    try {
      std::ifstream in(entry.path());
      const json doc = json::parse(in);
      const std::string id = doc.at("id").get<std::string>();
      auto s = std::make_shared<Session>(id, load_bundle(doc.at("bundle").get<std::string>()), entry.path(), threads_);
      s->restore(state_from_json(doc.at("state")));
      sessions_[id] = std::move(s);
    } catch (const std::exception& e) {
      std::cerr << "skipping stored session " << entry.path() << ": " << e.what() << '\n';
    }
  }
}

std::string SessionManager::create(const fs::path& bundle_root) {
  const std::string id = session_id_for(bundle_root);
  {
    std::lock_guard lock(mutex_);
    if (sessions_.count(id)) return id;
  }
  SessionBundle bundle = load_bundle(bundle_root);
  auto s = std::make_shared<Session>(id, std::move(bundle), state_dir_ / "sessions" / (id + ".json"), threads_);
  s->save();
  std::lock_guard lock(mutex_);
  sessions_.emplace(id, std::move(s));
  return id;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + id);
  return it->second;
}

}  // namespace sketchface
