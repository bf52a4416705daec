#include "sketchface/bundle.hpp"
#include "sketchface/isomap.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace sketchface {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing bundle file " + path.filename().string() + " (" + path.string() + ")");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.filename().string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

// Field access that reports file and JSON path on failure.
template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": field '" + key + "' has the wrong type");
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string frame_file_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", t);
  return buf;
}

fs::path SessionBundle::frame_path(int t) const { return root / "frames" / frame_file_name(t); }

FrameImage SessionBundle::load_frame(int t) const {
  if (t < 0 || t >= frame_count) throw ValidationError("frame index " + std::to_string(t) + " out of range");
  FrameImage img = read_png(frame_path(t));
  if (img.width != camera.width() || img.height != camera.height()) {
    throw ValidationError(frame_file_name(t) + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                          ", meta.json says " + std::to_string(camera.width()) + "x" +
                          std::to_string(camera.height()));
  }
  return img;
}

const FrameParams& SessionBundle::frame(int t) const {
  if (t < 0 || t >= static_cast<int>(params.size())) {
    throw ValidationError("missing parameters for frame " + std::to_string(t));
  }
  return params[t];
}

ComposedShape SessionBundle::shape(int t) const { return compose_shape(blendshapes, frame(t).expression); }

Vertices SessionBundle::posed(int t, std::span<const Vec3> identity_vertices) const {
  const ComposedShape s = shape(t);
  if (identity_vertices.size() != s.expression_offset.size()) throw DimensionError("identity vertex count mismatch");
  Vertices v(identity_vertices.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = identity_vertices[i] + s.expression_offset[i];
  return transform_mesh(v, frame(t).pose);
}

Points2 SessionBundle::landmarks(int t) const {
  const Vertices p = posed(t, mesh.vertices);
  const FrameParams& fp = frame(t);
  Points2 out;
  for (std::size_t k = 0; k < mesh.landmark_vertex_ids.size(); ++k) {
    out.push_back(project_landmark(p[mesh.landmark_vertex_ids[k]], camera, fp.displacements[k]));
  }
  return out;
}

SessionBundle load_bundle(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("bundle directory not found: " + root.string());
  SessionBundle b;
  b.root = fs::absolute(root);

  const json meta = read_json(root / "meta.json");
  const json cam = meta.contains("camera") ? meta["camera"] : json();
  const auto pp = field<std::vector<double>>(cam, "principal_point", "meta.json camera");
  if (pp.size() != 2) throw ValidationError("meta.json camera: principal_point must have 2 entries");
  b.camera = Camera(field<double>(cam, "focal", "meta.json camera"), Vec2(pp[0], pp[1]),
                    field<int>(meta, "width", "meta.json"), field<int>(meta, "height", "meta.json"));
  b.fps = field<double>(meta, "fps", "meta.json");
  b.frame_count = field<int>(meta, "frame_count", "meta.json");
  b.isomap_size = meta.value("isomap_size", isomap_size_for_height(b.camera.height()));
  b.identity.u = to_vector(field<std::vector<double>>(meta, "identity", "meta.json"));

  const json groups = read_json(root / "groups.json");
  auto landmark_ids = field<std::vector<int>>(groups, "landmark_vertex_ids", "groups.json");
  for (const json& g : field<json>(groups, "groups", "groups.json")) {
    b.groups.push_back({field<std::string>(g, "name", "groups.json groups[]"),
                        field<std::vector<int>>(g, "landmarks", "groups.json groups[]")});
  }
  if (groups.contains("relation_pairs")) {
    for (const json& p : groups["relation_pairs"]) {
      if (!p.is_array() || p.size() != 2) throw ValidationError("groups.json: relation_pairs entries must be pairs");
      b.relation_pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  }
  b.boost_factor = groups.value("boost_factor", 2.0);
  if (groups.contains("sigma") && !groups["sigma"].is_null()) b.sigma = groups["sigma"].get<double>();

  const FaceMesh template_mesh = read_obj(root / "mesh.obj", landmark_ids);
  b.core = read_core(root / "core.fctn");
  if (b.core.n_vertices() != template_mesh.vertex_count()) {
    throw ValidationError("core.fctn has " + std::to_string(b.core.n_vertices()) + " vertices, mesh.obj has " +
                          std::to_string(template_mesh.vertex_count()));
  }
  if (b.identity.u.size() != b.core.n_identity()) {
    throw ValidationError("meta.json identity has " + std::to_string(b.identity.u.size()) +
                          " entries, core.fctn expects " + std::to_string(b.core.n_identity()));
  }
  b.blendshapes = build_blendshapes(b.core, b.identity);
  b.mesh = FaceMesh::build(b.blendshapes.neutral(), template_mesh.triangles, template_mesh.landmark_vertex_ids,
                           template_mesh.uvs);
  // Validates group partition against the landmark count.
  make_landmark_groups(b.groups, Points2(landmark_ids.size(), Vec2::Zero()));

  const json params = read_json(root / "params.json");
  const int n_weights = b.blendshapes.count() - 1;
  for (const json& f : field<json>(params, "frames", "params.json")) {
    const std::string where = "params.json frames[" + std::to_string(b.params.size()) + "]";
    FrameParams fp;
    fp.frame_index = field<int>(f, "index", where);
    if (fp.frame_index != static_cast<int>(b.params.size())) {
      throw ValidationError(where + ": index " + std::to_string(fp.frame_index) + " out of sequence");
    }
    const auto rot = field<std::vector<std::vector<double>>>(f, "rotation", where);
    const auto tr = field<std::vector<double>>(f, "translation", where);
    if (rot.size() != 3 || tr.size() != 3) throw ValidationError(where + ": rotation must be 3x3, translation 3");
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      if (rot[i].size() != 3) throw ValidationError(where + ": rotation must be 3x3");
      for (int k = 0; k < 3; ++k) r(i, k) = rot[i][k];
    }
    try {
      fp.pose = RigidPose(r, Vec3(tr[0], tr[1], tr[2]));
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    fp.expression.e = to_vector(field<std::vector<double>>(f, "expression", where));
    if (fp.expression.e.size() != n_weights) {
      throw ValidationError(where + ": expression has " + std::to_string(fp.expression.e.size()) +
                            " weights, expected " + std::to_string(n_weights));
    }
    for (const auto& d : field<std::vector<std::vector<double>>>(f, "displacements", where)) {
      if (d.size() != 2) throw ValidationError(where + ": displacements must be 2D");
      fp.displacements.emplace_back(d[0], d[1]);
    }
    if (fp.displacements.size() != landmark_ids.size()) {
      throw ValidationError(where + ": " + std::to_string(fp.displacements.size()) + " displacements for " +
                            std::to_string(landmark_ids.size()) + " landmarks");
    }
    b.params.push_back(std::move(fp));
  }

  const json tracks = read_json(root / "tracks.json");
  for (const json& f : field<json>(tracks, "frames", "tracks.json")) {
    std::vector<ControlPair> pairs;
    for (const auto& p : field<std::vector<std::vector<double>>>(f, "pairs", "tracks.json frames[]")) {
      if (p.size() != 4) throw ValidationError("tracks.json: pairs must be [sx, sy, dx, dy]");
      pairs.push_back({Vec2(p[0], p[1]), Vec2(p[2], p[3])});
    }
    b.tracks.push_back(std::move(pairs));
  }

  int frames_on_disk = 0;
  if (fs::is_directory(root / "frames")) {
    for (const auto& entry : fs::directory_iterator(root / "frames")) {
      if (entry.path().extension() == ".png") ++frames_on_disk;
    }
  }
  if (static_cast<int>(b.params.size()) != b.frame_count || frames_on_disk != b.frame_count ||
      static_cast<int>(b.tracks.size()) != b.frame_count) {
    throw ValidationError("frame count mismatch: meta.json frame_count=" + std::to_string(b.frame_count) +
                          ", params.json has " + std::to_string(b.params.size()) + ", tracks.json has " +
                          std::to_string(b.tracks.size()) + ", frames/ has " + std::to_string(frames_on_disk));
  }
  for (int t = 0; t < b.frame_count; ++t) {
    if (!fs::exists(b.frame_path(t))) throw IoError("missing frame file frames/" + frame_file_name(t));
  }
  return b;
}

void save_bundle_metadata(const fs::path& root, const SessionBundle& b) {
  fs::create_directories(root / "frames");
  json meta;
  meta["camera"] = {{"focal", b.camera.focal()},
                    {"principal_point", {b.camera.principal_point().x(), b.camera.principal_point().y()}}};
  meta["width"] = b.camera.width();
  meta["height"] = b.camera.height();
  meta["fps"] = b.fps;
  meta["frame_count"] = b.frame_count;
  meta["isomap_size"] = b.isomap_size;
  meta["identity"] = std::vector<double>(b.identity.u.data(), b.identity.u.data() + b.identity.u.size());
  write_json(root / "meta.json", meta);

  json groups;
  groups["landmark_vertex_ids"] = b.mesh.landmark_vertex_ids;
  groups["groups"] = json::array();
  for (const auto& g : b.groups) groups["groups"].push_back({{"name", g.name}, {"landmarks", g.landmark_indices}});
  groups["relation_pairs"] = json::array();
  for (const auto& [x, y] : b.relation_pairs) groups["relation_pairs"].push_back({x, y});
  groups["boost_factor"] = b.boost_factor;
  groups["sigma"] = b.sigma ? json(*b.sigma) : json(nullptr);
  write_json(root / "groups.json", groups);

  json params;
  params["frames"] = json::array();
  for (const FrameParams& fp : b.params) {
    json f;
    f["index"] = fp.frame_index;
    const Mat3& r = fp.pose.rotation();
    f["rotation"] = {{r(0, 0), r(0, 1), r(0, 2)}, {r(1, 0), r(1, 1), r(1, 2)}, {r(2, 0), r(2, 1), r(2, 2)}};
    const Vec3& t = fp.pose.translation();
    f["translation"] = {t.x(), t.y(), t.z()};
    f["expression"] = std::vector<double>(fp.expression.e.data(), fp.expression.e.data() + fp.expression.e.size());
    f["displacements"] = json::array();
    for (const Vec2& d : fp.displacements) f["displacements"].push_back({d.x(), d.y()});
    params["frames"].push_back(std::move(f));
  }
  write_json(root / "params.json", params);

  json tracks;
  tracks["frames"] = json::array();
  for (std::size_t t = 0; t < b.tracks.size(); ++t) {
    json f;
    f["index"] = t;
    f["pairs"] = json::array();
    for (const auto& c : b.tracks[t]) f["pairs"].push_back({c.src.x(), c.src.y(), c.dst.x(), c.dst.y()});
    tracks["frames"].push_back(std::move(f));
  }
  write_json(root / "tracks.json", tracks);

  write_obj(root / "mesh.obj", b.mesh);
  write_core(root / "core.fctn", b.core);
}

}  // namespace sketchface
