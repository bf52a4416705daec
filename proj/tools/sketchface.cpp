// sketchface: command line front end.
//
//   sketchface demo --out DIR
//   sketchface edit --bundle DIR --strokes strokes.json --out identity.obj
//   sketchface propagate --bundle DIR [--identity identity.obj] --out DIR
//   sketchface serve [--port 7865] [--state-dir DIR]

#include "sketchface/demo_head.hpp"
#include "sketchface/http_service.hpp"
#include "sketchface/session.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <numbers>

using namespace sketchface;
using json = nlohmann::json;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return json::parse(in);
}

int run_demo(const std::string& out, DemoOptions opt) {
  const SessionBundle b = write_demo_bundle(out, opt);
  std::cout << "wrote " << b.frame_count << " frames, " << b.mesh.vertex_count() << " vertices to " << out << '\n';
  return 0;
}

int run_edit(const std::string& bundle_dir, const std::string& strokes_file, int frame,
             const std::vector<std::string>& refine_files, const std::string& out) {
  const SessionBundle b = load_bundle(bundle_dir);
  const json strokes_doc = read_json_file(strokes_file);
  if (frame < 0) frame = strokes_doc.value("frame", 0);

  EditState state;
  state.frame = frame;
  const StrokeOutcome mapped = submit_strokes(b, state, frame, strokes_from_json(strokes_doc));
  json report = {{"mapping", mapping_to_json(mapped.mapping)}, {"sigma", mapped.sigma}};
  const ApplyOutcome applied = apply_edit(b, state);
  report["apply"] = {{"constraints", applied.constraints.size()},
                     {"max_displacement", applied.report.max_displacement},
                     {"warnings", applied.warnings}};

  report["refine"] = json::array();
  for (const std::string& f : refine_files) {
    const json doc = read_json_file(f);
    const json edits = doc.contains("edits") ? doc["edits"] : json::array({doc});
    for (const json& e : edits) {
      const double yaw = e.value("yaw", 0.0) * std::numbers::pi / 180.0;
      const double pitch = e.value("pitch", 0.0) * std::numbers::pi / 180.0;
      const RefineOutcome r = submit_refine(b, state, yaw, pitch, refine_edit_from_json(e));
      report["refine"].push_back({{"applied", r.applied},
                                  {"constraints", r.refine.constraints.size()},
                                  {"warnings", r.refine.warnings}});
    }
  }
  write_obj(out, current_identity(b, state));
  std::cout << report.dump(2) << '\n';
  return 0;
}

int run_propagate(const std::string& bundle_dir, const std::string& identity_file, const std::string& out,
                  PropagateOptions opt) {
  const SessionBundle b = load_bundle(bundle_dir);
  FaceMesh identity = b.mesh;
  if (!identity_file.empty()) {
    const FaceMesh edited = read_obj(identity_file);
    if (edited.triangles != b.mesh.triangles) throw ValidationError(identity_file + " does not share the bundle topology");
    identity = b.mesh.with_vertices(edited.vertices);
  }
  const auto t0 = std::chrono::steady_clock::now();
  const PropagationContext ctx(b, opt.threads);
  const auto t1 = std::chrono::steady_clock::now();
  const auto frames = propagate(ctx, identity, opt, [](int done, int total) {
    std::cerr << "\rframe " << done << "/" << total << std::flush;
  });
  const auto t2 = std::chrono::steady_clock::now();
  std::cerr << '\n';
  write_frames(out.empty() ? b.root / "out" : std::filesystem::path(out), frames);
  const double prep = std::chrono::duration<double>(t1 - t0).count();
  const double run = std::chrono::duration<double>(t2 - t1).count();
  std::cout << "isomaps " << prep << " s, frames " << run << " s (" << frames.size() / std::max(run, 1e-9)
            << " fps)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch-driven facial identity editing"};
  app.require_subcommand(1);

  DemoOptions demo_opt;
  std::string demo_out = "demo_bundle";
  auto* demo = app.add_subcommand("demo", "Generate the synthetic demo bundle");
  demo->add_option("--out", demo_out, "Bundle directory")->capture_default_str();
  demo->add_option("--frames", demo_opt.frames, "Frame count")->capture_default_str();
  demo->add_option("--grid", demo_opt.grid, "Vertices per side of the head grid")->capture_default_str();
  demo->add_option("--width", demo_opt.width)->capture_default_str();
  demo->add_option("--height", demo_opt.height)->capture_default_str();

  std::string bundle_dir, strokes_file, out_file, identity_file, out_dir;
  std::vector<std::string> refine_files;
  int frame = -1;
  auto* edit = app.add_subcommand("edit", "Map strokes, deform and transfer to the identity; writes an OBJ");
  edit->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  edit->add_option("--strokes", strokes_file, "Stroke JSON file")->required();
  edit->add_option("--frame", frame, "Edit frame (default: 'frame' in the stroke file, else 0)");
  edit->add_option("--refine", refine_files, "Refinement edit JSON files, applied in order");
  edit->add_option("--out", out_file, "Output OBJ")->required();

  PropagateOptions prop_opt;
  bool no_warp = false;
  auto* prop = app.add_subcommand("propagate", "Render an identity into every frame of a bundle");
  prop->add_option("--bundle", bundle_dir, "Bundle directory")->required();
  prop->add_option("--identity", identity_file, "Edited identity OBJ (default: unedited)");
  prop->add_option("--out", out_dir, "Output directory (default: BUNDLE/out)");
  prop->add_option("--threads", prop_opt.threads, "Worker threads, 0 = all cores")->capture_default_str();
  prop->add_option("--grid-step", prop_opt.grid_step, "MLS grid spacing in pixels")->capture_default_str();
  prop->add_flag("--no-warp", no_warp, "Skip the background warp");

  std::string host = "127.0.0.1";
  int port = kDefaultPort;
  std::string state_dir = ".sketchface";
  int threads = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP/JSON service");
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--state-dir", state_dir, "Where session state is kept")->capture_default_str();
  serve->add_option("--threads", threads, "Propagation worker threads, 0 = all cores")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*demo) return run_demo(demo_out, demo_opt);
    if (*edit) return run_edit(bundle_dir, strokes_file, frame, refine_files, out_file);
    if (*prop) {
      prop_opt.warp_background = !no_warp;
      return run_propagate(bundle_dir, identity_file, out_dir, prop_opt);
    }
    if (*serve) {
      SessionManager manager(state_dir, threads);
      if (!run_service(manager, host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << '\n';
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
