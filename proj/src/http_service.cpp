#include "sketchface/http_service.hpp"

#include <httplib.h>

#include <cmath>
#include <iostream>
#include <numbers>

namespace sketchface {

using json = nlohmann::json;

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs a handler and turns exceptions into JSON error responses.
template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const NotFoundError& e) {
    send_json(res, {{"error", e.what()}}, 404);
  } catch (const SolverError& e) {
    send_json(res, {{"error", e.what()}}, 422);
  } catch (const Error& e) {
    send_json(res, {{"error", e.what()}}, 400);
  } catch (const json::exception& e) {
    send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
  } catch (const std::exception& e) {
    send_json(res, {{"error", e.what()}}, 500);
  }
}

json body_json(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

int int_param(const httplib::Request& req, const std::string& name) {
  const std::string& s = req.path_params.at(name);
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(name + " must be an integer, got '" + s + "'");
}

double degrees_query(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) return 0.0;
  const std::string s = req.get_param_value(name);
  try {
    return std::stod(s) * std::numbers::pi / 180.0;
  } catch (const std::exception&) {
    throw ValidationError(name + " must be a number of degrees");
  }
}

double degrees_field(const json& j, const char* name) {
  return j.contains(name) ? j[name].get<double>() * std::numbers::pi / 180.0 : 0.0;
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/sessions", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = body_json(req);
      if (!body.contains("bundle")) throw ValidationError("body needs \"bundle\" (bundle directory path)");
      const std::string id = manager.create(body["bundle"].get<std::string>());
      const SessionBundle& b = manager.get(id)->bundle();
      send_json(res, {{"id", id},
                      {"frame_count", b.frame_count},
                      {"width", b.camera.width()},
                      {"height", b.camera.height()},
                      {"fps", b.fps}});
    });
  });

  server.Get("/sessions/:id/frames/:t/landmarks", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = manager.get(req.path_params.at("id"));
      const int t = int_param(req, "t");
      if (t < 0 || t >= s->bundle().frame_count) throw NotFoundError("frame " + std::to_string(t) + " out of range");
      send_json(res, s->landmarks(t));
    });
  });

  server.Post("/sessions/:id/strokes", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = manager.get(req.path_params.at("id"));
      const json body = body_json(req);
      const int frame = body.value("frame", 0);
      if (frame < 0 || frame >= s->bundle().frame_count) {
        throw ValidationError("frame " + std::to_string(frame) + " out of range");
      }
      send_json(res, s->strokes(frame, strokes_from_json(body)));
    });
  });

  server.Post("/sessions/:id/apply", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, manager.get(req.path_params.at("id"))->apply()); });
  });

  server.Get("/sessions/:id/contours", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = manager.get(req.path_params.at("id"));
      send_json(res, s->contours(degrees_query(req, "yaw"), degrees_query(req, "pitch")));
    });
  });

  server.Post("/sessions/:id/refine", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto s = manager.get(req.path_params.at("id"));
      const json body = body_json(req);
      send_json(res, s->refine(degrees_field(body, "yaw"), degrees_field(body, "pitch"), refine_edit_from_json(body)));
    });
  });

  server.Post("/sessions/:id/propagate", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.path_params.at("id");
      auto s = manager.get(id);
      const json body = body_json(req);
      const std::filesystem::path out =
          body.contains("out_dir") ? std::filesystem::path(body["out_dir"].get<std::string>())
                                   : manager.state_dir() / "sessions" / id / "out";
      send_json(res, s->start_propagation(out), 202);
    });
  });

  server.Get("/sessions/:id/jobs/:j", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, manager.get(req.path_params.at("id"))->job(int_param(req, "j"))); });
  });

  server.Get("/sessions/:id/preview/:t", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::vector<std::uint8_t> png = manager.get(req.path_params.at("id"))->preview_png(int_param(req, "t"));
      res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
  });
}

bool run_service(SessionManager& manager, const std::string& host, int port) {
  httplib::Server server;
  register_routes(server, manager);
  std::cerr << "listening on http://" << host << ":" << port << '\n';
  return server.listen(host, port);
}

}  // namespace sketchface
