#pragma once

#include "sketchface/session.hpp"

#include <string>

namespace httplib {
class Server;
}

namespace sketchface {

inline constexpr int kDefaultPort = 7865;

/// Installs the JSON endpoints on `server`. Library errors map to 400
/// (bad input), 404 (unknown session, job or frame), 422 (unsolvable edit) and 500.
void register_routes(httplib::Server& server, SessionManager& manager);

/// Serves until the process is stopped. Returns false if the port cannot be bound.
bool run_service(SessionManager& manager, const std::string& host, int port);

}  // namespace sketchface
