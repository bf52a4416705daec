#pragma once

#include "sketchface/bundle.hpp"
#include "sketchface/contour_refine.hpp"
#include "sketchface/identity_transfer.hpp"
#include "sketchface/landmark_deform.hpp"
#include "sketchface/propagate.hpp"
#include "sketchface/sketch_mapping.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <thread>

namespace sketchface {

class NotFoundError : public Error {
 public:
  using Error::Error;
};

struct HistoryEntry {
  std::string kind;  // "apply" or "refine"
  int constraints = 0;
  double max_displacement = 0.0;
  std::vector<std::string> warnings;
};

/// Editing state of one session. `identity` is empty until the first apply.
struct EditState {
  int frame = 0;
  std::vector<Stroke> strokes;
  MappingResult mapping;
  std::map<std::string, DeformedGroup> deformed;
  Vertices identity;
  std::vector<int> edited_vertices;  // vertices constrained by the last apply
  std::vector<HistoryEntry> history;
};

struct StrokeOutcome {
  MappingResult mapping;
  std::vector<LandmarkGroup> groups;  // positions at the edit frame
  double sigma = 0.0;
};

struct ApplyOutcome {
  std::vector<LandmarkConstraint> constraints;
  TransferReport report;
  std::vector<std::string> warnings;
};

struct RefineOutcome {
  RefineResult refine;
  bool applied = false;
  TransferReport report;
};

// Pipeline steps on a bundle and an edit state. These do no locking.

/// Maps strokes drawn on `frame` and deforms every matched group. Groups from
/// earlier submissions survive unless re-drawn; a new frame starts over.
StrokeOutcome submit_strokes(const SessionBundle& bundle, EditState& state, int frame, std::vector<Stroke> strokes);

/// Lifts every deformed group to identity-space constraints and solves from
/// the bundle identity with the default weights.
ApplyOutcome apply_edit(const SessionBundle& bundle, EditState& state);

FaceMesh current_identity(const SessionBundle& bundle, const EditState& state);

ContourMap session_contours(const SessionBundle& bundle, const EditState& state, double yaw, double pitch);

/// Re-solves from the current identity with boosted weights. Previously edited
/// landmark vertices are pinned where they are. No-overlap edits only warn.
RefineOutcome submit_refine(const SessionBundle& bundle, EditState& state, double yaw, double pitch,
                            const RefineEdit& edit);

// JSON forms shared by the service and the CLI.

std::vector<Stroke> strokes_from_json(const nlohmann::json& j);
nlohmann::json strokes_to_json(std::span<const Stroke> strokes);
nlohmann::json mapping_to_json(const MappingResult& m);
nlohmann::json contour_map_to_json(const ContourMap& map);
RefineEdit refine_edit_from_json(const nlohmann::json& j);
nlohmann::json state_to_json(const EditState& s);
EditState state_from_json(const nlohmann::json& j);
nlohmann::json points_to_json(std::span<const Vec2> pts);

/// Stable session id for a bundle path (FNV-1a of the absolute path).
std::string session_id_for(const std::filesystem::path& bundle_root);

struct PropagationJob {
  int id = 0;
  int total = 0;
  std::atomic<int> done{0};
  std::atomic<bool> finished{false};
  std::string error;  // written before `finished` is set
  std::filesystem::path out_dir;
};

/// One loaded bundle with its editing state. Mutations take the exclusive
/// lock and persist the state; reads share the lock.
class Session {
 public:
  Session(std::string id, SessionBundle bundle, std::filesystem::path state_file, int threads);
  ~Session();

  const std::string& id() const { return id_; }
  const SessionBundle& bundle() const { return bundle_; }

  nlohmann::json landmarks(int frame) const;
  nlohmann::json strokes(int frame, std::vector<Stroke> strokes);
  nlohmann::json apply();
  nlohmann::json contours(double yaw, double pitch) const;
  nlohmann::json refine(double yaw, double pitch, const RefineEdit& edit);
  /// Starts a job unless one is running (then that job is returned).
  nlohmann::json start_propagation(const std::filesystem::path& out_dir);
  nlohmann::json job(int id) const;
  std::vector<std::uint8_t> preview_png(int frame) const;

  EditState state() const;
  void restore(EditState s);
  void save() const;
  void wait_for_jobs();

 private:
  void persist() const;
  std::shared_ptr<const PropagationContext> context() const;

  std::string id_;
  SessionBundle bundle_;
  std::filesystem::path state_file_;
  int threads_;
  mutable std::shared_mutex mutex_;
  EditState state_;
  std::shared_future<std::shared_ptr<const PropagationContext>> context_;
  mutable std::mutex jobs_mutex_;
  std::vector<std::shared_ptr<PropagationJob>> jobs_;
  std::vector<std::thread> workers_;
};

/// Sessions keyed by id, persisted under `state_dir`. Sessions found there are
/// restored at construction.
class SessionManager {
 public:
  explicit SessionManager(std::filesystem::path state_dir, int threads = 0);

  /// Loads the bundle, or returns the existing session for the same path.
  std::string create(const std::filesystem::path& bundle_root);
  std::shared_ptr<Session> get(const std::string& id) const;
  const std::filesystem::path& state_dir() const { return state_dir_; }

 private:
  std::filesystem::path state_dir_;
  int threads_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace sketchface
