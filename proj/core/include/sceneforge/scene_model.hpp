#pragma once

// The scene document written by `build`, its constraint validator and the
// glTF export.

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sceneforge/asset_library.hpp"
#include "sceneforge/geometry.hpp"

namespace sceneforge {

enum class ConstraintKind { relative, region, pose };
enum class ConstraintSource { explicit_, inferred };

// Relations understood by the validator. Other strings are carried through
// and reported as unverifiable.
inline constexpr const char* kKnownRelations[] = {
    "on_top_of", "in_front_of", "behind",       "left_of",       "right_of", "adjacent_to",
    "facing",    "aligned_with", "within_region", "distance",     "pose",
};

bool is_known_relation(const std::string& relation);

struct Constraint {
  std::string subject;
  ConstraintKind kind = ConstraintKind::relative;
  std::string relation;
  // Relative constraints only.
  std::string anchor;
  // "distance" only, in scene units.
  double min_distance = 0.0;
  double max_distance = 0.0;
  // Region constraints only.
  Aabb region;
  // Pose constraints only: target bottom-center and yaw.
  Vec3 position;
  double yaw = 0.0;
  ConstraintSource source = ConstraintSource::explicit_;

  friend bool operator==(const Constraint&, const Constraint&) = default;
};

struct Placement {
  std::string slot_id;
  std::string asset_id;
  std::string display_name;
  // Canonical (front-aligned) extents of the asset.
  Vec3 size;
  Vec3 position;
  EulerRotation rotation;
  // Always size_after_rotation(size, rotation).
  RotatedSize rotated_size;
  // e.g. "clamped", "out_of_bounds", "repaired".
  std::vector<std::string> flags;

  Aabb aabb() const { return placement_aabb(position, size, rotation); }
  bool has_flag(const std::string& flag) const;

  friend bool operator==(const Placement&, const Placement&) = default;
};

// Builds a placement with its derived rotated size.
Placement make_placement(std::string slot_id, std::string asset_id, std::string display_name,
                         const Vec3& size, const Vec3& position, const EulerRotation& rotation);

enum class VerdictAction { keep, move };
enum class VerdictFlag { none, degraded, rejected_move, noop_move };

struct RefinementVerdict {
  std::string slot_id;
  VerdictAction action = VerdictAction::keep;
  // Requested pose for a move (kept for audit even when rejected).
  std::optional<Vec3> position;
  std::optional<EulerRotation> rotation;
  std::string rationale;
  VerdictFlag flag = VerdictFlag::none;
  int sweep = 1;

  // A keep the provider chose, as opposed to one forced by a fallback.
  bool is_benign_keep() const {
    return action == VerdictAction::keep && flag == VerdictFlag::none;
  }

  friend bool operator==(const RefinementVerdict&, const RefinementVerdict&) = default;
};

using SlotPair = std::pair<std::string, std::string>;

struct CollisionReport {
  std::vector<Overlap> overlaps;
  // Overlapping pairs the refinement pass kept on purpose, sorted.
  std::vector<SlotPair> benign;

  bool is_benign(const Overlap& overlap) const;
  std::size_t non_benign_count() const;

  friend bool operator==(const CollisionReport&, const CollisionReport&) = default;
};

std::vector<BoxEntry> placement_boxes(const std::vector<Placement>& placements);

struct SceneDocument {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  std::string prompt;
  Aabb bounds;
  double buffer = kDefaultCollisionBuffer;
  std::vector<Placement> placements;
  std::vector<Constraint> constraints;
  std::vector<RefinementVerdict> verdicts;
  CollisionReport collision_report;
  // Provider tag, versions and run notes. Deliberately free of wall-clock
  // time so identical runs produce identical bytes.
  nlohmann::json meta = nlohmann::json::object();

  const Placement* find(const std::string& slot_id) const;

  // Recomputes overlaps from the placements, keeping benign pairs that
  // still overlap.
  void refresh_collisions();

  friend bool operator==(const SceneDocument&, const SceneDocument&) = default;
};

nlohmann::json to_json(const SceneDocument& doc);
// Throws FormatVersionError for a newer schema and FormatError otherwise.
SceneDocument scene_from_json(const nlohmann::json& j);

std::string serialize_scene(const SceneDocument& doc);
SceneDocument parse_scene(const std::string& text);

void export_json(const SceneDocument& doc, const std::filesystem::path& path);
SceneDocument import_json(const std::filesystem::path& path);

nlohmann::json to_json(const Constraint& c);
Constraint constraint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Placement& p);
Placement placement_from_json(const nlohmann::json& j);

std::string_view to_string(VerdictFlag flag);

// ---- validation ----

struct ValidationOptions {
  // Vertical slack for on_top_of; negative means use the document buffer.
  double support_tolerance = -1.0;
  double facing_tolerance_deg = 30.0;
  double alignment_tolerance_deg = 5.0;
  double adjacency_gap = 0.3;
  double pose_position_tolerance = 0.1;
  double pose_yaw_tolerance_deg = 5.0;
};

enum class ConstraintOutcome { satisfied, violated, unverifiable };
std::string_view to_string(ConstraintOutcome outcome);

struct ConstraintCheck {
  std::size_t index = 0;
  ConstraintOutcome outcome = ConstraintOutcome::unverifiable;
  // Relation-specific quantity, e.g. the measured distance.
  double measure = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<ConstraintCheck> checks;  // one per constraint, same order
  std::size_t satisfied = 0;
  std::size_t violated = 0;
  std::size_t unverifiable = 0;
  std::size_t non_benign_overlaps = 0;
  std::size_t out_of_bounds = 0;
};

// Anchor-frame axes for a yaw: forward is +Y at yaw 0, right is +X.
Vec3 forward_direction(double yaw);
Vec3 right_direction(double yaw);

ConstraintCheck check_constraint(const SceneDocument& doc, std::size_t index,
                                 const ValidationOptions& options = {});
ValidationReport validate(const SceneDocument& doc, const ValidationOptions& options = {});

nlohmann::json to_json(const ValidationReport& report, const SceneDocument& doc);
std::string format_report_table(const ValidationReport& report, const SceneDocument& doc);

// ---- glTF ----

// Binary glTF with one node per placement plus a ground plane. Meshes are
// read from the manifest's mesh paths; throws ExportError listing the asset
// ids whose meshes are missing or unreadable.
void export_gltf(const SceneDocument& doc, const LibraryManifest& manifest,
                 const std::filesystem::path& path);

// Unit quaternion (x, y, z, w) of a rotation matrix.
std::array<double, 4> quaternion_from_matrix(const Mat3& m);

}  // namespace sceneforge
