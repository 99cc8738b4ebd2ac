#pragma once

// Two-phase placement: constraints, placement order, one provider call per
// object in order, then a collision-driven refinement sweep.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sceneforge/asset_library.hpp"
#include "sceneforge/error.hpp"
#include "sceneforge/model_provider.hpp"
#include "sceneforge/retrieval.hpp"
#include "sceneforge/scene_model.hpp"

namespace sceneforge {

struct SceneSlot {
  std::string slot_id;
  std::string asset_id;
  std::string display_name;
  // Canonical extents (front offset applied).
  Vec3 size;
};

struct SceneSpec {
  std::string prompt;
  Aabb bounds;
  std::vector<SceneSlot> slots;

  const SceneSlot* find(const std::string& slot_id) const;
};

// Slots for every Selected decision, in decision order. Throws
// std::invalid_argument for duplicate slot ids or unknown assets.
SceneSpec make_scene_spec(const std::string& prompt, const Aabb& bounds,
                          const std::vector<RetrievalDecision>& decisions,
                          const LibraryManifest& manifest);

// Coordinate convention the provider reasons in. Left-handed providers see
// y mirrored, with yaw and roll negated; the core stays right-handed.
enum class Handedness { right, left };

Vec3 to_provider_frame(const Vec3& v, Handedness h);
Vec3 from_provider_frame(const Vec3& v, Handedness h);
EulerRotation to_provider_frame(const EulerRotation& r, Handedness h);
EulerRotation from_provider_frame(const EulerRotation& r, Handedness h);
Aabb to_provider_frame(const Aabb& b, Handedness h);
Aabb from_provider_frame(const Aabb& b, Handedness h);

// "1.5", "-0.25", "3": up to four decimals, trailing zeros dropped.
std::string format_number(double v);

// One JSON object per provider interaction, in call order.
class AuditLog {
 public:
  void add(nlohmann::json record);
  const std::vector<nlohmann::json>& records() const { return records_; }
  std::vector<nlohmann::json> stage(const std::string& name) const;
  std::string to_jsonl() const;

 private:
  std::vector<nlohmann::json> records_;
};

struct LayoutOptions {
  double buffer = kDefaultCollisionBuffer;
  Handedness provider_handedness = Handedness::right;
  bool skip_refinement = false;
  // 1 to 3 refinement sweeps.
  int refinement_sweeps = 1;
};

struct ConstraintExtraction {
  std::vector<Constraint> constraints;
  std::vector<std::string> warnings;
  // The provider never produced a valid reply; constraints are empty.
  bool degraded = false;
};

ConstraintExtraction extract_constraints(const SceneSpec& spec, ProviderClient& client,
                                         const LayoutOptions& options = {},
                                         AuditLog* audit = nullptr);

// Turns one reply entry into a constraint, or explains why it was dropped.
std::optional<Constraint> resolve_constraint(const nlohmann::json& entry, const SceneSpec& spec,
                                             Handedness handedness, std::string& why_dropped);

struct SlotOrder {
  std::vector<std::string> order;
  std::vector<std::string> warnings;
  // Slots whose on_top_of dependencies formed a cycle; each entry lists the
  // blocked slots at the moment the cycle was broken.
  std::vector<std::vector<std::string>> cycles;
};

// Makes `proposed` a permutation of the scene's slots in which every on_top_of
// anchor precedes its subject, staying as close to `proposed` as possible.
SlotOrder repair_order(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                       const std::vector<std::string>& proposed);

SlotOrder order_slots(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                      ProviderClient& client, AuditLog* audit = nullptr);

class PlacementError : public Error {
 public:
  PlacementError(const std::string& message, std::string slot_id,
                 std::vector<Placement> partial = {})
      : Error(message), slot_id_(std::move(slot_id)), partial_(std::move(partial)) {}

  const std::string& slot_id() const { return slot_id_; }
  const std::vector<Placement>& partial() const { return partial_; }
  void set_partial(std::vector<Placement> partial) { partial_ = std::move(partial); }

 private:
  std::string slot_id_;
  std::vector<Placement> partial_;
};

// Moves a box back inside `bounds` without touching its rotation. Objects
// larger than the room are centered on that axis and rest on the floor.
Vec3 clamp_to_bounds(const Vec3& position, const RotatedSize& rotated, const Aabb& bounds);

Placement place_next(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                     const std::vector<Placement>& placed, const std::string& slot_id,
                     ProviderClient& client, const LayoutOptions& options = {},
                     AuditLog* audit = nullptr);

// Throws PlacementError carrying the placements made so far.
std::vector<Placement> initial_pass(const SceneSpec& spec,
                                    const std::vector<Constraint>& constraints,
                                    const std::vector<std::string>& order, ProviderClient& client,
                                    const LayoutOptions& options = {}, AuditLog* audit = nullptr);

struct RefinementResult {
  std::vector<Placement> placements;
  std::vector<RefinementVerdict> verdicts;
  // Pairs kept on purpose, sorted.
  std::vector<SlotPair> benign;
  std::size_t provider_calls = 0;
};

RefinementResult refine_pass(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                             std::vector<Placement> placements, ProviderClient& client,
                             const LayoutOptions& options = {}, AuditLog* audit = nullptr);

class SceneBuildError : public Error {
 public:
  SceneBuildError(const std::string& message, SceneDocument partial)
      : Error(message), partial_(std::move(partial)) {}
  const SceneDocument& partial() const { return partial_; }

 private:
  SceneDocument partial_;
};

// Full pipeline from resolved retrieval decisions to a scene document.
// Throws SceneBuildError with the partial document on a placement failure.
SceneDocument build_scene(const std::string& prompt, const Aabb& bounds,
                          const std::vector<RetrievalDecision>& decisions,
                          const LibraryManifest& manifest, ProviderClient& client,
                          const LayoutOptions& options = {}, AuditLog* audit = nullptr);

}  // namespace sceneforge
