#include "sceneforge/scene_model.hpp"

#include <algorithm>
#include <set>

#include "sceneforge/error.hpp"
#include "sceneforge/paths.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

json vec(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-element array");
  Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!is_finite(v)) throw FormatError("non-finite vector component");
  return v;
}

json box(const Aabb& b) { return {{"min", vec(b.min)}, {"max", vec(b.max)}}; }

Aabb box_from(const json& j) {
  try {
    return Aabb::from_min_max(vec_from(j.at("min")), vec_from(j.at("max")));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
}

json rotation(const EulerRotation& r) {
  return {{"yaw", r.yaw()}, {"pitch", r.pitch()}, {"roll", r.roll()}};
}

EulerRotation rotation_from(const json& j) {
  return {j.at("yaw").get<double>(), j.at("pitch").get<double>(), j.at("roll").get<double>()};
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::relative: return "relative";
    case ConstraintKind::region: return "region";
    case ConstraintKind::pose: return "pose";
  }
  return "relative";
}

ConstraintKind kind_from(const std::string& s) {
  if (s == "relative") return ConstraintKind::relative;
  if (s == "region") return ConstraintKind::region;
  if (s == "pose") return ConstraintKind::pose;
  throw FormatError("unknown constraint kind '" + s + "'");
}

VerdictFlag flag_from(const std::string& s) {
  for (auto f : {VerdictFlag::none, VerdictFlag::degraded, VerdictFlag::rejected_move,
                 VerdictFlag::noop_move}) {
    if (to_string(f) == s) return f;
  }
  throw FormatError("unknown verdict flag '" + s + "'");
}

json to_json(const RefinementVerdict& v) {
  json j{{"slot_id", v.slot_id},
         {"action", v.action == VerdictAction::keep ? "keep" : "move"},
         {"rationale", v.rationale},
         {"flag", std::string(to_string(v.flag))},
         {"sweep", v.sweep}};
  if (v.position) j["position"] = vec(*v.position);
  if (v.rotation) j["rotation"] = rotation(*v.rotation);
  return j;
}

RefinementVerdict verdict_from(const json& j) {
  RefinementVerdict v;
  v.slot_id = j.at("slot_id").get<std::string>();
  const auto action = j.at("action").get<std::string>();
  if (action != "keep" && action != "move") throw FormatError("unknown verdict action " + action);
  v.action = action == "keep" ? VerdictAction::keep : VerdictAction::move;
  v.rationale = j.at("rationale").get<std::string>();
  v.flag = flag_from(j.at("flag").get<std::string>());
  v.sweep = j.at("sweep").get<int>();
  if (j.contains("position")) v.position = vec_from(j["position"]);
  if (j.contains("rotation")) v.rotation = rotation_from(j["rotation"]);
  return v;
}

}  // namespace

bool is_known_relation(const std::string& relation) {
  return std::any_of(std::begin(kKnownRelations), std::end(kKnownRelations),
                     [&](const char* r) { return relation == r; });
}

bool Placement::has_flag(const std::string& flag) const {
  return std::find(flags.begin(), flags.end(), flag) != flags.end();
}

Placement make_placement(std::string slot_id, std::string asset_id, std::string display_name,
                         const Vec3& size, const Vec3& position, const EulerRotation& rotation) {
  if (!is_finite(position)) throw std::invalid_argument("placement position is not finite");
  Placement p;
  p.slot_id = std::move(slot_id);
  p.asset_id = std::move(asset_id);
  p.display_name = std::move(display_name);
  p.size = size;
  p.position = position;
  p.rotation = rotation;
  p.rotated_size = size_after_rotation(size, rotation);
  return p;
}

std::string_view to_string(VerdictFlag flag) {
  switch (flag) {
    case VerdictFlag::none: return "none";
    case VerdictFlag::degraded: return "degraded";
    case VerdictFlag::rejected_move: return "rejected_move";
    case VerdictFlag::noop_move: return "noop_move";
  }
  return "none";
}

bool CollisionReport::is_benign(const Overlap& overlap) const {
  return std::binary_search(benign.begin(), benign.end(), SlotPair{overlap.a_id, overlap.b_id});
}

std::size_t CollisionReport::non_benign_count() const {
  return static_cast<std::size_t>(std::count_if(
      overlaps.begin(), overlaps.end(), [&](const Overlap& o) { return !is_benign(o); }));
}

std::vector<BoxEntry> placement_boxes(const std::vector<Placement>& placements) {
  std::vector<BoxEntry> boxes;
  boxes.reserve(placements.size());
  for (const auto& p : placements) boxes.push_back({p.slot_id, p.aabb()});
  return boxes;
}

const Placement* SceneDocument::find(const std::string& slot_id) const {
  auto it = std::find_if(placements.begin(), placements.end(),
                         [&](const Placement& p) { return p.slot_id == slot_id; });
  return it == placements.end() ? nullptr : &*it;
}

void SceneDocument::refresh_collisions() {
  const auto boxes = placement_boxes(placements);
  collision_report.overlaps = detect_collisions(boxes, buffer);
  std::set<SlotPair> live;
  for (const auto& o : collision_report.overlaps) live.insert({o.a_id, o.b_id});
  std::vector<SlotPair> kept;
  for (const auto& pair : collision_report.benign)
    if (live.count(pair)) kept.push_back(pair);
  std::sort(kept.begin(), kept.end());
  kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
  collision_report.benign = std::move(kept);
}

json to_json(const Constraint& c) {
  json j{{"subject", c.subject},
         {"kind", std::string(to_string(c.kind))},
         {"relation", c.relation},
         {"source", c.source == ConstraintSource::explicit_ ? "explicit" : "inferred"}};
  if (c.kind == ConstraintKind::relative || !c.anchor.empty()) j["anchor"] = c.anchor;
  if (c.relation == "distance" || c.min_distance != 0.0 || c.max_distance != 0.0) {
    j["min"] = c.min_distance;
    j["max"] = c.max_distance;
  }
  if (c.kind == ConstraintKind::region || c.region != Aabb{}) j["region"] = box(c.region);
  if (c.kind == ConstraintKind::pose || c.position != Vec3{} || c.yaw != 0.0) {
    j["position"] = vec(c.position);
    j["yaw"] = c.yaw;
  }
  return j;
}

Constraint constraint_from_json(const json& j) {
  Constraint c;
  c.subject = j.at("subject").get<std::string>();
  c.kind = kind_from(j.at("kind").get<std::string>());
  c.relation = j.at("relation").get<std::string>();
  const auto source = j.at("source").get<std::string>();
  if (source != "explicit" && source != "inferred") throw FormatError("unknown source " + source);
  c.source = source == "explicit" ? ConstraintSource::explicit_ : ConstraintSource::inferred;
  c.anchor = j.value("anchor", "");
  c.min_distance = j.value("min", 0.0);
  c.max_distance = j.value("max", 0.0);
  if (c.min_distance < 0.0 || c.max_distance < 0.0)
    throw FormatError("negative distance bound on constraint for " + c.subject);
  if (j.contains("region")) c.region = box_from(j["region"]);
  if (j.contains("position")) c.position = vec_from(j["position"]);
  c.yaw = j.value("yaw", 0.0);
  return c;
}

json to_json(const Placement& p) {
  return {{"slot_id", p.slot_id},
          {"asset_id", p.asset_id},
          {"display_name", p.display_name},
          {"size", vec(p.size)},
          {"position", vec(p.position)},
          {"rotation", rotation(p.rotation)},
          {"rotated_size", vec(p.rotated_size.size)},
          {"flags", p.flags}};
}

Placement placement_from_json(const json& j) {
  Placement p;
  try {
    p = make_placement(j.at("slot_id").get<std::string>(), j.at("asset_id").get<std::string>(),
                       j.at("display_name").get<std::string>(), vec_from(j.at("size")),
                       vec_from(j.at("position")), rotation_from(j.at("rotation")));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  p.flags = j.at("flags").get<std::vector<std::string>>();
  if (vec_from(j.at("rotated_size")) != p.rotated_size.size)
    throw FormatError("rotated_size of " + p.slot_id + " does not match its size and rotation");
  return p;
}

json to_json(const SceneDocument& doc) {
  json placements = json::array();
  for (const auto& p : doc.placements) placements.push_back(to_json(p));
  json constraints = json::array();
  for (const auto& c : doc.constraints) constraints.push_back(to_json(c));
  json verdicts = json::array();
  for (const auto& v : doc.verdicts) verdicts.push_back(to_json(v));
  json overlaps = json::array();
  for (const auto& o : doc.collision_report.overlaps)
    overlaps.push_back({{"a_id", o.a_id},
                        {"b_id", o.b_id},
                        {"penetration", vec(o.penetration)},
                        {"buffered", o.buffered}});
  json benign = json::array();
  for (const auto& [a, b] : doc.collision_report.benign) benign.push_back({a, b});

  return {{"schema_version", doc.schema_version},
          {"prompt", doc.prompt},
          {"bounds", box(doc.bounds)},
          {"buffer", doc.buffer},
          {"placements", placements},
          {"constraints", constraints},
          {"verdicts", verdicts},
          {"collision_report", {{"overlaps", overlaps}, {"benign", benign}}},
          {"meta", doc.meta}};
}

SceneDocument scene_from_json(const json& j) {
  SceneDocument doc;
  try {
    doc.schema_version = j.at("schema_version").get<int>();
    if (doc.schema_version > SceneDocument::kSchemaVersion)
      throw FormatVersionError("scene schema version " + std::to_string(doc.schema_version) +
                               " is newer than supported version " +
                               std::to_string(SceneDocument::kSchemaVersion));
    doc.prompt = j.at("prompt").get<std::string>();
    doc.bounds = box_from(j.at("bounds"));
    doc.buffer = j.at("buffer").get<double>();
    std::set<std::string> slots;
    for (const auto& p : j.at("placements")) {
      doc.placements.push_back(placement_from_json(p));
      if (!slots.insert(doc.placements.back().slot_id).second)
        throw FormatError("duplicate slot id " + doc.placements.back().slot_id);
    }
    for (const auto& c : j.at("constraints")) doc.constraints.push_back(constraint_from_json(c));
    for (const auto& v : j.at("verdicts")) doc.verdicts.push_back(verdict_from(v));
    const auto& report = j.at("collision_report");
    for (const auto& o : report.at("overlaps"))
      doc.collision_report.overlaps.push_back({o.at("a_id").get<std::string>(),
                                               o.at("b_id").get<std::string>(),
                                               vec_from(o.at("penetration")),
                                               o.at("buffered").get<bool>()});
    for (const auto& pair : report.at("benign"))
      doc.collision_report.benign.emplace_back(pair.at(0).get<std::string>(),
                                               pair.at(1).get<std::string>());
    doc.meta = j.value("meta", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scene document: ") + e.what());
  }
  return doc;
}

std::string serialize_scene(const SceneDocument& doc) { return to_json(doc).dump(2) + "\n"; }

SceneDocument parse_scene(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError("scene document is not valid JSON");
  return scene_from_json(j);
}

void export_json(const SceneDocument& doc, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_scene(doc));
}

SceneDocument import_json(const std::filesystem::path& path) {
  return parse_scene(read_file(path));
}

}  // namespace sceneforge
