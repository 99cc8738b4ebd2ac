#include "sceneforge/layout.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sceneforge/paths.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

std::string vec_text(const Vec3& v) {
  return "[" + format_number(v.x) + ", " + format_number(v.y) + ", " + format_number(v.z) + "]";
}

std::string rotation_text(const EulerRotation& r) {
  return "[" + format_number(r.yaw()) + ", " + format_number(r.pitch()) + ", " +
         format_number(r.roll()) + "]";
}

json vec_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

std::string room_text(const Aabb& bounds, Handedness h) {
  const Aabb b = to_provider_frame(bounds, h);
  const Vec3 e = b.extent();
  return format_number(e.x) + " x " + format_number(e.y) + " x " + format_number(e.z) +
         " units; x from " + format_number(b.min.x) + " to " + format_number(b.max.x) +
         ", y from " + format_number(b.min.y) + " to " + format_number(b.max.y) + ", z from " +
         format_number(b.min.z) + " to " + format_number(b.max.z);
}

std::string room_center_json(const Aabb& bounds, Handedness h) {
  const Vec3 c = to_provider_frame(Vec3{bounds.center().x, bounds.center().y, bounds.min.z}, h);
  return vec_text(c);
}

std::string slot_ids_json(const SceneSpec& spec) {
  json ids = json::array();
  for (const auto& s : spec.slots) ids.push_back(s.slot_id);
  return ids.dump();
}

std::string objects_text(const SceneSpec& spec) {
  std::string out;
  for (const auto& s : spec.slots)
    out += "- " + s.slot_id + ": " + s.display_name + ", size " + vec_text(s.size) + "\n";
  return out.empty() ? "(none)\n" : out;
}

std::string constraint_line(const Constraint& c, Handedness h) {
  std::string line = "- " + c.subject + " " + c.relation;
  switch (c.kind) {
    case ConstraintKind::relative:
      line += " " + c.anchor;
      if (c.relation == "distance")
        line += " between " + format_number(c.min_distance) + " and " + format_number(c.max_distance);
      break;
    case ConstraintKind::region: {
      const Aabb r = to_provider_frame(c.region, h);
      line += " " + vec_text(r.min) + " to " + vec_text(r.max);
      break;
    }
    case ConstraintKind::pose:
      line += " at " + vec_text(to_provider_frame(c.position, h)) + " yaw " +
              format_number(h == Handedness::left ? -c.yaw : c.yaw);
      break;
  }
  line += c.source == ConstraintSource::explicit_ ? " (explicit)" : " (inferred)";
  return line + "\n";
}

std::string constraints_text(const std::vector<Constraint>& constraints, Handedness h,
                             const std::string& slot = {}) {
  std::string out;
  for (const auto& c : constraints)
    if (slot.empty() || c.subject == slot || c.anchor == slot) out += constraint_line(c, h);
  return out.empty() ? "(none)\n" : out;
}

std::string placement_line(const Placement& p, Handedness h) {
  return "- " + p.slot_id + " (" + p.display_name + "): position " +
         vec_text(to_provider_frame(p.position, h)) + ", rotation [yaw, pitch, roll] " +
         rotation_text(to_provider_frame(p.rotation, h)) + ", size after rotation " +
         vec_text(p.rotated_size.size) + "\n";
}

std::string placements_text(const std::vector<Placement>& placed, Handedness h) {
  std::string out;
  for (const auto& p : placed) out += placement_line(p, h);
  return out.empty() ? "(none yet)\n" : out;
}

std::string collisions_text(const std::vector<Overlap>& overlaps,
                            const std::vector<Placement>& placements) {
  std::map<std::string, const Placement*> by_id;
  for (const auto& p : placements) by_id[p.slot_id] = &p;
  std::string out;
  for (const auto& o : overlaps) {
    out += "- " + o.a_id + " and " + o.b_id + ": penetration " + vec_text(o.penetration);
    if (o.buffered) out += " (within buffer only)";
    out += "; size after rotation " + o.a_id + " " + vec_text(by_id.at(o.a_id)->rotated_size.size) +
           ", " + o.b_id + " " + vec_text(by_id.at(o.b_id)->rotated_size.size) + "\n";
  }
  return out.empty() ? "(none)\n" : out;
}

PromptContext base_context(const SceneSpec& spec, Handedness h) {
  return {{"scene_prompt", spec.prompt},
          {"room", room_text(spec.bounds, h)},
          {"room_center", room_center_json(spec.bounds, h)},
          {"objects", objects_text(spec)},
          {"slot_ids_json", slot_ids_json(spec)}};
}

json placement_json(const Placement& p) {
  return {{"position", vec_json(p.position)},
          {"rotation", {{"yaw", p.rotation.yaw()}, {"pitch", p.rotation.pitch()}, {"roll", p.rotation.roll()}}},
          {"rotated_size", vec_json(p.rotated_size.size)},
          {"flags", p.flags}};
}

std::set<SlotPair> pairs_of(const std::vector<Overlap>& overlaps, const std::string& slot,
                            const std::set<SlotPair>& benign) {
  std::set<SlotPair> out;
  for (const auto& o : overlaps) {
    if (o.a_id != slot && o.b_id != slot) continue;
    SlotPair pair{o.a_id, o.b_id};
    if (!benign.count(pair)) out.insert(pair);
  }
  return out;
}

bool involves(const std::vector<Overlap>& overlaps, const std::string& slot) {
  return std::any_of(overlaps.begin(), overlaps.end(),
                     [&](const Overlap& o) { return o.a_id == slot || o.b_id == slot; });
}

}  // namespace

const SceneSlot* SceneSpec::find(const std::string& slot_id) const {
  auto it = std::find_if(slots.begin(), slots.end(),
                         [&](const SceneSlot& s) { return s.slot_id == slot_id; });
  return it == slots.end() ? nullptr : &*it;
}

SceneSpec make_scene_spec(const std::string& prompt, const Aabb& bounds,
                          const std::vector<RetrievalDecision>& decisions,
                          const LibraryManifest& manifest) {
  SceneSpec spec{prompt, bounds, {}};
  std::set<std::string> ids;
  for (const auto& d : decisions) {
    if (!d.selected) continue;
    const AssetRecord* record = manifest.find(*d.selected);
    if (!record) throw std::invalid_argument("asset " + *d.selected + " is not in the manifest");
    if (!ids.insert(d.slot_id).second) throw std::invalid_argument("duplicate slot id " + d.slot_id);
    spec.slots.push_back({d.slot_id, record->id, record->display_name, record->canonical_size()});
  }
  return spec;
}

Vec3 to_provider_frame(const Vec3& v, Handedness h) {
  return h == Handedness::left ? Vec3{v.x, -v.y, v.z} : v;
}
Vec3 from_provider_frame(const Vec3& v, Handedness h) { return to_provider_frame(v, h); }

EulerRotation to_provider_frame(const EulerRotation& r, Handedness h) {
  return h == Handedness::left ? EulerRotation(-r.yaw(), r.pitch(), -r.roll()) : r;
}
EulerRotation from_provider_frame(const EulerRotation& r, Handedness h) {
  return to_provider_frame(r, h);
}

Aabb to_provider_frame(const Aabb& b, Handedness h) {
  if (h == Handedness::right) return b;
  return {{b.min.x, -b.max.y, b.min.z}, {b.max.x, -b.min.y, b.max.z}};
}
Aabb from_provider_frame(const Aabb& b, Handedness h) { return to_provider_frame(b, h); }

std::string format_number(double v) {
  if (std::abs(v) < 5e-5) return "0";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  std::string s = buf;
  s.erase(s.find_last_not_of('0') + 1);
  if (s.back() == '.') s.pop_back();
  return s;
}

void AuditLog::add(json record) {
  record["seq"] = records_.size();
  records_.push_back(std::move(record));
}

std::vector<json> AuditLog::stage(const std::string& name) const {
  std::vector<json> out;
  for (const auto& r : records_)
    if (r.value("stage", "") == name) out.push_back(r);
  return out;
}

std::string AuditLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) out += r.dump() + "\n";
  return out;
}

std::optional<Constraint> resolve_constraint(const json& entry, const SceneSpec& spec,
                                             Handedness handedness, std::string& why_dropped) {
  Constraint c;
  c.subject = entry.at("subject").get<std::string>();
  c.relation = entry.at("relation").get<std::string>();
  c.source = entry.value("source", "explicit") == "inferred" ? ConstraintSource::inferred
                                                             : ConstraintSource::explicit_;
  if (!spec.find(c.subject)) {
    why_dropped = "unknown subject slot " + c.subject;
    return std::nullopt;
  }
  if (!is_known_relation(c.relation)) {
    why_dropped = "unknown relation " + c.relation;
    return std::nullopt;
  }
  try {
    if (c.relation == "within_region") {
      c.kind = ConstraintKind::region;
      if (!entry.contains("region")) {
        why_dropped = "within_region without a region";
        return std::nullopt;
      }
      const auto& r = entry["region"];
      const Aabb provider_box = Aabb::from_min_max(vec_from(r.at("min")), vec_from(r.at("max")));
      c.region = from_provider_frame(provider_box, handedness);
      return c;
    }
    if (c.relation == "pose") {
      c.kind = ConstraintKind::pose;
      if (!entry.contains("pose")) {
        why_dropped = "pose without a target";
        return std::nullopt;
      }
      const auto& pose = entry["pose"];
      c.position = from_provider_frame(vec_from(pose.at("position")), handedness);
      const double yaw = pose.value("yaw", 0.0);
      c.yaw = normalize_degrees(handedness == Handedness::left ? -yaw : yaw);
      return c;
    }
  } catch (const std::exception& e) {
    why_dropped = std::string("malformed ") + c.relation + " target: " + e.what();
    return std::nullopt;
  }
  c.kind = ConstraintKind::relative;
  c.anchor = entry.value("anchor", "");
  if (c.anchor.empty() || !spec.find(c.anchor)) {
    why_dropped = "unknown anchor slot " + (c.anchor.empty() ? std::string("(none)") : c.anchor);
    return std::nullopt;
  }
  if (c.anchor == c.subject) {
    why_dropped = c.subject + " cannot be related to itself";
    return std::nullopt;
  }
  if (c.relation == "distance") {
    c.min_distance = entry.value("min", 0.0);
    c.max_distance = entry.value("max", 0.0);
    if (c.min_distance < 0.0 || c.max_distance < c.min_distance) {
      why_dropped = "invalid distance range";
      return std::nullopt;
    }
  }
  return c;
}

ConstraintExtraction extract_constraints(const SceneSpec& spec, ProviderClient& client,
                                         const LayoutOptions& options, AuditLog* audit) {
  ConstraintExtraction out;
  const auto request =
      client.make_request(RequestKind::extract_constraints, base_context(spec, options.provider_handedness));
  json record{{"stage", "extract_constraints"}, {"prompt", request.prompt}};
  try {
    const auto reply = client.complete(request);
    record["reply"] = reply.text;
    record["parsed"] = reply.parsed;
    record["attempts"] = reply.attempts;
    std::set<std::string> seen;
    for (const auto& entry : reply.parsed.at("constraints")) {
      std::string why;
      auto c = resolve_constraint(entry, spec, options.provider_handedness, why);
      if (!c) {
        out.warnings.push_back("dropped constraint " + entry.dump() + ": " + why);
        continue;
      }
      if (!seen.insert(to_json(*c).dump()).second) continue;
      out.constraints.push_back(std::move(*c));
    }
  } catch (const ProviderError& e) {
    out.degraded = true;
    out.warnings.push_back(std::string("constraint extraction failed: ") + e.what());
    record["reply"] = e.raw_text();
    record["error"] = e.what();
  }
  for (const auto& w : out.warnings) spdlog::warn("{}", w);
  record["warnings"] = out.warnings;
  if (audit) audit->add(std::move(record));
  return out;
}

SlotOrder repair_order(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                       const std::vector<std::string>& proposed) {
  SlotOrder out;
  std::vector<std::string> sequence;
  std::set<std::string> seen;
  for (const auto& id : proposed) {
    if (!spec.find(id)) {
      out.warnings.push_back("order names unknown slot " + id);
      continue;
    }
    if (!seen.insert(id).second) {
      out.warnings.push_back("order repeats slot " + id);
      continue;
    }
    sequence.push_back(id);
  }
  for (const auto& s : spec.slots) {
    if (seen.insert(s.slot_id).second) {
      out.warnings.push_back("order omits slot " + s.slot_id + "; appended");
      sequence.push_back(s.slot_id);
    }
  }

  // Kahn's algorithm over anchor -> subject edges, always taking the
  // earliest ready slot of the proposed sequence.
  std::map<std::string, std::set<std::string>> preds;
  for (const auto& id : sequence) preds[id];
  for (const auto& c : constraints) {
    if (c.relation != "on_top_of" || c.kind != ConstraintKind::relative) continue;
    if (!preds.count(c.subject) || !preds.count(c.anchor) || c.subject == c.anchor) continue;
    preds[c.subject].insert(c.anchor);
  }
  std::vector<std::string> remaining = sequence;
  std::set<std::string> done;
  while (!remaining.empty()) {
    auto ready = std::find_if(remaining.begin(), remaining.end(), [&](const std::string& id) {
      return std::all_of(preds[id].begin(), preds[id].end(),
                         [&](const std::string& p) { return done.count(p) != 0; });
    });
    if (ready == remaining.end()) {
      std::vector<std::string> blocked = remaining;
      out.cycles.push_back(blocked);
      out.warnings.push_back("on_top_of cycle among " + json(blocked).dump() + "; placing " +
                             remaining.front() + " first");
      ready = remaining.begin();
    }
    done.insert(*ready);
    out.order.push_back(*ready);
    remaining.erase(ready);
  }
  if (out.order != sequence && out.cycles.empty())
    out.warnings.push_back("order adjusted so supporting objects come first");
  return out;
}

SlotOrder order_slots(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                      ProviderClient& client, AuditLog* audit) {
  PromptContext context = base_context(spec, Handedness::right);
  context["constraints"] = constraints_text(constraints, Handedness::right);
  const auto request = client.make_request(RequestKind::order, context);
  json record{{"stage", "order"}, {"prompt", request.prompt}};
  std::vector<std::string> proposed;
  std::vector<std::string> notes;
  try {
    const auto reply = client.complete(request);
    record["reply"] = reply.text;
    record["parsed"] = reply.parsed;
    record["attempts"] = reply.attempts;
    proposed = reply.parsed.at("order").get<std::vector<std::string>>();
  } catch (const ProviderError& e) {
    notes.push_back(std::string("ordering failed, using input order: ") + e.what());
    record["reply"] = e.raw_text();
    record["error"] = e.what();
  }
  SlotOrder out = repair_order(spec, constraints, proposed);
  out.warnings.insert(out.warnings.begin(), notes.begin(), notes.end());
  for (const auto& w : out.warnings) spdlog::warn("{}", w);
  record["order"] = out.order;
  record["warnings"] = out.warnings;
  if (audit) audit->add(std::move(record));
  return out;
}

Vec3 clamp_to_bounds(const Vec3& position, const RotatedSize& rotated, const Aabb& bounds) {
  Vec3 out = position;
  for (int axis = 0; axis < 2; ++axis) {
    const double half = rotated.size[axis] / 2.0;
    const double lo = bounds.min[axis] + half;
    const double hi = bounds.max[axis] - half;
    out[axis] = lo > hi ? (bounds.min[axis] + bounds.max[axis]) / 2.0 : std::clamp(out[axis], lo, hi);
  }
  const double top = bounds.max.z - rotated.size.z;
  out.z = top < bounds.min.z ? bounds.min.z : std::clamp(out.z, bounds.min.z, top);
  return out;
}

Placement place_next(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                     const std::vector<Placement>& placed, const std::string& slot_id,
                     ProviderClient& client, const LayoutOptions& options, AuditLog* audit) {
  const SceneSlot* slot = spec.find(slot_id);
  if (!slot) throw std::invalid_argument("unknown slot " + slot_id);
  for (const auto& p : placed)
    if (p.slot_id == slot_id) throw std::invalid_argument("slot " + slot_id + " is already placed");

  const Handedness h = options.provider_handedness;
  PromptContext context = base_context(spec, h);
  context["slot_id"] = slot->slot_id;
  context["display_name"] = slot->display_name;
  context["size"] = vec_text(slot->size);
  context["slot_constraints"] = constraints_text(constraints, h, slot_id);
  context["placements"] = placements_text(placed, h);
  context["placed_count"] = std::to_string(placed.size());
  const auto request = client.make_request(RequestKind::place, context);

  json record{{"stage", "place"}, {"slot_id", slot_id}, {"step", placed.size()}, {"prompt", request.prompt}};
  auto finish = [&](json extra) {
    for (auto& [k, v] : extra.items()) record[k] = v;
    if (audit) audit->add(record);
  };

  const Aabb room = spec.bounds.expanded(options.buffer);
  auto attempt = [&](const ProviderRequest& req, json& sub) -> std::optional<Placement> {
    const auto reply = client.complete(req);
    sub["reply"] = reply.text;
    sub["parsed"] = reply.parsed;
    sub["attempts"] = reply.attempts;
    const Vec3 pos = from_provider_frame(vec_from(reply.parsed.at("position")), h);
    const auto& r = reply.parsed.at("rotation");
    const double yaw = r.value("yaw", 0.0), pitch = r.value("pitch", 0.0), roll = r.value("roll", 0.0);
    if (!std::isfinite(yaw) || !std::isfinite(pitch) || !std::isfinite(roll))
      throw PlacementError("non-finite rotation for " + slot_id, slot_id);
    const EulerRotation rot = from_provider_frame(EulerRotation(yaw, pitch, roll), h);
    if (!is_finite(pos)) return std::nullopt;
    return make_placement(slot->slot_id, slot->asset_id, slot->display_name, slot->size, pos, rot);
  };

  json first;
  std::optional<Placement> candidate;
  try {
    candidate = attempt(request, first);
    if (candidate && contains(room, candidate->aabb())) {
      finish(json{{"reply", first["reply"]}, {"parsed", first["parsed"]}, {"attempts", first["attempts"]},
                  {"result", placement_json(*candidate)}});
      return *candidate;
    }

    ProviderRequest repair = request;
    repair.prompt += "\n\nYour previous placement for " + slot_id +
                     " was outside the room or not finite. The room spans " + room_text(spec.bounds, h) +
                     ". Reply again with a placement that keeps the whole object inside the room.";
    json second;
    std::optional<Placement> retry = attempt(repair, second);
    if (retry) candidate = retry;
    record["repair"] = second;
    record["repair"]["prompt"] = repair.prompt;
    if (retry && contains(room, retry->aabb())) {
      retry->flags.push_back("repaired");
      finish(json{{"reply", first["reply"]}, {"parsed", first["parsed"]}, {"attempts", first["attempts"]},
                  {"result", placement_json(*retry)}});
      return *retry;
    }
  } catch (const ProviderError& e) {
    finish(json{{"reply", e.raw_text()}, {"error", e.what()}});
    throw PlacementError("placement of " + slot_id + " failed: " + e.what(), slot_id);
  } catch (const PlacementError&) {
    finish(json{{"error", "non-finite rotation"}});
    throw;
  } catch (const json::exception& e) {
    finish(json{{"error", e.what()}});
    throw PlacementError("placement of " + slot_id + " is malformed: " + e.what(), slot_id);
  }

  // Still out of bounds: clamp the position, keep the rotation.
  const EulerRotation rotation = candidate ? candidate->rotation : EulerRotation{};
  const RotatedSize rotated = size_after_rotation(slot->size, rotation);
  const Vec3 start = candidate ? candidate->position
                               : Vec3{spec.bounds.center().x, spec.bounds.center().y, spec.bounds.min.z};
  Placement clamped = make_placement(slot->slot_id, slot->asset_id, slot->display_name, slot->size,
                                     clamp_to_bounds(start, rotated, spec.bounds), rotation);
  clamped.flags = {"clamped", "out_of_bounds"};
  spdlog::warn("placement of {} was out of bounds after repair; clamped", slot_id);
  finish(json{{"reply", first.value("reply", json())}, {"parsed", first.value("parsed", json())},
              {"attempts", first.value("attempts", json())}, {"result", placement_json(clamped)}});
  return clamped;
}

std::vector<Placement> initial_pass(const SceneSpec& spec,
                                    const std::vector<Constraint>& constraints,
                                    const std::vector<std::string>& order, ProviderClient& client,
                                    const LayoutOptions& options, AuditLog* audit) {
  std::vector<Placement> placed;
  placed.reserve(order.size());
  for (const auto& slot_id : order) {
    try {
      placed.push_back(place_next(spec, constraints, placed, slot_id, client, options, audit));
    } catch (PlacementError& e) {
      e.set_partial(placed);
      throw;
    }
  }
  return placed;
}

RefinementResult refine_pass(const SceneSpec& spec, const std::vector<Constraint>& constraints,
                             std::vector<Placement> placements, ProviderClient& client,
                             const LayoutOptions& options, AuditLog* audit) {
  RefinementResult result;
  const Handedness h = options.provider_handedness;
  const int sweeps = std::clamp(options.refinement_sweeps, 1, 3);
  std::set<SlotPair> benign;
  const Aabb room = spec.bounds.expanded(options.buffer);
  auto overlaps_now = [&] { return detect_collisions(placement_boxes(placements), options.buffer); };

  for (int sweep = 1; sweep <= sweeps; ++sweep) {
    auto overlaps = overlaps_now();
    std::size_t non_benign = 0;
    for (const auto& o : overlaps) non_benign += benign.count({o.a_id, o.b_id}) ? 0 : 1;
    if (sweep > 1 && non_benign == 0) break;

    for (std::size_t i = 0; i < placements.size(); ++i) {
      const std::string slot_id = placements[i].slot_id;
      overlaps = overlaps_now();
      if (!involves(overlaps, slot_id)) continue;
      const auto before = pairs_of(overlaps, slot_id, benign);
      if (sweep > 1 && before.empty()) continue;

      const SceneSlot* slot = spec.find(slot_id);
      PromptContext context = base_context(spec, h);
      context["slot_id"] = slot_id;
      context["display_name"] = placements[i].display_name;
      context["size"] = vec_text(placements[i].size);
      context["current"] = placement_line(placements[i], h);
      context["placements"] = placements_text(placements, h);
      context["collisions"] = collisions_text(overlaps, placements);
      context["slot_constraints"] = constraints_text(constraints, h, slot_id);
      const auto request = client.make_request(RequestKind::refine, context);
      ++result.provider_calls;

      RefinementVerdict verdict;
      verdict.slot_id = slot_id;
      verdict.sweep = sweep;
      json record{{"stage", "refine"}, {"slot_id", slot_id}, {"sweep", sweep}, {"prompt", request.prompt}};
      try {
        const auto reply = client.complete(request);
        record["reply"] = reply.text;
        record["parsed"] = reply.parsed;
        record["attempts"] = reply.attempts;
        const auto& parsed = reply.parsed;
        verdict.rationale = parsed.value("rationale", "");
        if (parsed.at("action").get<std::string>() == "move") {
          verdict.action = VerdictAction::move;
          Vec3 pos = parsed.contains("position")
                         ? from_provider_frame(vec_from(parsed["position"]), h)
                         : placements[i].position;
          EulerRotation rot = placements[i].rotation;
          if (parsed.contains("rotation")) {
            const auto& r = parsed["rotation"];
            rot = from_provider_frame(EulerRotation(r.value("yaw", 0.0), r.value("pitch", 0.0),
                                                    r.value("roll", 0.0)),
                                      h);
          }
          verdict.position = pos;
          verdict.rotation = rot;
          if (!is_finite(pos)) {
            verdict.action = VerdictAction::keep;
            verdict.flag = VerdictFlag::degraded;
          } else if (pos == placements[i].position && rot == placements[i].rotation) {
            verdict.action = VerdictAction::keep;
            verdict.flag = VerdictFlag::noop_move;
          } else {
            Placement moved = make_placement(slot->slot_id, slot->asset_id, slot->display_name,
                                             slot->size, pos, rot);
            if (!contains(room, moved.aabb())) {
              moved.position = clamp_to_bounds(pos, moved.rotated_size, spec.bounds);
              moved.flags.push_back("clamped");
            }
            std::vector<Placement> trial = placements;
            trial[i] = moved;
            const auto after =
                pairs_of(detect_collisions(placement_boxes(trial), options.buffer), slot_id, benign);
            const bool adds_new = std::any_of(after.begin(), after.end(),
                                              [&](const SlotPair& p) { return !before.count(p); });
            if (adds_new) {
              verdict.action = VerdictAction::keep;
              verdict.flag = VerdictFlag::rejected_move;
            } else {
              placements[i] = std::move(moved);
            }
          }
        }
      } catch (const ProviderError& e) {
        verdict.action = VerdictAction::keep;
        verdict.flag = VerdictFlag::degraded;
        record["reply"] = e.raw_text();
        record["error"] = e.what();
      } catch (const json::exception& e) {
        verdict.action = VerdictAction::keep;
        verdict.flag = VerdictFlag::degraded;
        record["error"] = e.what();
      }

      if (verdict.is_benign_keep()) {
        for (const auto& o : overlaps)
          if (o.a_id == slot_id || o.b_id == slot_id) benign.insert({o.a_id, o.b_id});
      }
      record["verdict"] = {{"action", verdict.action == VerdictAction::keep ? "keep" : "move"},
                           {"flag", std::string(to_string(verdict.flag))}};
      if (audit) audit->add(std::move(record));
      result.verdicts.push_back(std::move(verdict));
    }
  }

  std::set<SlotPair> live;
  for (const auto& o : overlaps_now()) live.insert({o.a_id, o.b_id});
  for (const auto& pair : benign)
    if (live.count(pair)) result.benign.push_back(pair);
  result.placements = std::move(placements);
  return result;
}

SceneDocument build_scene(const std::string& prompt, const Aabb& bounds,
                          const std::vector<RetrievalDecision>& decisions,
                          const LibraryManifest& manifest, ProviderClient& client,
                          const LayoutOptions& options, AuditLog* audit) {
  if (bounds.volume() <= 0.0) throw std::invalid_argument("scene bounds must have positive volume");
  if (options.buffer < 0.0) throw std::invalid_argument("buffer must be non-negative");

  SceneDocument doc;
  doc.prompt = prompt;
  doc.bounds = bounds;
  doc.buffer = options.buffer;

  const SceneSpec spec = make_scene_spec(prompt, bounds, decisions, manifest);

  json templates = json::object();
  for (RequestKind kind : kAllRequestKinds)
    if (client.templates().has(kind)) templates[std::string(to_string(kind))] = client.templates().version(kind);
  json unmatched = json::array();
  json degraded_votes = json::array();
  for (const auto& d : decisions) {
    if (!d.selected) unmatched.push_back(d.slot_id);
    if (d.degraded) degraded_votes.push_back(d.slot_id);
  }
  doc.meta = {{"provider", client.provider_tag()},
              {"sceneforge_version", library_version()},
              {"library_version", manifest.version},
              {"templates", templates},
              {"unmatched", unmatched},
              {"degraded_votes", degraded_votes},
              {"provider_handedness", options.provider_handedness == Handedness::left ? "left" : "right"},
              {"refinement", options.skip_refinement ? json("skipped") : json(std::clamp(options.refinement_sweeps, 1, 3))}};

  if (spec.slots.empty()) {
    doc.meta["order"] = json::array();
    doc.refresh_collisions();
    return doc;
  }

  const auto extraction = extract_constraints(spec, client, options, audit);
  doc.constraints = extraction.constraints;
  doc.meta["constraints_degraded"] = extraction.degraded;
  doc.meta["constraint_warnings"] = extraction.warnings;

  const auto order = order_slots(spec, doc.constraints, client, audit);
  doc.meta["order"] = order.order;
  doc.meta["order_warnings"] = order.warnings;
  doc.meta["order_cycles"] = order.cycles;

  try {
    doc.placements = initial_pass(spec, doc.constraints, order.order, client, options, audit);
  } catch (const PlacementError& e) {
    doc.placements = e.partial();
    doc.meta["error"] = e.what();
    doc.meta["failed_slot"] = e.slot_id();
    doc.refresh_collisions();
    throw SceneBuildError(e.what(), doc);
  }

  if (!options.skip_refinement) {
    auto refined = refine_pass(spec, doc.constraints, doc.placements, client, options, audit);
    doc.placements = std::move(refined.placements);
    doc.verdicts = std::move(refined.verdicts);
    doc.collision_report.benign = std::move(refined.benign);
  }
  doc.refresh_collisions();
  return doc;
}

}  // namespace sceneforge
