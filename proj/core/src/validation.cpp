#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sceneforge/scene_model.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

double interval_overlap(double a0, double a1, double b0, double b1) {
  return std::min(a1, b1) - std::max(a0, b0);
}

// Euclidean distance between two boxes, 0 when they touch or overlap.
double box_gap(const Aabb& a, const Aabb& b) {
  double sq = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double d = std::max({0.0, b.min[axis] - a.max[axis], a.min[axis] - b.max[axis]});
    sq += d * d;
  }
  return std::sqrt(sq);
}

double angle_between_deg(const Vec3& a, const Vec3& b) {
  const double c = dot(a, b) / (norm(a) * norm(b));
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::acos(-1.0);
}

ConstraintCheck verdict(ConstraintCheck check, bool ok, double measure, std::string detail) {
  check.outcome = ok ? ConstraintOutcome::satisfied : ConstraintOutcome::violated;
  check.measure = measure;
  check.detail = std::move(detail);
  return check;
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(4) << v;
  return out.str();
}

}  // namespace

std::string_view to_string(ConstraintOutcome outcome) {
  switch (outcome) {
    case ConstraintOutcome::satisfied: return "satisfied";
    case ConstraintOutcome::violated: return "violated";
    case ConstraintOutcome::unverifiable: return "unverifiable";
  }
  return "unverifiable";
}

Vec3 forward_direction(double yaw) { return {-sin_deg(yaw), cos_deg(yaw), 0.0}; }
Vec3 right_direction(double yaw) { return {cos_deg(yaw), sin_deg(yaw), 0.0}; }

ConstraintCheck check_constraint(const SceneDocument& doc, std::size_t index,
                                 const ValidationOptions& options) {
  const Constraint& c = doc.constraints.at(index);
  ConstraintCheck check;
  check.index = index;

  const Placement* subject = doc.find(c.subject);
  if (!subject) {
    check.detail = "subject " + c.subject + " is not placed";
    return check;
  }
  const Aabb s = subject->aabb();

  if (c.relation == "within_region") {
    const bool inside = contains(c.region, s);
    double excess = 0.0;
    for (int axis = 0; axis < 3; ++axis)
      excess = std::max({excess, c.region.min[axis] - s.min[axis], s.max[axis] - c.region.max[axis]});
    return verdict(check, inside, excess, inside ? "inside region" : "protrudes by " + fmt(excess));
  }
  if (c.relation == "pose") {
    const Vec3 d = subject->position - c.position;
    const double offset = std::hypot(d.x, d.y);
    const double yaw_error = std::abs(normalize_degrees(subject->rotation.yaw() - c.yaw));
    const bool ok = offset <= options.pose_position_tolerance &&
                    std::abs(d.z) <= options.pose_position_tolerance &&
                    yaw_error <= options.pose_yaw_tolerance_deg;
    return verdict(check, ok, offset,
                   "offset " + fmt(offset) + ", yaw error " + fmt(yaw_error) + " deg");
  }
  if (!is_known_relation(c.relation)) {
    check.detail = "unknown relation " + c.relation;
    return check;
  }

  const Placement* anchor = doc.find(c.anchor);
  if (!anchor) {
    check.detail = "anchor " + (c.anchor.empty() ? std::string("(none)") : c.anchor) + " is not placed";
    return check;
  }
  const Aabb a = anchor->aabb();
  Vec3 offset = s.center() - a.center();
  offset.z = 0.0;
  const double anchor_yaw = anchor->rotation.yaw();

  if (c.relation == "on_top_of") {
    const double tolerance = options.support_tolerance >= 0.0 ? options.support_tolerance : doc.buffer;
    const double gap = s.min.z - a.max.z;
    const double fx = interval_overlap(s.min.x, s.max.x, a.min.x, a.max.x);
    const double fy = interval_overlap(s.min.y, s.max.y, a.min.y, a.max.y);
    const bool footprint = fx > 0.0 && fy > 0.0;
    const bool ok = std::abs(gap) <= tolerance && footprint;
    return verdict(check, ok, gap,
                   "vertical gap " + fmt(gap) + (footprint ? ", footprints overlap" : ", footprints disjoint"));
  }
  if (c.relation == "in_front_of" || c.relation == "behind") {
    const double along = dot(offset, forward_direction(anchor_yaw));
    const bool ok = c.relation == "in_front_of" ? along > 0.0 : along < 0.0;
    return verdict(check, ok, along, "offset along anchor forward " + fmt(along));
  }
  if (c.relation == "right_of" || c.relation == "left_of") {
    const double along = dot(offset, right_direction(anchor_yaw));
    const bool ok = c.relation == "right_of" ? along > 0.0 : along < 0.0;
    return verdict(check, ok, along, "offset along anchor right " + fmt(along));
  }
  if (c.relation == "distance") {
    const double d = norm(s.center() - a.center());
    return verdict(check, d >= c.min_distance && d <= c.max_distance, d, "distance " + fmt(d));
  }
  if (c.relation == "adjacent_to") {
    const double gap = box_gap(s, a);
    return verdict(check, gap <= options.adjacency_gap, gap, "gap " + fmt(gap));
  }
  if (c.relation == "facing") {
    Vec3 toward = a.center() - s.center();
    toward.z = 0.0;
    if (norm(toward) == 0.0) {
      check.detail = "subject and anchor share a center";
      return check;
    }
    const double angle = angle_between_deg(forward_direction(subject->rotation.yaw()), toward);
    return verdict(check, angle <= options.facing_tolerance_deg, angle,
                   "heading off by " + fmt(angle) + " deg");
  }
  if (c.relation == "aligned_with") {
    double r = std::fmod(std::abs(normalize_degrees(subject->rotation.yaw() - anchor_yaw)), 90.0);
    r = std::min(r, 90.0 - r);
    return verdict(check, r <= options.alignment_tolerance_deg, r,
                   "yaw misalignment " + fmt(r) + " deg");
  }
  check.detail = "relation " + c.relation + " has no geometric check";
  return check;
}

ValidationReport validate(const SceneDocument& doc, const ValidationOptions& options) {
  ValidationReport report;
  for (std::size_t i = 0; i < doc.constraints.size(); ++i) {
    report.checks.push_back(check_constraint(doc, i, options));
    switch (report.checks.back().outcome) {
      case ConstraintOutcome::satisfied: ++report.satisfied; break;
      case ConstraintOutcome::violated: ++report.violated; break;
      case ConstraintOutcome::unverifiable: ++report.unverifiable; break;
    }
  }
  CollisionReport current;
  current.overlaps = detect_collisions(placement_boxes(doc.placements), doc.buffer);
  current.benign = doc.collision_report.benign;
  report.non_benign_overlaps = current.non_benign_count();
  const Aabb room = doc.bounds.expanded(doc.buffer);
  for (const auto& p : doc.placements)
    if (!contains(room, p.aabb())) ++report.out_of_bounds;
  return report;
}

json to_json(const ValidationReport& report, const SceneDocument& doc) {
  json checks = json::array();
  for (const auto& check : report.checks) {
    const Constraint& c = doc.constraints.at(check.index);
    json entry{{"index", check.index},
               {"subject", c.subject},
               {"relation", c.relation},
               {"outcome", std::string(to_string(check.outcome))},
               {"detail", check.detail}};
    if (!c.anchor.empty()) entry["anchor"] = c.anchor;
    if (check.outcome != ConstraintOutcome::unverifiable) entry["measure"] = check.measure;
    checks.push_back(std::move(entry));
  }
  return {{"constraints", checks},
          {"satisfied", report.satisfied},
          {"violated", report.violated},
          {"unverifiable", report.unverifiable},
          {"non_benign_overlaps", report.non_benign_overlaps},
          {"out_of_bounds", report.out_of_bounds}};
}

std::string format_report_table(const ValidationReport& report, const SceneDocument& doc) {
  std::ostringstream out;
  out << std::left << std::setw(4) << "#" << std::setw(20) << "subject" << std::setw(15)
      << "relation" << std::setw(20) << "anchor" << std::setw(14) << "outcome"
      << "detail\n";
  for (const auto& check : report.checks) {
    const Constraint& c = doc.constraints.at(check.index);
    out << std::setw(4) << check.index << std::setw(20) << c.subject << std::setw(15) << c.relation
        << std::setw(20) << (c.anchor.empty() ? "-" : c.anchor) << std::setw(14)
        << to_string(check.outcome) << check.detail << "\n";
  }
  out << "satisfied " << report.satisfied << ", violated " << report.violated
      << ", unverifiable " << report.unverifiable << "; non-benign overlaps "
      << report.non_benign_overlaps << ", out of bounds " << report.out_of_bounds << "\n";
  return out.str();
}

}  // namespace sceneforge
