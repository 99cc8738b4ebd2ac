#include "sceneforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <tuple>

namespace sceneforge {

namespace {

void require_finite(const Vec3& v, const char* what) {
  if (!is_finite(v)) throw std::invalid_argument(std::string(what) + " must be finite");
}

void require_positive(const Vec3& v, const char* what) {
  require_finite(v, what);
  if (v.x <= 0.0 || v.y <= 0.0 || v.z <= 0.0)
    throw std::invalid_argument(std::string(what) + " components must be > 0");
}

}  // namespace

bool is_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

Vec3 operator*(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Mat3 transpose(const Mat3& m) {
  Mat3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = m[j][i];
  return out;
}

double normalize_degrees(double degrees) {
  if (!std::isfinite(degrees)) throw std::invalid_argument("angle must be finite");
  double wrapped = std::fmod(degrees + 180.0, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  wrapped -= 180.0;
  // fmod can land exactly on the excluded upper end after the shift.
  if (wrapped >= 180.0) wrapped -= 360.0;
  return wrapped;
}

double sin_deg(double degrees) {
  const double a = normalize_degrees(degrees);
  if (a == 0.0 || a == -180.0) return 0.0;
  if (a == 90.0) return 1.0;
  if (a == -90.0) return -1.0;
  return std::sin(a * std::numbers::pi / 180.0);
}

double cos_deg(double degrees) {
  const double a = normalize_degrees(degrees);
  if (a == 0.0) return 1.0;
  if (a == -180.0) return -1.0;
  if (a == 90.0 || a == -90.0) return 0.0;
  return std::cos(a * std::numbers::pi / 180.0);
}

EulerRotation::EulerRotation(double yaw, double pitch, double roll)
    : yaw_(normalize_degrees(yaw)), pitch_(normalize_degrees(pitch)), roll_(normalize_degrees(roll)) {}

Mat3 EulerRotation::matrix() const {
  const double cy = cos_deg(yaw_), sy = sin_deg(yaw_);
  const double cp = cos_deg(pitch_), sp = sin_deg(pitch_);
  const double cr = cos_deg(roll_), sr = sin_deg(roll_);
  const Mat3 rz{{{cy, -sy, 0.0}, {sy, cy, 0.0}, {0.0, 0.0, 1.0}}};
  const Mat3 ry{{{cp, 0.0, sp}, {0.0, 1.0, 0.0}, {-sp, 0.0, cp}}};
  const Mat3 rx{{{1.0, 0.0, 0.0}, {0.0, cr, -sr}, {0.0, sr, cr}}};
  return rz * (ry * rx);
}

Aabb Aabb::from_min_max(const Vec3& min, const Vec3& max) {
  require_finite(min, "box min");
  require_finite(max, "box max");
  if (min.x > max.x || min.y > max.y || min.z > max.z)
    throw std::invalid_argument("box min must not exceed max");
  return {min, max};
}

double Aabb::volume() const {
  const Vec3 e = extent();
  return e.x * e.y * e.z;
}

Aabb Aabb::expanded(double margin) const {
  const Vec3 m{margin, margin, margin};
  return {min - m, max + m};
}

RotatedSize size_after_rotation(const Vec3& size, const EulerRotation& rotation) {
  require_positive(size, "size");
  if (rotation.is_identity()) return {size};
  // The enclosing extent along each world axis is the sum of the absolute
  // projections of the three box edges.
  const Mat3 m = rotation.matrix();
  Vec3 out;
  for (int row = 0; row < 3; ++row) {
    out[row] = std::abs(m[row][0]) * size.x + std::abs(m[row][1]) * size.y +
               std::abs(m[row][2]) * size.z;
  }
  return {out};
}

Aabb placement_aabb(const Vec3& position, const Vec3& size, const EulerRotation& rotation) {
  require_finite(position, "position");
  const Vec3 extent = size_after_rotation(size, rotation).size;
  const Vec3 half{extent.x * 0.5, extent.y * 0.5, 0.0};
  return {{position.x - half.x, position.y - half.y, position.z},
          {position.x + half.x, position.y + half.y, position.z + extent.z}};
}

double intersection_volume(const Aabb& a, const Aabb& b) {
  double volume = 1.0;
  for (int axis = 0; axis < 3; ++axis) {
    const double depth = std::min(a.max[axis], b.max[axis]) - std::max(a.min[axis], b.min[axis]);
    if (depth <= 0.0) return 0.0;
    volume *= depth;
  }
  return volume;
}

std::vector<Overlap> detect_collisions(std::span<const BoxEntry> boxes, double buffer) {
  if (!std::isfinite(buffer) || buffer < 0.0)
    throw std::invalid_argument("collision buffer must be finite and >= 0");

  std::set<std::string_view> seen;
  for (const auto& entry : boxes) {
    if (!seen.insert(entry.id).second)
      throw std::invalid_argument("duplicate box id: " + entry.id);
  }

  const double margin = buffer * 0.5;
  struct Item {
    const BoxEntry* entry;
    Aabb grown;
  };
  std::vector<Item> items;
  items.reserve(boxes.size());
  for (const auto& entry : boxes) items.push_back({&entry, entry.box.expanded(margin)});
  // Sweep along x over the grown boxes.
  std::sort(items.begin(), items.end(), [](const Item& l, const Item& r) {
    if (l.grown.min.x != r.grown.min.x) return l.grown.min.x < r.grown.min.x;
    return l.entry->id < r.entry->id;
  });

  std::vector<Overlap> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (items[j].grown.min.x >= items[i].grown.max.x) break;
      if (intersection_volume(items[i].grown, items[j].grown) <= kTouchingVolume) continue;

      const Aabb& a = items[i].entry->box;
      const Aabb& b = items[j].entry->box;
      Overlap overlap;
      overlap.a_id = items[i].entry->id;
      overlap.b_id = items[j].entry->id;
      if (overlap.b_id < overlap.a_id) std::swap(overlap.a_id, overlap.b_id);
      for (int axis = 0; axis < 3; ++axis) {
        overlap.penetration[axis] =
            std::max(0.0, std::min(a.max[axis], b.max[axis]) - std::max(a.min[axis], b.min[axis]));
      }
      overlap.buffered = intersection_volume(a, b) <= kTouchingVolume;
      out.push_back(std::move(overlap));
    }
  }
  std::sort(out.begin(), out.end(), [](const Overlap& l, const Overlap& r) {
    return std::tie(l.a_id, l.b_id) < std::tie(r.a_id, r.b_id);
  });
  return out;
}

bool contains(const Aabb& outer, const Aabb& inner) {
  for (int axis = 0; axis < 3; ++axis) {
    if (inner.min[axis] < outer.min[axis] || inner.max[axis] > outer.max[axis]) return false;
  }
  return true;
}

}  // namespace sceneforge
