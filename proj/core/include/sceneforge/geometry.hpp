#pragma once

// Box geometry for scene layout. The frame is right-handed and Z-up, one unit
// is roughly one meter, and an object's position is the bottom-center of its
// bounding box.

#include <array>
#include <span>
#include <string>
#include <vector>

namespace sceneforge {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  double& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend Vec3 operator*(double s, const Vec3& a) { return a * s; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

bool is_finite(const Vec3& v);
double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& v);

using Mat3 = std::array<std::array<double, 3>, 3>;

Vec3 operator*(const Mat3& m, const Vec3& v);
Mat3 operator*(const Mat3& a, const Mat3& b);
Mat3 transpose(const Mat3& m);

// Sine and cosine in degrees, exact at multiples of 90.
double sin_deg(double degrees);
double cos_deg(double degrees);

// Wraps an angle into [-180, 180).
double normalize_degrees(double degrees);

// Yaw about +Z, pitch about +Y, roll about +X, all in degrees. Applied to an
// object as roll first, then pitch, then yaw.
class EulerRotation {
 public:
  EulerRotation() = default;
  EulerRotation(double yaw, double pitch, double roll);

  static EulerRotation from_yaw(double yaw) { return {yaw, 0.0, 0.0}; }

  double yaw() const { return yaw_; }
  double pitch() const { return pitch_; }
  double roll() const { return roll_; }

  bool is_identity() const { return yaw_ == 0.0 && pitch_ == 0.0 && roll_ == 0.0; }

  // Rz(yaw) * Ry(pitch) * Rx(roll).
  Mat3 matrix() const;

  friend bool operator==(const EulerRotation&, const EulerRotation&) = default;

 private:
  double yaw_ = 0.0;
  double pitch_ = 0.0;
  double roll_ = 0.0;
};

struct Aabb {
  Vec3 min;
  Vec3 max;

  // Throws std::invalid_argument unless min <= max on every axis.
  static Aabb from_min_max(const Vec3& min, const Vec3& max);

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return (min + max) * 0.5; }
  double volume() const;
  // Grows every face outward by `margin`.
  Aabb expanded(double margin) const;

  friend bool operator==(const Aabb&, const Aabb&) = default;
};

// Extents of the axis-aligned box that encloses a rotated object box.
struct RotatedSize {
  Vec3 size;

  friend bool operator==(const RotatedSize&, const RotatedSize&) = default;
};

struct Overlap {
  std::string a_id;
  std::string b_id;
  // Per-axis overlap depth of the unbuffered boxes, each >= 0.
  Vec3 penetration;
  // True when the boxes only meet inside the buffer margin.
  bool buffered = false;

  friend bool operator==(const Overlap&, const Overlap&) = default;
};

struct BoxEntry {
  std::string id;
  Aabb box;
};

inline constexpr double kDefaultCollisionBuffer = 0.02;
// Intersections with less volume than this count as touching.
inline constexpr double kTouchingVolume = 1e-9;

RotatedSize size_after_rotation(const Vec3& size, const EulerRotation& rotation);

// Box of an object of `size` whose bottom-center sits at `position`.
Aabb placement_aabb(const Vec3& position, const Vec3& size, const EulerRotation& rotation);

// Intersection volume of two boxes, 0 when disjoint.
double intersection_volume(const Aabb& a, const Aabb& b);

// Every unordered pair whose boxes, each grown by buffer/2 per side,
// intersect with more than kTouchingVolume. Pairs are reported with
// a_id < b_id and sorted by (a_id, b_id).
std::vector<Overlap> detect_collisions(std::span<const BoxEntry> boxes,
                                       double buffer = kDefaultCollisionBuffer);

bool contains(const Aabb& outer, const Aabb& inner);

}  // namespace sceneforge
