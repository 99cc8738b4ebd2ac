#pragma once

// Minimal mesh readers for asset ingestion and scene export. Supports
// Wavefront OBJ and glTF 2.0 (.gltf with embedded or sidecar buffers, .glb).
// Both formats are treated as Y-up; helpers convert to the Z-up core frame.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sceneforge/geometry.hpp"

namespace sceneforge {

// Geometry in the file's own frame, node transforms baked in.
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<std::uint32_t> indices;  // triangle list, may be empty
};

// Throws FormatError when the file cannot be read or parsed.
TriangleMesh load_mesh(const std::filesystem::path& path);

bool is_mesh_file(const std::filesystem::path& path);

// Throws std::invalid_argument on an empty vertex list.
Aabb mesh_bounds(const TriangleMesh& mesh);

// Basis change from the Z-up core frame to the Y-up mesh/glTF frame:
// (x, y, z) -> (x, z, -y).
inline const Mat3 kCoreToYUp{{{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}, {0.0, -1.0, 0.0}}};
inline const Mat3 kYUpToCore{{{1.0, 0.0, 0.0}, {0.0, 0.0, -1.0}, {0.0, 1.0, 0.0}}};

inline Vec3 core_to_y_up(const Vec3& v) { return kCoreToYUp * v; }
inline Vec3 y_up_to_core(const Vec3& v) { return kYUpToCore * v; }

// Axis extents of a Y-up extent vector re-expressed in the core frame.
inline Vec3 y_up_extent_to_core(const Vec3& e) { return {e.x, e.z, e.y}; }

// Base64 helpers backed by OpenSSL.
std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace sceneforge
