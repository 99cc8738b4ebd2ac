#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "sceneforge/error.hpp"
#include "sceneforge/mesh_io.hpp"
#include "sceneforge/paths.hpp"
#include "sceneforge/scene_model.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

constexpr int kFloat = 5126;
constexpr int kUnsignedInt = 5125;
constexpr int kArrayBuffer = 34962;
constexpr int kElementArrayBuffer = 34963;

class BinWriter {
 public:
  // Appends raw bytes 4-byte aligned and returns (offset, length).
  std::pair<std::size_t, std::size_t> append(const void* data, std::size_t n) {
    while (bytes_.size() % 4 != 0) bytes_.push_back(0);
    const std::size_t offset = bytes_.size();
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
    return {offset, n};
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

struct GltfBuilder {
  BinWriter bin;
  json buffer_views = json::array();
  json accessors = json::array();
  json meshes = json::array();

  int add_view(const void* data, std::size_t n, int target) {
    auto [offset, length] = bin.append(data, n);
    buffer_views.push_back(
        {{"buffer", 0}, {"byteOffset", offset}, {"byteLength", length}, {"target", target}});
    return static_cast<int>(buffer_views.size()) - 1;
  }

  int add_mesh(const std::string& name, const std::vector<Vec3>& positions,
               const std::vector<std::uint32_t>& indices) {
    std::vector<float> flat;
    flat.reserve(positions.size() * 3);
    std::array<float, 3> lo{}, hi{};
    for (std::size_t i = 0; i < positions.size(); ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        const auto v = static_cast<float>(positions[i][axis]);
        flat.push_back(v);
        lo[axis] = i == 0 ? v : std::min(lo[axis], v);
        hi[axis] = i == 0 ? v : std::max(hi[axis], v);
      }
    }
    const int pos_view = add_view(flat.data(), flat.size() * sizeof(float), kArrayBuffer);
    accessors.push_back({{"bufferView", pos_view},
                         {"componentType", kFloat},
                         {"count", positions.size()},
                         {"type", "VEC3"},
                         {"min", lo},
                         {"max", hi}});
    json primitive{{"attributes", {{"POSITION", accessors.size() - 1}}}, {"mode", 4}};
    if (!indices.empty()) {
      const int idx_view = add_view(indices.data(), indices.size() * sizeof(std::uint32_t),
                                    kElementArrayBuffer);
      accessors.push_back({{"bufferView", idx_view},
                           {"componentType", kUnsignedInt},
                           {"count", indices.size()},
                           {"type", "SCALAR"}});
      primitive["indices"] = accessors.size() - 1;
    }
    meshes.push_back({{"name", name}, {"primitives", json::array({primitive})}});
    return static_cast<int>(meshes.size()) - 1;
  }
};

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

}  // namespace

std::array<double, 4> quaternion_from_matrix(const Mat3& m) {
  double x, y, z, w;
  const double trace = m[0][0] + m[1][1] + m[2][2];
  if (trace > 0.0) {
    const double s = 2.0 * std::sqrt(trace + 1.0);
    w = 0.25 * s;
    x = (m[2][1] - m[1][2]) / s;
    y = (m[0][2] - m[2][0]) / s;
    z = (m[1][0] - m[0][1]) / s;
  } else if (m[0][0] > m[1][1] && m[0][0] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[0][0] - m[1][1] - m[2][2]);
    w = (m[2][1] - m[1][2]) / s;
    x = 0.25 * s;
    y = (m[0][1] + m[1][0]) / s;
    z = (m[0][2] + m[2][0]) / s;
  } else if (m[1][1] > m[2][2]) {
    const double s = 2.0 * std::sqrt(1.0 + m[1][1] - m[0][0] - m[2][2]);
    w = (m[0][2] - m[2][0]) / s;
    x = (m[0][1] + m[1][0]) / s;
    y = 0.25 * s;
    z = (m[1][2] + m[2][1]) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m[2][2] - m[0][0] - m[1][1]);
    w = (m[1][0] - m[0][1]) / s;
    x = (m[0][2] + m[2][0]) / s;
    y = (m[1][2] + m[2][1]) / s;
    z = 0.25 * s;
  }
  // Canonical sign: w >= 0.
  if (w < 0.0) {
    x = -x;
    y = -y;
    z = -z;
    w = -w;
  }
  const double n = std::sqrt(x * x + y * y + z * z + w * w);
  return {x / n, y / n, z / n, w / n};
}

void export_gltf(const SceneDocument& doc, const LibraryManifest& manifest,
                 const std::filesystem::path& path) {
  std::map<std::string, TriangleMesh> meshes;
  std::vector<std::string> offenders;
  for (const auto& p : doc.placements) {
    if (meshes.count(p.asset_id)) continue;
    const AssetRecord* record = manifest.find(p.asset_id);
    if (!record) {
      offenders.push_back(p.asset_id);
      continue;
    }
    try {
      meshes.emplace(p.asset_id, load_mesh(record->mesh_path));
    } catch (const Error&) {
      offenders.push_back(p.asset_id);
    }
  }
  std::sort(offenders.begin(), offenders.end());
  offenders.erase(std::unique(offenders.begin(), offenders.end()), offenders.end());
  if (!offenders.empty()) {
    std::string list;
    for (const auto& id : offenders) list += (list.empty() ? "" : ", ") + id;
    throw ExportError("missing or unreadable meshes for assets: " + list, offenders);
  }

  GltfBuilder gltf;
  std::map<std::string, int> mesh_index;
  std::map<std::string, Vec3> native_center;
  for (const auto& [id, mesh] : meshes) {
    mesh_index[id] = gltf.add_mesh(id, mesh.positions, mesh.indices);
    native_center[id] = mesh_bounds(mesh).center();
  }

  json nodes = json::array();
  json scene_nodes = json::array();
  for (const auto& p : doc.placements) {
    const AssetRecord* record = manifest.find(p.asset_id);
    const Mat3 core = p.rotation.matrix() * EulerRotation::from_yaw(record->front_yaw_offset).matrix();
    const Mat3 rg = kCoreToYUp * core * kYUpToCore;
    const Vec3 center = p.position + Vec3{0.0, 0.0, p.rotated_size.size.z / 2.0};
    const Vec3 t = core_to_y_up(center) - rg * native_center[p.asset_id];
    const auto q = quaternion_from_matrix(rg);
    nodes.push_back({{"name", p.slot_id},
                     {"mesh", mesh_index[p.asset_id]},
                     {"translation", {t.x, t.y, t.z}},
                     {"rotation", {q[0], q[1], q[2], q[3]}},
                     {"extras", {{"asset_id", p.asset_id}, {"display_name", p.display_name}}}});
    scene_nodes.push_back(nodes.size() - 1);
  }

  // Ground plane: the room footprint at floor height, facing up.
  const Aabb& b = doc.bounds;
  const std::vector<Vec3> quad{
      core_to_y_up({b.min.x, b.min.y, b.min.z}), core_to_y_up({b.max.x, b.min.y, b.min.z}),
      core_to_y_up({b.max.x, b.max.y, b.min.z}), core_to_y_up({b.min.x, b.max.y, b.min.z})};
  const int ground = gltf.add_mesh("ground", quad, {0, 1, 2, 0, 2, 3});
  nodes.push_back({{"name", "ground_plane"}, {"mesh", ground}});
  scene_nodes.push_back(nodes.size() - 1);

  json root{{"asset", {{"version", "2.0"}, {"generator", "sceneforge " + library_version()}}},
            {"scene", 0},
            {"scenes", json::array({{{"nodes", scene_nodes}}})},
            {"nodes", nodes},
            {"meshes", gltf.meshes},
            {"accessors", gltf.accessors},
            {"bufferViews", gltf.buffer_views},
            {"buffers", json::array({{{"byteLength", gltf.bin.bytes().size()}}})}};

  std::string chunk_json = root.dump();
  while (chunk_json.size() % 4 != 0) chunk_json.push_back(' ');
  std::string chunk_bin(gltf.bin.bytes().begin(), gltf.bin.bytes().end());
  while (chunk_bin.size() % 4 != 0) chunk_bin.push_back('\0');

  std::string out;
  put_u32(out, 0x46546C67);  // "glTF"
  put_u32(out, 2);
  put_u32(out, static_cast<std::uint32_t>(12 + 8 + chunk_json.size() + 8 + chunk_bin.size()));
  put_u32(out, static_cast<std::uint32_t>(chunk_json.size()));
  put_u32(out, 0x4E4F534A);  // "JSON"
  out += chunk_json;
  put_u32(out, static_cast<std::uint32_t>(chunk_bin.size()));
  put_u32(out, 0x004E4942);  // "BIN\0"
  out += chunk_bin;
  write_file_atomic(path, out);
}

}  // namespace sceneforge
