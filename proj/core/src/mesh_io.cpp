#include "sceneforge/mesh_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sceneforge/error.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// OBJ

TriangleMesh load_obj(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x >> v.y >> v.z))
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      mesh.positions.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> face;
      std::string corner;
      while (ls >> corner) {
        const long raw = std::strtol(corner.c_str(), nullptr, 10);
        const long count = static_cast<long>(mesh.positions.size());
        const long resolved = raw < 0 ? count + raw : raw - 1;
        if (raw == 0 || resolved < 0 || resolved >= count)
          throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad face index");
        face.push_back(static_cast<std::uint32_t>(resolved));
      }
      for (std::size_t k = 1; k + 1 < face.size(); ++k) {
        mesh.indices.insert(mesh.indices.end(), {face[0], face[k], face[k + 1]});
      }
    }
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// glTF

struct Affine {
  Mat3 linear{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 translation;

  Vec3 apply(const Vec3& p) const { return linear * p + translation; }
  Affine then(const Affine& child) const {
    return {linear * child.linear, linear * child.translation + translation};
  }
};

Affine node_transform(const json& node) {
  Affine out;
  if (node.contains("matrix")) {
    const auto& m = node.at("matrix");
    if (m.size() != 16) throw FormatError("node matrix must have 16 entries");
    // Column-major.
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.linear[r][c] = m[c * 4 + r].get<double>();
    out.translation = {m[12].get<double>(), m[13].get<double>(), m[14].get<double>()};
    return out;
  }
  Vec3 scale{1, 1, 1};
  if (node.contains("scale")) {
    const auto& s = node.at("scale");
    scale = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  }
  Mat3 rot{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  if (node.contains("rotation")) {
    const auto& q = node.at("rotation");
    const double x = q[0], y = q[1], z = q[2], w = q[3];
    rot = {{{1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)},
            {2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)},
            {2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)}}};
  }
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.linear[r][c] = rot[r][c] * scale[c];
  if (node.contains("translation")) {
    const auto& t = node.at("translation");
    out.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  }
  return out;
}

class GltfReader {
 public:
  GltfReader(json document, fs::path base_dir, std::vector<std::uint8_t> glb_bin)
      : doc_(std::move(document)), base_dir_(std::move(base_dir)), glb_bin_(std::move(glb_bin)) {
    for (std::size_t i = 0; i < doc_.value("buffers", json::array()).size(); ++i) {
      buffers_.push_back(load_buffer(i));
    }
  }

  TriangleMesh read() {
    TriangleMesh mesh;
    const json& nodes = doc_.value("nodes", json::array());
    std::vector<std::size_t> roots;
    if (doc_.contains("scenes") && !doc_["scenes"].empty()) {
      const std::size_t scene = doc_.value("scene", 0);
      for (const auto& n : doc_["scenes"].at(scene).value("nodes", json::array()))
        roots.push_back(n.get<std::size_t>());
      for (auto root : roots) visit(nodes, root, Affine{}, mesh, 0);
    } else {
      for (std::size_t m = 0; m < doc_.value("meshes", json::array()).size(); ++m)
        append_mesh(m, Affine{}, mesh);
    }
    return mesh;
  }

 private:
  std::vector<std::uint8_t> load_buffer(std::size_t index) {
    const json& buffer = doc_["buffers"][index];
    if (!buffer.contains("uri")) {
      if (index != 0 || glb_bin_.empty()) throw FormatError("buffer without uri outside GLB");
      return glb_bin_;
    }
    const std::string uri = buffer["uri"].get<std::string>();
    if (uri.rfind("data:", 0) == 0) {
      const auto comma = uri.find(',');
      if (comma == std::string::npos || uri.find(";base64") > comma)
        throw FormatError("unsupported data uri");
      return base64_decode(uri.substr(comma + 1));
    }
    return read_bytes(base_dir_ / uri);
  }

  // Calls fn(index, element) per element; element is null without a buffer view.
  template <typename Fn>
  void for_each_element(const json& accessor, std::size_t element_size, Fn&& fn) {
    if (accessor.contains("sparse")) throw FormatError("sparse accessors are not supported");
    const std::size_t count = accessor.at("count").get<std::size_t>();
    if (!accessor.contains("bufferView")) {
      for (std::size_t i = 0; i < count; ++i) fn(i, nullptr);
      return;
    }
    const json& view = doc_.at("bufferViews").at(accessor["bufferView"].get<std::size_t>());
    const auto& data = buffers_.at(view.at("buffer").get<std::size_t>());
    const std::size_t offset = view.value("byteOffset", std::size_t{0}) +
                               accessor.value("byteOffset", std::size_t{0});
    const std::size_t stride = view.value("byteStride", element_size);
    if (count > 0 && offset + stride * (count - 1) + element_size > data.size())
      throw FormatError("accessor exceeds buffer bounds");
    for (std::size_t i = 0; i < count; ++i) fn(i, data.data() + offset + stride * i);
  }

  std::vector<Vec3> read_positions(std::size_t accessor_index) {
    const json& accessor = doc_.at("accessors").at(accessor_index);
    if (accessor.value("componentType", 0) != 5126 || accessor.value("type", "") != "VEC3")
      throw FormatError("POSITION accessor must be float VEC3");
    std::vector<Vec3> out(accessor.at("count").get<std::size_t>());
    for_each_element(accessor, 12, [&](std::size_t i, const std::uint8_t* p) {
      if (!p) return;
      float v[3];
      std::memcpy(v, p, sizeof(v));
      out[i] = {v[0], v[1], v[2]};
    });
    return out;
  }

  std::vector<std::uint32_t> read_indices(std::size_t accessor_index) {
    const json& accessor = doc_.at("accessors").at(accessor_index);
    const int type = accessor.value("componentType", 0);
    const std::size_t size = type == 5121 ? 1 : type == 5123 ? 2 : type == 5125 ? 4 : 0;
    if (size == 0) throw FormatError("unsupported index component type");
    std::vector<std::uint32_t> out(accessor.at("count").get<std::size_t>());
    for_each_element(accessor, size, [&](std::size_t i, const std::uint8_t* p) {
      if (!p) return;
      if (size == 1) {
        out[i] = *p;
      } else if (size == 2) {
        std::uint16_t v;
        std::memcpy(&v, p, 2);
        out[i] = v;
      } else {
        std::memcpy(&out[i], p, 4);
      }
    });
    return out;
  }

  void append_mesh(std::size_t mesh_index, const Affine& xf, TriangleMesh& out) {
    for (const auto& prim : doc_.at("meshes").at(mesh_index).at("primitives")) {
      const auto& attributes = prim.at("attributes");
      if (!attributes.contains("POSITION")) continue;
      const auto base = static_cast<std::uint32_t>(out.positions.size());
      const auto positions = read_positions(attributes["POSITION"].get<std::size_t>());
      for (const auto& p : positions) out.positions.push_back(xf.apply(p));
      if (prim.value("mode", 4) != 4) continue;
      if (prim.contains("indices")) {
        for (auto i : read_indices(prim["indices"].get<std::size_t>())) {
          if (i >= positions.size()) throw FormatError("index out of range");
          out.indices.push_back(base + i);
        }
      } else {
        for (std::uint32_t i = 0; i + 2 < positions.size(); i += 3)
          out.indices.insert(out.indices.end(), {base + i, base + i + 1, base + i + 2});
      }
    }
  }

  void visit(const json& nodes, std::size_t index, const Affine& parent, TriangleMesh& out,
             int depth) {
    if (depth > 256) throw FormatError("node hierarchy too deep or cyclic");
    const json& node = nodes.at(index);
    const Affine xf = parent.then(node_transform(node));
    if (node.contains("mesh")) append_mesh(node["mesh"].get<std::size_t>(), xf, out);
    for (const auto& child : node.value("children", json::array()))
      visit(nodes, child.get<std::size_t>(), xf, out, depth + 1);
  }

  json doc_;
  fs::path base_dir_;
  std::vector<std::uint8_t> glb_bin_;
  std::vector<std::vector<std::uint8_t>> buffers_;
};

std::uint32_t read_u32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  if (at + 4 > bytes.size()) throw FormatError("truncated GLB");
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + at, 4);
  return v;
}

TriangleMesh load_gltf(const fs::path& path, bool binary) {
  try {
    if (!binary) {
      std::ifstream in(path);
      if (!in) throw FormatError("cannot open " + path.string());
      return GltfReader(json::parse(in), path.parent_path(), {}).read();
    }
    const auto bytes = read_bytes(path);
    if (read_u32(bytes, 0) != 0x46546C67u) throw FormatError("not a GLB file");
    std::size_t at = 12;
    json document;
    std::vector<std::uint8_t> bin;
    while (at + 8 <= bytes.size()) {
      const std::uint32_t length = read_u32(bytes, at);
      const std::uint32_t type = read_u32(bytes, at + 4);
      if (at + 8 + length > bytes.size()) throw FormatError("truncated GLB chunk");
      const auto* begin = bytes.data() + at + 8;
      if (type == 0x4E4F534Au) document = json::parse(begin, begin + length);
      if (type == 0x004E4942u) bin.assign(begin, begin + length);
      at += 8 + length;
    }
    if (document.is_null()) throw FormatError("GLB without JSON chunk");
    return GltfReader(std::move(document), path.parent_path(), std::move(bin)).read();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

bool is_mesh_file(const fs::path& path) {
  const std::string ext = lower(path.extension().string());
  return ext == ".obj" || ext == ".gltf" || ext == ".glb";
}

TriangleMesh load_mesh(const fs::path& path) {
  const std::string ext = lower(path.extension().string());
  if (ext == ".obj") return load_obj(path);
  if (ext == ".gltf") return load_gltf(path, false);
  if (ext == ".glb") return load_gltf(path, true);
  throw FormatError("unsupported mesh format: " + path.string());
}

Aabb mesh_bounds(const TriangleMesh& mesh) {
  if (mesh.positions.empty()) throw std::invalid_argument("mesh has no vertices");
  constexpr double inf = std::numeric_limits<double>::infinity();
  Aabb box{{inf, inf, inf}, {-inf, -inf, -inf}};
  for (const auto& p : mesh.positions) {
    for (int axis = 0; axis < 3; ++axis) {
      box.min[axis] = std::min(box.min[axis], p[axis]);
      box.max[axis] = std::max(box.max[axis], p[axis]);
    }
  }
  return box;
}

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int written = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                      static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(written));
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  if (clean.size() % 4 != 0) throw FormatError("invalid base64 length");
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  const int written = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                                      static_cast<int>(clean.size()));
  if (written < 0) throw FormatError("invalid base64 data");
  std::size_t padding = 0;
  if (!clean.empty() && clean.back() == '=') ++padding;
  if (clean.size() > 1 && clean[clean.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(written) - padding);
  return out;
}

}  // namespace sceneforge
