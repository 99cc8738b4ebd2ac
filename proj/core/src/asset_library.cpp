#include "sceneforge/asset_library.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sceneforge/error.hpp"
#include "sceneforge/mesh_io.hpp"
#include "sceneforge/paths.hpp"
#include "sceneforge/reply_parsers.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kManifestFormat = "sceneforge-manifest";

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

json record_to_json(const AssetRecord& r) {
  return {
      {"id", r.id},
      {"mesh_path", r.mesh_path},
      {"size", {r.size.x, r.size.y, r.size.z}},
      {"front_yaw_offset", r.front_yaw_offset},
      {"caption",
       {{"physical", r.caption.physical},
        {"functional", r.caption.functional},
        {"contextual", r.caption.contextual}}},
      {"embedding_ref", r.embedding_ref ? json(*r.embedding_ref) : json(nullptr)},
      {"display_name", r.display_name},
      {"flags",
       {{"orientation_unresolved", r.orientation_unresolved},
        {"caption_incomplete", r.caption_incomplete}}},
  };
}

AssetRecord record_from_json(const json& j) {
  AssetRecord r;
  r.id = j.at("id").get<std::string>();
  r.mesh_path = j.at("mesh_path").get<std::string>();
  const auto& s = j.at("size");
  r.size = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  r.front_yaw_offset = j.at("front_yaw_offset").get<int>();
  const auto& c = j.at("caption");
  r.caption = {c.at("physical").get<std::string>(), c.at("functional").get<std::string>(),
               c.at("contextual").get<std::string>()};
  if (!j.at("embedding_ref").is_null()) r.embedding_ref = j["embedding_ref"].get<std::string>();
  r.display_name = j.at("display_name").get<std::string>();
  const auto& flags = j.at("flags");
  r.orientation_unresolved = flags.at("orientation_unresolved").get<bool>();
  r.caption_incomplete = flags.at("caption_incomplete").get<bool>();

  if (r.size.x <= 0 || r.size.y <= 0 || r.size.z <= 0 || !is_finite(r.size))
    throw FormatError("record " + r.id + " has a non-positive size");
  if (r.front_yaw_offset % 90 != 0 || r.front_yaw_offset < 0 || r.front_yaw_offset > 270)
    throw FormatError("record " + r.id + " has an invalid front_yaw_offset");
  return r;
}

TripartiteCaption caption_from_sections(const json& sections) {
  return {sections.value("physical", ""), sections.value("functional", ""),
          sections.value("contextual", "")};
}

}  // namespace

Vec3 AssetRecord::canonical_size() const {
  return size_after_rotation(size, EulerRotation::from_yaw(front_yaw_offset)).size;
}

const AssetRecord* LibraryManifest::find(const std::string& id) const {
  auto it = std::find_if(records.begin(), records.end(),
                         [&](const AssetRecord& r) { return r.id == id; });
  return it == records.end() ? nullptr : &*it;
}

Vec3 measure_asset(const fs::path& mesh_path) {
  const std::string asset = mesh_path.filename().string();
  TriangleMesh mesh;
  try {
    mesh = load_mesh(mesh_path);
  } catch (const FormatError& e) {
    throw IngestError(asset, e.what());
  }
  if (mesh.positions.empty()) throw IngestError(asset, "mesh has no vertices");
  const Vec3 extent = mesh_bounds(mesh).extent();
  if (!is_finite(extent) || extent.x <= 0.0 || extent.y <= 0.0 || extent.z <= 0.0)
    throw IngestError(asset, "mesh has zero extent along at least one axis");
  return extent;
}

int view_index_to_yaw(int index) {
  if (index < 1 || index > 4) throw std::invalid_argument("view index must be 1..4");
  return (index - 1) * 90;
}

OrientationResult infer_front_orientation(const std::array<fs::path, 4>& views,
                                          const std::string& name, ProviderClient& client) {
  auto request = client.make_request(RequestKind::orient, {{"name", name}},
                                     std::vector<fs::path>(views.begin(), views.end()));
  try {
    const auto reply = client.complete(request);
    return {view_index_to_yaw(reply.parsed.at("index").get<int>()), false};
  } catch (const ProviderError& e) {
    spdlog::warn("orientation unresolved for '{}': {}", name, e.what());
    return {0, true};
  }
}

TripartiteCaption caption_asset(const std::array<fs::path, 2>& views, const std::string& name,
                                ProviderClient& client) {
  auto request = client.make_request(RequestKind::caption, {{"name", name}},
                                     std::vector<fs::path>(views.begin(), views.end()));
  try {
    const auto reply = client.complete(request);
    return caption_from_sections(reply.parsed);
  } catch (const ProviderError& e) {
    if (e.is_transport()) throw;
    throw CaptionIncomplete(caption_from_sections(parse_caption_sections(e.raw_text())),
                            "caption for '" + name + "' is missing sections: " + e.what());
  }
}

std::string asset_content_id(const fs::path& mesh_path) {
  std::ifstream in(mesh_path, std::ios::binary);
  if (!in) throw IngestError(mesh_path.filename().string(), "cannot read mesh file");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    EVP_DigestUpdate(ctx.get(), buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  std::ostringstream hex;
  // 64 bits of the digest is plenty for libraries of this size.
  for (unsigned int i = 0; i < 8 && i < length; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string display_name_for(const fs::path& mesh_path) {
  std::string name = mesh_path.stem().string();
  std::replace_if(name.begin(), name.end(), [](char c) { return c == '_' || c == '-'; }, ' ');
  return name;
}

IngestResult ingest(const fs::path& asset_dir, ProviderClient& client, const IngestOptions& options,
                    const LibraryManifest* previous) {
  if (!fs::is_directory(asset_dir))
    throw std::invalid_argument("asset directory not found: " + asset_dir.string());

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(asset_dir)) {
    if (entry.is_regular_file() && is_mesh_file(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  struct Slot {
    std::optional<AssetRecord> record;
    std::optional<IngestIssue> error;
    std::vector<IngestIssue> warnings;
  };
  std::vector<Slot> slots(files.size());

  auto process = [&](std::size_t i) {
    const fs::path& file = files[i];
    const fs::path side = asset_dir / file.stem();
    Slot& slot = slots[i];
    AssetRecord record;
    try {
      record.id = asset_content_id(file);
      record.mesh_path = (asset_dir / file.filename()).generic_string();
      record.display_name = display_name_for(file);
      record.size = y_up_extent_to_core(measure_asset(file));
    } catch (const IngestError& e) {
      slot.error = IngestIssue{file.filename().string(), e.what()};
      return;
    }

    if (!options.skip_orientation) {
      const std::array<fs::path, 4> views{side / "views" / "0.png", side / "views" / "90.png",
                                          side / "views" / "180.png", side / "views" / "270.png"};
      const auto orientation = infer_front_orientation(views, record.display_name, client);
      record.front_yaw_offset = orientation.front_yaw_offset;
      record.orientation_unresolved = orientation.unresolved;
      if (orientation.unresolved)
        slot.warnings.push_back({record.id, "orientation unresolved; offset 0 stored"});
    }

    const std::array<fs::path, 2> caption_views{side / "caption" / "a.png", side / "caption" / "b.png"};
    try {
      record.caption = caption_asset(caption_views, record.display_name, client);
    } catch (const CaptionIncomplete& e) {
      record.caption = e.partial();
      record.caption_incomplete = true;
      slot.warnings.push_back({record.id, e.what()});
    } catch (const ProviderError& e) {
      record.caption_incomplete = true;
      slot.warnings.push_back({record.id, std::string("captioning failed: ") + e.what()});
    }
    slot.record = std::move(record);
  };

  const unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(files.size())));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < files.size(); ++i) process(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < files.size(); i = next++) process(i);
      });
    }
  }

  IngestResult result;
  result.manifest.version = previous ? previous->version + 1 : 1;
  result.manifest.created_at = utc_timestamp();
  std::set<std::string> ids;
  for (auto& slot : slots) {
    result.warnings.insert(result.warnings.end(), slot.warnings.begin(), slot.warnings.end());
    if (slot.error) {
      result.errors.push_back(*slot.error);
      continue;
    }
    if (!ids.insert(slot.record->id).second) {
      result.errors.push_back({slot.record->id, slot.record->mesh_path + " duplicates the content of an earlier asset"});
      continue;
    }
    result.manifest.records.push_back(std::move(*slot.record));
  }
  for (const auto& e : result.errors) spdlog::warn("ingest error: {}: {}", e.asset, e.message);
  return result;
}

std::string serialize_manifest(const LibraryManifest& manifest) {
  std::string out = json{{"format", kManifestFormat},
                         {"format_version", LibraryManifest::kFormatVersion},
                         {"version", manifest.version},
                         {"created_at", manifest.created_at},
                         {"count", manifest.records.size()}}
                        .dump();
  out.push_back('\n');
  for (const auto& record : manifest.records) {
    out += record_to_json(record).dump();
    out.push_back('\n');
  }
  return out;
}

LibraryManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("manifest is empty");
  LibraryManifest manifest;
  std::size_t expected = 0;
  try {
    const json header = json::parse(line);
    if (header.value("format", "") != kManifestFormat) throw FormatError("not a sceneforge manifest");
    const int format_version = header.at("format_version").get<int>();
    if (format_version > LibraryManifest::kFormatVersion)
      throw FormatVersionError("manifest format version " + std::to_string(format_version) +
                               " is newer than supported version " +
                               std::to_string(LibraryManifest::kFormatVersion));
    manifest.version = header.at("version").get<int>();
    manifest.created_at = header.at("created_at").get<std::string>();
    expected = header.at("count").get<std::size_t>();
    std::set<std::string> ids;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      AssetRecord record = record_from_json(json::parse(line));
      if (!ids.insert(record.id).second) throw FormatError("duplicate record id " + record.id);
      manifest.records.push_back(std::move(record));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  if (manifest.records.size() != expected)
    throw FormatError("manifest header promises " + std::to_string(expected) + " records, found " +
                      std::to_string(manifest.records.size()));
  return manifest;
}

void write_manifest(const LibraryManifest& manifest, const fs::path& path) {
  write_file_atomic(path, serialize_manifest(manifest));
}

LibraryManifest read_manifest(const fs::path& path) { return parse_manifest(read_file(path)); }

}  // namespace sceneforge
