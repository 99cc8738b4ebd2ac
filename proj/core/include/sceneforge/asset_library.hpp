#pragma once

// Asset ingestion: measure meshes, infer the front-facing quarter turn from
// four turntable views, caption from two views, persist a manifest.
//
// Expected layout for an asset file `<dir>/<stem>.<ext>`:
//   <dir>/<stem>/views/{0,90,180,270}.png   orientation views
//   <dir>/<stem>/caption/{a,b}.png          caption views

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sceneforge/geometry.hpp"
#include "sceneforge/model_provider.hpp"

namespace sceneforge {

struct TripartiteCaption {
  std::string physical;
  std::string functional;
  std::string contextual;

  bool complete() const { return !physical.empty() && !functional.empty() && !contextual.empty(); }
  friend bool operator==(const TripartiteCaption&, const TripartiteCaption&) = default;
};

struct AssetRecord {
  std::string id;  // content hash of the mesh file
  std::string mesh_path;
  // Extents of the unrotated mesh, in the Z-up core frame.
  Vec3 size;
  // Quarter turn about the up axis that brings the mesh to its canonical
  // forward direction: 0, 90, 180 or 270.
  int front_yaw_offset = 0;
  TripartiteCaption caption;
  std::optional<std::string> embedding_ref;
  std::string display_name;
  bool orientation_unresolved = false;
  bool caption_incomplete = false;

  // Extents after the front offset is applied; what layout works with.
  Vec3 canonical_size() const;

  friend bool operator==(const AssetRecord&, const AssetRecord&) = default;
};

struct LibraryManifest {
  static constexpr int kFormatVersion = 1;

  int version = 0;
  std::string created_at;
  std::vector<AssetRecord> records;

  const AssetRecord* find(const std::string& id) const;
};

// Throws IngestError on unreadable or zero-extent meshes.
Vec3 measure_asset(const std::filesystem::path& mesh_path);

struct OrientationResult {
  int front_yaw_offset = 0;
  bool unresolved = false;
};

// Maps a 1-based view index to the yaw of that view.
int view_index_to_yaw(int index);

OrientationResult infer_front_orientation(const std::array<std::filesystem::path, 4>& views,
                                          const std::string& name, ProviderClient& client);

class CaptionIncomplete : public std::runtime_error {
 public:
  CaptionIncomplete(TripartiteCaption partial, const std::string& message)
      : std::runtime_error(message), partial_(std::move(partial)) {}
  const TripartiteCaption& partial() const { return partial_; }

 private:
  TripartiteCaption partial_;
};

// Throws CaptionIncomplete with whatever sections were recovered.
TripartiteCaption caption_asset(const std::array<std::filesystem::path, 2>& views,
                                const std::string& name, ProviderClient& client);

std::string asset_content_id(const std::filesystem::path& mesh_path);
std::string display_name_for(const std::filesystem::path& mesh_path);

struct IngestOptions {
  bool skip_orientation = false;
  unsigned jobs = 1;
};

struct IngestIssue {
  std::string asset;
  std::string message;
};

struct IngestResult {
  LibraryManifest manifest;
  std::vector<IngestIssue> errors;
  std::vector<IngestIssue> warnings;
};

// One record per parseable mesh in `asset_dir`, in file-name order.
// `previous` supplies the version to increment on re-ingest.
IngestResult ingest(const std::filesystem::path& asset_dir, ProviderClient& client,
                    const IngestOptions& options, const LibraryManifest* previous = nullptr);

// Line-delimited JSON: a header line, then one line per record.
std::string serialize_manifest(const LibraryManifest& manifest);
LibraryManifest parse_manifest(const std::string& text);

void write_manifest(const LibraryManifest& manifest, const std::filesystem::path& path);
LibraryManifest read_manifest(const std::filesystem::path& path);

}  // namespace sceneforge
