#pragma once

// Dense caption embeddings with exact cosine search.
//
// On-disk layout (little-endian):
//   bytes  0..7   magic "SFEMBED\0"
//   u32           format version (1)
//   u32           dimension
//   u32 + bytes   provider tag length, UTF-8 tag
//   u32           entry count
//   per entry:    u32 id length, id bytes, dimension x f32

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sceneforge/asset_library.hpp"
#include "sceneforge/model_provider.hpp"

namespace sceneforge {

using EmbeddingVector = std::vector<float>;

struct ScoredId {
  std::string id;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// Throws std::invalid_argument on a dimension mismatch or a zero vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Headers and all three sections, in a fixed order.
std::string caption_document(const TripartiteCaption& caption);

class EmbedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Requires a complete caption (std::invalid_argument otherwise). Provider
// failures surface as EmbedError.
EmbeddingVector embed_caption(const TripartiteCaption& caption, ProviderClient& client);

class VectorIndex {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;

  VectorIndex() = default;
  // A zero dimension is only useful for an index that stays empty.
  VectorIndex(std::size_t dimension, std::string provider_tag);

  std::size_t dimension() const { return dimension_; }
  const std::string& provider_tag() const { return provider_tag_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  const EmbeddingVector& at(const std::string& id) const { return entries_.at(id); }
  const std::map<std::string, EmbeddingVector>& entries() const { return entries_; }

  // Rejects wrong dimensions, non-finite values and all-zero vectors.
  void insert(const std::string& id, EmbeddingVector vector);

  // Exact ranking by cosine score, descending; ties by ascending id.
  std::vector<ScoredId> top_k(const EmbeddingVector& query, std::size_t k) const;

  void save(const std::filesystem::path& path) const;
  static VectorIndex load(const std::filesystem::path& path);

  std::string serialize() const;
  static VectorIndex deserialize(const std::string& bytes);

 private:
  std::size_t dimension_ = 0;
  std::string provider_tag_;
  std::map<std::string, EmbeddingVector> entries_;
};

struct EmbedIssue {
  std::string asset;
  std::string message;
};

struct IndexBuildResult {
  VectorIndex index;
  std::vector<EmbedIssue> omitted;
};

// Embeds every record with a complete caption and sets its embedding_ref.
// Records with incomplete captions or failed embeddings are left out.
IndexBuildResult build_index(LibraryManifest& manifest, ProviderClient& client);

}  // namespace sceneforge
