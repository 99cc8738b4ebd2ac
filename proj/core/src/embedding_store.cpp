#include "sceneforge/embedding_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include <spdlog/spdlog.h>

#include "sceneforge/error.hpp"
#include "sceneforge/paths.hpp"

namespace sceneforge {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'E', 'M', 'B', 'E', 'D', '\0'};

static_assert(std::endian::native == std::endian::little,
              "index serialization assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) throw FormatError("embedding index is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  std::string str() {
    std::string s(u32(), '\0');
    take(s.data(), s.size());
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

double squared_norm(const EmbeddingVector& v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return s;
}

}  // namespace

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double ab = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += static_cast<double>(a[i]) * b[i];
  const double aa = squared_norm(a);
  const double bb = squared_norm(b);
  if (aa == 0.0 || bb == 0.0) throw std::invalid_argument("cosine_similarity: zero vector");
  // sqrt(aa * bb) rather than sqrt(aa) * sqrt(bb) keeps cos(a, a) exactly 1.
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

std::string caption_document(const TripartiteCaption& caption) {
  return "Physical properties: " + caption.physical + "\nFunctional properties: " +
         caption.functional + "\nContextual properties: " + caption.contextual;
}

EmbeddingVector embed_caption(const TripartiteCaption& caption, ProviderClient& client) {
  if (!caption.complete()) throw std::invalid_argument("embed_caption: caption is incomplete");
  try {
    return client.embed(caption_document(caption));
  } catch (const ProviderError& e) {
    throw EmbedError(e.what());
  }
}

VectorIndex::VectorIndex(std::size_t dimension, std::string provider_tag)
    : dimension_(dimension), provider_tag_(std::move(provider_tag)) {}

void VectorIndex::insert(const std::string& id, EmbeddingVector vector) {
  if (vector.size() != dimension_)
    throw std::invalid_argument("vector for " + id + " has dimension " +
                                std::to_string(vector.size()) + ", index expects " +
                                std::to_string(dimension_));
  bool nonzero = false;
  for (float v : vector) {
    if (!std::isfinite(v)) throw std::invalid_argument("vector for " + id + " is not finite");
    nonzero = nonzero || v != 0.0f;
  }
  if (!nonzero) throw std::invalid_argument("vector for " + id + " is all zero");
  entries_[id] = std::move(vector);
}

std::vector<ScoredId> VectorIndex::top_k(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("top_k: k must be at least 1");
  std::vector<ScoredId> scored;
  scored.reserve(entries_.size());
  for (const auto& [id, v] : entries_) scored.push_back({id, cosine_similarity(query, v)});
  auto better = [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                    better);
  scored.resize(n);
  return scored;
}

std::string VectorIndex::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(dimension_));
  put_u32(out, static_cast<std::uint32_t>(provider_tag_.size()));
  out += provider_tag_;
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [id, v] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out += id;
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  return out;
}

VectorIndex VectorIndex::deserialize(const std::string& bytes) {
  Reader in(bytes);
  char magic[sizeof(kMagic)];
  in.take(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FormatError("not a sceneforge embedding index");
  const std::uint32_t version = in.u32();
  if (version > kFormatVersion)
    throw FormatVersionError("embedding index version " + std::to_string(version) +
                             " is newer than supported version " + std::to_string(kFormatVersion));
  const std::uint32_t dimension = in.u32();
  VectorIndex index(dimension, in.str());
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = in.str();
    EmbeddingVector v(dimension);
    in.take(v.data(), dimension * sizeof(float));
    if (index.contains(id)) throw FormatError("duplicate id in embedding index: " + id);
    try {
      index.insert(id, std::move(v));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what());
    }
  }
  if (!in.done()) throw FormatError("trailing bytes after embedding index");
  return index;
}

void VectorIndex::save(const std::filesystem::path& path) const {
  write_file_atomic(path, serialize());
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

IndexBuildResult build_index(LibraryManifest& manifest, ProviderClient& client) {
  IndexBuildResult result{VectorIndex(0, client.provider_tag()), {}};
  for (auto& record : manifest.records) {
    record.embedding_ref.reset();
    if (!record.caption.complete()) {
      result.omitted.push_back({record.id, "caption incomplete; retrievable by name only"});
      continue;
    }
    try {
      EmbeddingVector v = embed_caption(record.caption, client);
      if (result.index.dimension() == 0) result.index = VectorIndex(v.size(), client.provider_tag());
      result.index.insert(record.id, std::move(v));
      record.embedding_ref = record.id;
    } catch (const EmbedError& e) {
      result.omitted.push_back({record.id, e.what()});
    } catch (const std::invalid_argument& e) {
      result.omitted.push_back({record.id, e.what()});
    }
  }
  for (const auto& issue : result.omitted)
    spdlog::warn("embedding omitted for {}: {}", issue.asset, issue.message);
  return result;
}

}  // namespace sceneforge
