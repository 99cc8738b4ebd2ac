#pragma once

// Scene prompt -> concrete assets: extract the required objects, shortlist
// library candidates by caption embedding, then let the provider vote.

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sceneforge/asset_library.hpp"
#include "sceneforge/embedding_store.hpp"
#include "sceneforge/model_provider.hpp"

namespace sceneforge {

struct RequiredObject {
  std::string name;
  int count = 1;
  // Describes the object the scene wants, not a library asset.
  TripartiteCaption description;

  friend bool operator==(const RequiredObject&, const RequiredObject&) = default;
};

struct RetrievalDecision {
  std::string slot_id;
  RequiredObject required;
  std::vector<ScoredId> candidates;
  // Set for a Selected outcome; empty means NoMatch.
  std::optional<std::string> selected;
  // The vote could not be parsed and top-1 was taken instead.
  bool degraded = false;
  // Non-empty when this object failed outright.
  std::string error;

  bool is_match() const { return selected.has_value(); }
};

inline constexpr std::size_t kDefaultShortlistSize = 5;

// "L-shaped sofa" -> "l_shaped_sofa".
std::string slot_base_id(const std::string& name);

// Throws std::invalid_argument on an empty prompt. Duplicate names are merged
// into the first occurrence.
std::vector<RequiredObject> extract_required_objects(const std::string& scene_prompt,
                                                     ProviderClient& client,
                                                     std::optional<int> override_count = {});

std::vector<ScoredId> shortlist(const RequiredObject& required, const VectorIndex& index,
                                ProviderClient& client, std::size_t k = kDefaultShortlistSize);

// One decision for the object. A vote that cannot be parsed falls back to the
// top candidate and sets `degraded`.
RetrievalDecision vote(const RequiredObject& required, const std::vector<ScoredId>& candidates,
                       const LibraryManifest& manifest, ProviderClient& client);

struct RetrievalOptions {
  std::size_t k = kDefaultShortlistSize;
  std::optional<int> override_count;
};

struct RetrievalReport {
  // One entry per object instance, counts expanded, in extraction order.
  std::vector<RetrievalDecision> decisions;
  std::vector<std::string> warnings;
};

RetrievalReport retrieve_scene_assets(const std::string& scene_prompt,
                                      const LibraryManifest& manifest, const VectorIndex& index,
                                      ProviderClient& client, const RetrievalOptions& options = {});

nlohmann::json decisions_to_json(const std::vector<RetrievalDecision>& decisions);
std::vector<RetrievalDecision> decisions_from_json(const nlohmann::json& doc);

}  // namespace sceneforge
