#include "sceneforge/retrieval.hpp"

#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "sceneforge/error.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

std::string lowercase(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string candidates_listing(const std::vector<ScoredId>& candidates,
                               const LibraryManifest& manifest) {
  std::ostringstream out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const AssetRecord* record = manifest.find(candidates[i].id);
    out << (i + 1) << ". ";
    if (!record) {
      out << candidates[i].id << "\n";
      continue;
    }
    out << record->display_name << "\n   Physical: " << record->caption.physical
        << "\n   Functional: " << record->caption.functional
        << "\n   Contextual: " << record->caption.contextual << "\n";
  }
  return out.str();
}

json caption_json(const TripartiteCaption& c) {
  return {{"physical", c.physical}, {"functional", c.functional}, {"contextual", c.contextual}};
}

TripartiteCaption caption_from(const json& j) {
  return {j.value("physical", ""), j.value("functional", ""), j.value("contextual", "")};
}

}  // namespace

std::string slot_base_id(const std::string& name) {
  std::string out;
  bool pending_sep = false;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (pending_sep && !out.empty()) out.push_back('_');
      pending_sep = false;
      out.push_back(static_cast<char>(std::tolower(u)));
    } else {
      pending_sep = true;
    }
  }
  return out.empty() ? "object" : out;
}

std::vector<RequiredObject> extract_required_objects(const std::string& scene_prompt,
                                                     ProviderClient& client,
                                                     std::optional<int> override_count) {
  if (scene_prompt.find_first_not_of(" \t\r\n") == std::string::npos)
    throw std::invalid_argument("scene prompt is empty");
  if (override_count && *override_count < 1)
    throw std::invalid_argument("override count must be at least 1");

  std::string instruction;
  if (override_count)
    instruction = "Select exactly " + std::to_string(*override_count) +
                  " different object types for this scene.";
  const auto reply = client.complete(client.make_request(
      RequestKind::extract_objects, {{"scene_prompt", scene_prompt}, {"count_instruction", instruction}}));

  std::vector<RequiredObject> objects;
  std::set<std::string> seen;
  for (const auto& item : reply.parsed.at("objects")) {
    RequiredObject object;
    object.name = item.at("name").get<std::string>();
    object.count = item.value("count", 1);
    if (item.contains("description")) object.description = caption_from(item["description"]);
    if (object.description.physical.empty()) object.description.physical = object.name;
    if (!seen.insert(lowercase(object.name)).second) {
      spdlog::warn("duplicate required object '{}' merged", object.name);
      continue;
    }
    objects.push_back(std::move(object));
  }
  if (objects.empty()) spdlog::warn("retrieval-empty: no objects extracted from the prompt");
  return objects;
}

std::vector<ScoredId> shortlist(const RequiredObject& required, const VectorIndex& index,
                                ProviderClient& client, std::size_t k) {
  if (index.empty()) throw std::invalid_argument("shortlist: index is empty");
  return index.top_k(client.embed(caption_document(required.description)), k);
}

RetrievalDecision vote(const RequiredObject& required, const std::vector<ScoredId>& candidates,
                       const LibraryManifest& manifest, ProviderClient& client) {
  if (candidates.empty() || candidates.size() > 5)
    throw std::invalid_argument("vote needs between 1 and 5 candidates");
  RetrievalDecision decision;
  decision.required = required;
  decision.candidates = candidates;

  const PromptContext context{
      {"name", required.name},
      {"description", caption_document(required.description)},
      {"candidates", candidates_listing(candidates, manifest)},
      {"candidate_count", std::to_string(candidates.size())},
  };
  try {
    const auto reply = client.complete(client.make_request(RequestKind::vote, context));
    const auto& selection = reply.parsed.at("selection");
    if (!selection.is_null()) decision.selected = candidates.at(selection.get<std::size_t>() - 1).id;
  } catch (const ProviderError& e) {
    if (e.is_transport()) throw;
    spdlog::warn("vote for '{}' unparseable, using top candidate: {}", required.name, e.what());
    decision.selected = candidates.front().id;
    decision.degraded = true;
  }
  return decision;
}

RetrievalReport retrieve_scene_assets(const std::string& scene_prompt,
                                      const LibraryManifest& manifest, const VectorIndex& index,
                                      ProviderClient& client, const RetrievalOptions& options) {
  RetrievalReport report;
  const auto objects = extract_required_objects(scene_prompt, client, options.override_count);
  if (objects.empty()) report.warnings.push_back("retrieval-empty: no objects extracted");

  std::map<std::string, int> base_uses;
  for (const auto& object : objects) {
    RetrievalDecision decision;
    try {
      decision = vote(object, shortlist(object, index, client, options.k), manifest, client);
    } catch (const std::exception& e) {
      decision.required = object;
      decision.error = e.what();
      report.warnings.push_back(object.name + ": " + e.what());
    }
    if (decision.selected && !manifest.find(*decision.selected)) {
      report.warnings.push_back(object.name + ": selected asset " + *decision.selected +
                                " is not in the manifest");
      decision.selected.reset();
    }
    if (!decision.selected) report.warnings.push_back("no match for '" + object.name + "'");

    std::string base = slot_base_id(object.name);
    if (const int uses = base_uses[base]++; uses > 0) base += "_v" + std::to_string(uses + 1);
    const int count = std::max(1, object.count);
    for (int i = 1; i <= count; ++i) {
      RetrievalDecision instance = decision;
      instance.slot_id = count == 1 ? base : base + "_" + std::to_string(i);
      report.decisions.push_back(std::move(instance));
    }
  }
  return report;
}

json decisions_to_json(const std::vector<RetrievalDecision>& decisions) {
  json out = json::array();
  for (const auto& d : decisions) {
    json candidates = json::array();
    for (const auto& c : d.candidates) candidates.push_back({{"asset_id", c.id}, {"score", c.score}});
    json entry{
        {"slot_id", d.slot_id},
        {"required",
         {{"name", d.required.name},
          {"count", d.required.count},
          {"description", caption_json(d.required.description)}}},
        {"candidates", candidates},
        {"outcome", d.selected ? "selected" : "no_match"},
        {"asset_id", d.selected ? json(*d.selected) : json(nullptr)},
        {"degraded", d.degraded},
    };
    if (!d.error.empty()) entry["error"] = d.error;
    out.push_back(std::move(entry));
  }
  return out;
}

std::vector<RetrievalDecision> decisions_from_json(const json& doc) {
  std::vector<RetrievalDecision> out;
  try {
    for (const auto& entry : doc) {
      RetrievalDecision d;
      d.slot_id = entry.at("slot_id").get<std::string>();
      const auto& req = entry.at("required");
      d.required.name = req.at("name").get<std::string>();
      d.required.count = req.value("count", 1);
      if (req.contains("description")) d.required.description = caption_from(req["description"]);
      for (const auto& c : entry.value("candidates", json::array()))
        d.candidates.push_back({c.at("asset_id").get<std::string>(), c.at("score").get<double>()});
      if (!entry.at("asset_id").is_null()) d.selected = entry["asset_id"].get<std::string>();
      d.degraded = entry.value("degraded", false);
      d.error = entry.value("error", "");
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed decisions report: ") + e.what());
  }
  return out;
}

}  // namespace sceneforge
