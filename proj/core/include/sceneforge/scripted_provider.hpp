#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sceneforge/model_provider.hpp"

namespace sceneforge {

struct ScriptedReply {
  RequestKind kind = RequestKind::vote;
  // Reply applies only when the prompt contains this substring.
  std::optional<std::string> match;
  std::string text;
};

// Offline replies for every request kind.
//
// File format (JSON):
//   {
//     "provider_tag": "scripted",          optional
//     "embedding_dim": 64,                 optional
//     "defaults": {"vote": "1", ...},      optional, per kind
//     "replies": [
//       {"kind": "place", "match": "Object to place: plant", "text": "..."},
//       {"kind": "order", "reply": {"order": ["a", "b"]}}
//     ]
//   }
// A "reply" object is serialized into a fenced json block. Reply and default
// texts may use {identifier} placeholders, filled from the request context.
struct ScriptedFixture {
  std::string provider_tag = "scripted";
  std::size_t embedding_dim = 64;
  std::vector<ScriptedReply> replies;
  std::map<RequestKind, std::string> defaults;

  static ScriptedFixture from_json(const nlohmann::json& doc);
  static ScriptedFixture load(const std::filesystem::path& path);

  // Fills in a neutral default for every kind the fixture leaves open.
  void add_builtin_defaults();
};

// Feature-hashed bag of words; deterministic and never all-zero.
std::vector<float> hash_embedding(std::string_view text, std::size_t dimension);

// Replays fixture replies. Caption and orient replies are keyed: the first
// matching entry is returned every time. Other kinds are consumed in fixture
// order, then fall back to the kind's default.
class ScriptedProvider final : public ModelProvider {
 public:
  explicit ScriptedProvider(ScriptedFixture fixture);

  std::string tag() const override { return fixture_.provider_tag; }
  Completion complete(const ProviderRequest& request) override;
  std::vector<float> embed(const std::string& document) override;

  // Number of complete() calls served so far, per kind.
  std::size_t calls(RequestKind kind) const;

 private:
  ScriptedFixture fixture_;
  mutable std::mutex mutex_;
  std::vector<bool> consumed_;
  std::map<RequestKind, std::size_t> calls_;
};

}  // namespace sceneforge
