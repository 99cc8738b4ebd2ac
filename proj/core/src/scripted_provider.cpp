#include "sceneforge/scripted_provider.hpp"

#include <cctype>
#include <fstream>

#include "sceneforge/error.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

bool is_keyed(RequestKind kind) {
  return kind == RequestKind::caption || kind == RequestKind::orient;
}

std::string reply_text(const json& entry) {
  if (entry.contains("reply")) return "```json\n" + entry["reply"].dump(2) + "\n```";
  if (entry.contains("text")) return entry["text"].get<std::string>();
  throw FormatError("fixture reply needs \"text\" or \"reply\"");
}

RequestKind kind_of(const std::string& name) {
  auto kind = parse_request_kind(name);
  if (!kind) throw FormatError("unknown request kind in fixture: " + name);
  return *kind;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

ScriptedFixture ScriptedFixture::from_json(const json& doc) {
  ScriptedFixture fixture;
  try {
    fixture.provider_tag = doc.value("provider_tag", fixture.provider_tag);
    fixture.embedding_dim = doc.value("embedding_dim", fixture.embedding_dim);
    if (fixture.embedding_dim == 0) throw FormatError("embedding_dim must be positive");
    const json defaults = doc.value("defaults", json::object());
    for (const auto& [name, value] : defaults.items()) {
      fixture.defaults[kind_of(name)] =
          value.is_string() ? value.get<std::string>() : reply_text(json{{"reply", value}});
    }
    const json replies = doc.value("replies", json::array());
    for (const auto& entry : replies) {
      ScriptedReply reply;
      reply.kind = kind_of(entry.at("kind").get<std::string>());
      if (entry.contains("match")) reply.match = entry["match"].get<std::string>();
      reply.text = reply_text(entry);
      fixture.replies.push_back(std::move(reply));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed scripted fixture: ") + e.what());
  }
  fixture.add_builtin_defaults();
  return fixture;
}

ScriptedFixture ScriptedFixture::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open fixture " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw FormatError("fixture is not valid JSON: " + path.string());
  return from_json(doc);
}

void ScriptedFixture::add_builtin_defaults() {
  const std::map<RequestKind, std::string> builtin{
      {RequestKind::caption,
       "(1) Physical properties: {name}\n(2) Functional properties: {name}\n"
       "(3) Contextual properties: {name}"},
      {RequestKind::orient, "1"},
      {RequestKind::vote, "1"},
      {RequestKind::extract_objects, "```json\n{\"objects\": []}\n```"},
      {RequestKind::extract_constraints, "```json\n{\"constraints\": []}\n```"},
      {RequestKind::order, "```json\n{\"order\": {slot_ids_json}}\n```"},
      {RequestKind::place,
       "```json\n{\"position\": {room_center}, \"rotation\": {\"yaw\": 0, \"pitch\": 0, "
       "\"roll\": 0}}\n```"},
      {RequestKind::refine, "```json\n{\"action\": \"keep\", \"rationale\": \"scripted default\"}\n```"},
      {RequestKind::embed, ""},
  };
  for (const auto& [kind, text] : builtin) defaults.try_emplace(kind, text);
}

std::vector<float> hash_embedding(std::string_view text, std::size_t dimension) {
  if (dimension == 0) throw std::invalid_argument("embedding dimension must be positive");
  std::vector<float> out(dimension, 0.0f);
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    const std::uint64_t h = fnv1a(token);
    out[h % dimension] += (h >> 63) ? -1.0f : 1.0f;
    token.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  bool all_zero = true;
  for (float v : out) all_zero = all_zero && v == 0.0f;
  if (all_zero) out[0] = 1.0f;
  return out;
}

ScriptedProvider::ScriptedProvider(ScriptedFixture fixture)
    : fixture_(std::move(fixture)), consumed_(fixture_.replies.size(), false) {
  fixture_.add_builtin_defaults();
}

Completion ScriptedProvider::complete(const ProviderRequest& request) {
  auto matches = [&](const ScriptedReply& reply) {
    return reply.kind == request.kind &&
           (!reply.match || request.prompt.find(*reply.match) != std::string::npos);
  };

  std::string text;
  bool found = false;
  if (is_keyed(request.kind)) {
    // Read-only path: safe under concurrent ingestion.
    for (const auto& reply : fixture_.replies) {
      if (matches(reply)) {
        text = reply.text;
        found = true;
        break;
      }
    }
    std::lock_guard lock(mutex_);
    ++calls_[request.kind];
  } else {
    std::lock_guard lock(mutex_);
    ++calls_[request.kind];
    for (std::size_t i = 0; i < fixture_.replies.size(); ++i) {
      if (!consumed_[i] && matches(fixture_.replies[i])) {
        consumed_[i] = true;
        text = fixture_.replies[i].text;
        found = true;
        break;
      }
    }
  }
  if (!found) text = fixture_.defaults.at(request.kind);
  return {PromptTemplates::substitute(text, request.context, false), {}};
}

std::vector<float> ScriptedProvider::embed(const std::string& document) {
  return hash_embedding(document, fixture_.embedding_dim);
}

std::size_t ScriptedProvider::calls(RequestKind kind) const {
  std::lock_guard lock(mutex_);
  auto it = calls_.find(kind);
  return it == calls_.end() ? 0 : it->second;
}

}  // namespace sceneforge
