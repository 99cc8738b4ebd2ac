#pragma once

// Gateway to text, vision and embedding models. Every reply that leaves
// ProviderClient::complete has been parsed and schema-validated.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sceneforge {

enum class RequestKind {
  caption,
  orient,
  extract_objects,
  vote,
  extract_constraints,
  order,
  place,
  refine,
  embed,
};

inline constexpr RequestKind kAllRequestKinds[] = {
    RequestKind::caption, RequestKind::orient,   RequestKind::extract_objects,
    RequestKind::vote,    RequestKind::extract_constraints, RequestKind::order,
    RequestKind::place,   RequestKind::refine,   RequestKind::embed,
};

std::string_view to_string(RequestKind kind);
std::optional<RequestKind> parse_request_kind(std::string_view name);

// Only the vision requests carry images.
inline bool takes_images(RequestKind kind) {
  return kind == RequestKind::caption || kind == RequestKind::orient;
}

using PromptContext = std::map<std::string, std::string>;

struct ProviderRequest {
  RequestKind kind = RequestKind::caption;
  std::string prompt;
  std::vector<std::filesystem::path> images;
  std::string schema_tag;
  // Values the prompt was rendered from; reply parsers may consult them.
  PromptContext context;
};

struct UsageCounters {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  UsageCounters& operator+=(const UsageCounters& other) {
    input_tokens += other.input_tokens;
    output_tokens += other.output_tokens;
    return *this;
  }
  friend bool operator==(const UsageCounters&, const UsageCounters&) = default;
};

// Raw output of one model call.
struct Completion {
  std::string text;
  UsageCounters usage;
};

struct ProviderReply {
  std::string text;
  nlohmann::json parsed;
  UsageCounters usage;
  // 1 when the first reply validated.
  int attempts = 1;
};

// A model backend. Implementations throw ProviderError{transport} when the
// call itself fails; they never interpret the reply text.
class ModelProvider {
 public:
  virtual ~ModelProvider() = default;

  virtual std::string tag() const = 0;
  virtual Completion complete(const ProviderRequest& request) = 0;
  virtual std::vector<float> embed(const std::string& document) = 0;
};

// Prompt templates loaded from `<dir>/<kind>.txt`. Leading lines starting
// with "##" are metadata; `## version: N` sets the template version.
// Placeholders are `{identifier}`.
class PromptTemplates {
 public:
  static PromptTemplates load(const std::filesystem::path& dir);

  // Throws TemplateError naming the first missing placeholder.
  std::string render(RequestKind kind, const PromptContext& context) const;

  bool has(RequestKind kind) const { return templates_.count(kind) != 0; }
  int version(RequestKind kind) const;

  static std::string substitute(std::string_view text, const PromptContext& context,
                                bool strict);

 private:
  struct Template {
    std::string text;
    int version = 1;
  };
  std::map<RequestKind, Template> templates_;
};

// Reply schemas loaded from `<dir>/<tag>.json`.
class ReplySchemas {
 public:
  static ReplySchemas load(const std::filesystem::path& dir);

  // Empty when valid, otherwise a description of the first violation.
  std::optional<std::string> validate(const std::string& tag, const nlohmann::json& value) const;

  bool has(const std::string& tag) const { return schemas_.count(tag) != 0; }

 private:
  std::map<std::string, nlohmann::json> schemas_;
};

// Validates against the subset of JSON Schema the reply schemas use: type,
// enum, required, properties, additionalProperties, items, minItems,
// maxItems, minLength, minimum, maximum. Returns the first violation.
std::optional<std::string> validate_json_schema(const nlohmann::json& schema,
                                                const nlohmann::json& value);

class TokenBucket {
 public:
  // rate <= 0 disables limiting.
  TokenBucket(double rate_per_second, double burst);

  void acquire();

 private:
  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct ClientOptions {
  int repair_retries = 2;
  double rate_per_second = 0.0;
  double burst = 1.0;
  // Append-only JSONL usage log; disabled when empty.
  std::filesystem::path usage_log;
};

class ProviderClient {
 public:
  ProviderClient(std::shared_ptr<ModelProvider> provider, PromptTemplates templates,
                 ReplySchemas schemas, ClientOptions options = {});

  std::string render_prompt(RequestKind kind, const PromptContext& context) const;

  // Renders the template for `kind` and fills in schema tag and images.
  ProviderRequest make_request(RequestKind kind, PromptContext context,
                               std::vector<std::filesystem::path> images = {}) const;

  // Sends the request, parses and validates the reply. On a parse failure
  // the request is re-sent with a repair note, up to repair_retries times.
  // Throws ProviderError{validation} when retries are exhausted and
  // propagates ProviderError{transport} unchanged.
  ProviderReply complete(const ProviderRequest& request);

  std::vector<float> embed(const std::string& document);

  UsageCounters usage() const;
  std::string provider_tag() const { return provider_->tag(); }
  const PromptTemplates& templates() const { return templates_; }

 private:
  void record_usage(RequestKind kind, const UsageCounters& usage, double latency_ms, int attempts);

  std::shared_ptr<ModelProvider> provider_;
  PromptTemplates templates_;
  ReplySchemas schemas_;
  ClientOptions options_;
  TokenBucket limiter_;
  mutable std::mutex usage_mutex_;
  UsageCounters usage_;
};

}  // namespace sceneforge
