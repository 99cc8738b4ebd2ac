#include "sceneforge/model_provider.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "sceneforge/error.hpp"
#include "sceneforge/reply_parsers.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError({}, "cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string type_name(const json& value) {
  switch (value.type()) {
    case json::value_t::null: return "null";
    case json::value_t::boolean: return "boolean";
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::number_float: return "number";
    case json::value_t::string: return "string";
    case json::value_t::array: return "array";
    case json::value_t::object: return "object";
    default: return "unknown";
  }
}

bool type_matches(const std::string& expected, const json& value) {
  if (expected == "number") return value.is_number();
  if (expected == "integer") {
    if (value.is_number_integer()) return true;
    return value.is_number_float() && std::floor(value.get<double>()) == value.get<double>();
  }
  return type_name(value) == expected;
}

std::optional<std::string> validate_at(const json& schema, const json& value,
                                       const std::string& path) {
  if (schema.contains("type")) {
    const json& t = schema["type"];
    bool ok = false;
    if (t.is_string()) {
      ok = type_matches(t.get<std::string>(), value);
    } else {
      for (const auto& alt : t) ok = ok || type_matches(alt.get<std::string>(), value);
    }
    if (!ok) return path + ": expected " + t.dump() + ", got " + type_name(value);
  }
  if (schema.contains("enum")) {
    const auto& options = schema["enum"];
    if (std::find(options.begin(), options.end(), value) == options.end())
      return path + ": value " + value.dump() + " not in " + options.dump();
  }
  if (value.is_number()) {
    const double v = value.get<double>();
    if (schema.contains("minimum") && v < schema["minimum"].get<double>())
      return path + ": " + value.dump() + " is below minimum " + schema["minimum"].dump();
    if (schema.contains("maximum") && v > schema["maximum"].get<double>())
      return path + ": " + value.dump() + " is above maximum " + schema["maximum"].dump();
  }
  if (value.is_string() && schema.contains("minLength") &&
      value.get<std::string>().size() < schema["minLength"].get<std::size_t>()) {
    return path + ": string shorter than " + schema["minLength"].dump();
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema["minItems"].get<std::size_t>())
      return path + ": fewer than " + schema["minItems"].dump() + " items";
    if (schema.contains("maxItems") && value.size() > schema["maxItems"].get<std::size_t>())
      return path + ": more than " + schema["maxItems"].dump() + " items";
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (auto err = validate_at(schema["items"], value[i], path + "[" + std::to_string(i) + "]"))
          return err;
      }
    }
  }
  if (value.is_object()) {
    for (const auto& key : schema.value("required", json::array())) {
      if (!value.contains(key.get<std::string>()))
        return path + ": missing required field '" + key.get<std::string>() + "'";
    }
    const json properties = schema.value("properties", json::object());
    for (const auto& [key, child] : value.items()) {
      if (properties.contains(key)) {
        if (auto err = validate_at(properties[key], child, path + "." + key)) return err;
      } else if (schema.contains("additionalProperties") &&
                 schema["additionalProperties"].is_boolean() &&
                 !schema["additionalProperties"].get<bool>()) {
        return path + ": unexpected field '" + key + "'";
      }
    }
  }
  return std::nullopt;
}

std::string repair_note(const std::string& error, const std::string& previous) {
  return "\n\nYour previous reply could not be used: " + error +
         "\nPrevious reply:\n" + previous +
         "\nReply again and follow the required output format exactly.";
}

}  // namespace

std::string_view to_string(RequestKind kind) {
  switch (kind) {
    case RequestKind::caption: return "caption";
    case RequestKind::orient: return "orient";
    case RequestKind::extract_objects: return "extract_objects";
    case RequestKind::vote: return "vote";
    case RequestKind::extract_constraints: return "extract_constraints";
    case RequestKind::order: return "order";
    case RequestKind::place: return "place";
    case RequestKind::refine: return "refine";
    case RequestKind::embed: return "embed";
  }
  return "unknown";
}

std::optional<RequestKind> parse_request_kind(std::string_view name) {
  for (auto kind : kAllRequestKinds)
    if (to_string(kind) == name) return kind;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

PromptTemplates PromptTemplates::load(const fs::path& dir) {
  PromptTemplates out;
  static const std::regex kVersion(R"(^##\s*version:\s*(\d+)\s*$)");
  for (auto kind : kAllRequestKinds) {
    const fs::path file = dir / (std::string(to_string(kind)) + ".txt");
    if (!fs::exists(file)) continue;
    std::istringstream in(read_text(file));
    Template t;
    std::string line;
    bool in_header = true;
    std::string body;
    while (std::getline(in, line)) {
      if (in_header && line.rfind("##", 0) == 0) {
        std::smatch m;
        if (std::regex_match(line, m, kVersion)) t.version = std::stoi(m[1].str());
        continue;
      }
      in_header = false;
      body += line;
      body.push_back('\n');
    }
    while (!body.empty() && body.back() == '\n') body.pop_back();
    t.text = std::move(body);
    out.templates_.emplace(kind, std::move(t));
  }
  if (out.templates_.empty()) throw TemplateError({}, "no prompt templates found in " + dir.string());
  return out;
}

std::string PromptTemplates::substitute(std::string_view text, const PromptContext& context,
                                        bool strict) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      const bool identifier = j > i + 1 && j < text.size() && text[j] == '}' &&
                              !std::isdigit(static_cast<unsigned char>(text[i + 1]));
      if (identifier) {
        const std::string key(text.substr(i + 1, j - i - 1));
        if (auto it = context.find(key); it != context.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
        if (strict) throw TemplateError(key, "missing template value for '" + key + "'");
      }
    }
    out.push_back(text[i]);
    ++i;
  }
  return out;
}

std::string PromptTemplates::render(RequestKind kind, const PromptContext& context) const {
  auto it = templates_.find(kind);
  if (it == templates_.end())
    throw TemplateError({}, "no template for request kind " + std::string(to_string(kind)));
  return substitute(it->second.text, context, true);
}

int PromptTemplates::version(RequestKind kind) const {
  auto it = templates_.find(kind);
  return it == templates_.end() ? 0 : it->second.version;
}

// ---------------------------------------------------------------------------

ReplySchemas ReplySchemas::load(const fs::path& dir) {
  ReplySchemas out;
  if (!fs::is_directory(dir)) throw TemplateError({}, "schema directory not found: " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    json schema = json::parse(read_text(entry.path()), nullptr, false);
    if (schema.is_discarded()) throw TemplateError({}, "malformed schema " + entry.path().string());
    out.schemas_.emplace(entry.path().stem().string(), std::move(schema));
  }
  return out;
}

std::optional<std::string> ReplySchemas::validate(const std::string& tag, const json& value) const {
  auto it = schemas_.find(tag);
  if (it == schemas_.end()) return "no schema registered for '" + tag + "'";
  return validate_json_schema(it->second, value);
}

std::optional<std::string> validate_json_schema(const json& schema, const json& value) {
  return validate_at(schema, value, "$");
}

// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double rate_per_second, double burst)
    : rate_(rate_per_second),
      burst_(std::max(1.0, burst)),
      tokens_(std::max(1.0, burst)),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::acquire() {
  if (rate_ <= 0.0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const double wait = (1.0 - tokens_) / rate_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    lock.lock();
  }
}

// ---------------------------------------------------------------------------

ProviderClient::ProviderClient(std::shared_ptr<ModelProvider> provider, PromptTemplates templates,
                               ReplySchemas schemas, ClientOptions options)
    : provider_(std::move(provider)),
      templates_(std::move(templates)),
      schemas_(std::move(schemas)),
      options_(std::move(options)),
      limiter_(options_.rate_per_second, options_.burst) {
  if (!provider_) throw std::invalid_argument("provider must not be null");
  if (options_.repair_retries < 0) throw std::invalid_argument("repair_retries must be >= 0");
}

std::string ProviderClient::render_prompt(RequestKind kind, const PromptContext& context) const {
  return templates_.render(kind, context);
}

ProviderRequest ProviderClient::make_request(RequestKind kind, PromptContext context,
                                             std::vector<fs::path> images) const {
  if (takes_images(kind) != !images.empty())
    throw std::invalid_argument("images must be supplied exactly for caption and orient requests");
  ProviderRequest request;
  request.kind = kind;
  request.prompt = templates_.render(kind, context);
  request.images = std::move(images);
  request.schema_tag = std::string(to_string(kind));
  request.context = std::move(context);
  return request;
}

ProviderReply ProviderClient::complete(const ProviderRequest& request) {
  if (request.kind == RequestKind::embed)
    throw std::invalid_argument("use embed() for embedding requests");
  const std::string tag =
      request.schema_tag.empty() ? std::string(to_string(request.kind)) : request.schema_tag;

  ProviderRequest attempt = request;
  UsageCounters spent;
  const auto started = std::chrono::steady_clock::now();
  std::string last_text;
  std::string last_error;
  const int max_attempts = options_.repair_retries + 1;
  for (int n = 1; n <= max_attempts; ++n) {
    limiter_.acquire();
    Completion completion = provider_->complete(attempt);
    spent += completion.usage;
    last_text = completion.text;
    try {
      json parsed = parse_reply(request.kind, completion.text, request.context);
      if (auto err = schemas_.validate(tag, parsed)) throw ReplyParseError(*err);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      record_usage(request.kind, spent, ms, n);
      return {completion.text, std::move(parsed), spent, n};
    } catch (const ReplyParseError& e) {
      last_error = e.what();
      spdlog::debug("{} reply rejected on attempt {}: {}", to_string(request.kind), n, last_error);
      attempt.prompt = request.prompt + repair_note(last_error, completion.text);
    }
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  record_usage(request.kind, spent, ms, max_attempts);
  throw ProviderError(ProviderError::Category::validation,
                      std::string(to_string(request.kind)) + " reply invalid after " +
                          std::to_string(max_attempts) + " attempts: " + last_error,
                      last_text, max_attempts);
}

std::vector<float> ProviderClient::embed(const std::string& document) {
  limiter_.acquire();
  const auto started = std::chrono::steady_clock::now();
  auto vector = provider_->embed(document);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  record_usage(RequestKind::embed, {}, ms, 1);
  return vector;
}

UsageCounters ProviderClient::usage() const {
  std::lock_guard lock(usage_mutex_);
  return usage_;
}

void ProviderClient::record_usage(RequestKind kind, const UsageCounters& usage, double latency_ms,
                                  int attempts) {
  std::lock_guard lock(usage_mutex_);
  usage_ += usage;
  if (options_.usage_log.empty()) return;
  std::ofstream log(options_.usage_log, std::ios::app);
  log << json{{"kind", std::string(to_string(kind))},
              {"provider", provider_->tag()},
              {"input_tokens", usage.input_tokens},
              {"output_tokens", usage.output_tokens},
              {"latency_ms", std::round(latency_ms * 1000.0) / 1000.0},
              {"attempts", attempts}}
             .dump()
      << '\n';
}

}  // namespace sceneforge
