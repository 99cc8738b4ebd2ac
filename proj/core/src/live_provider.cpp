#include "sceneforge/live_provider.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "sceneforge/error.hpp"
#include "sceneforge/mesh_io.hpp"

namespace sceneforge {

namespace {

using nlohmann::json;

ProviderError transport(const std::string& message) {
  return ProviderError(ProviderError::Category::transport, message);
}

std::string image_data_uri(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw transport("cannot read image " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return "data:image/png;base64," + base64_encode(bytes);
}

}  // namespace

LiveProviderConfig LiveProviderConfig::with_environment() const {
  LiveProviderConfig out = *this;
  if (const char* endpoint = std::getenv("SCENEFORGE_ENDPOINT"); endpoint && *endpoint)
    out.endpoint = endpoint;
  if (const char* key = std::getenv("SCENEFORGE_API_KEY"); key && *key) out.api_key = key;
  return out;
}

LiveProvider::LiveProvider(LiveProviderConfig config) : config_(std::move(config)) {
  const auto scheme_end = config_.endpoint.find("://");
  if (config_.endpoint.empty() || scheme_end == std::string::npos)
    throw std::invalid_argument("live provider endpoint must be an http(s) URL");
  const auto path_start = config_.endpoint.find('/', scheme_end + 3);
  base_ = config_.endpoint.substr(0, path_start);
  prefix_ = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string LiveProvider::tag() const { return "live:" + config_.text_model; }

json LiveProvider::post(const std::string& route, const json& body) const {
  httplib::Client client(base_);
  client.set_connection_timeout(30);
  client.set_read_timeout(config_.timeout_seconds);
  if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
  auto result = client.Post(prefix_ + route, body.dump(), "application/json");
  if (!result) throw transport("request to " + base_ + prefix_ + route + " failed: " +
                               httplib::to_string(result.error()));
  if (result->status < 200 || result->status >= 300) {
    throw transport("HTTP " + std::to_string(result->status) + " from " + route + ": " +
                    result->body.substr(0, 512));
  }
  json reply = json::parse(result->body, nullptr, false);
  if (reply.is_discarded()) throw transport("non-JSON response from " + route);
  return reply;
}

Completion LiveProvider::complete(const ProviderRequest& request) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", request.prompt}});
  for (const auto& image : request.images) {
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_data_uri(image)}}}});
  }
  const json body{
      {"model", takes_images(request.kind) ? config_.vision_model : config_.text_model},
      {"temperature", config_.temperature},
      {"messages", json::array({{{"role", "user"}, {"content", content}}})},
  };
  const json reply = post("/chat/completions", body);
  try {
    Completion out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      out.usage.input_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
      out.usage.output_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
    }
    return out;
  } catch (const json::exception& e) {
    throw transport(std::string("unexpected chat response shape: ") + e.what());
  }
}

std::vector<float> LiveProvider::embed(const std::string& document) {
  const json reply = post("/embeddings", {{"model", config_.embedding_model}, {"input", document}});
  try {
    return reply.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const json::exception& e) {
    throw transport(std::string("unexpected embeddings response shape: ") + e.what());
  }
}

}  // namespace sceneforge
