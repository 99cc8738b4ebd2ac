#pragma once

#include <string>

#include "sceneforge/model_provider.hpp"

namespace sceneforge {

// OpenAI-compatible chat-completions and embeddings endpoint.
struct LiveProviderConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1
  std::string api_key;
  std::string text_model = "gpt-4.1";
  std::string vision_model = "gpt-4.1";
  std::string embedding_model = "text-embedding-3-small";
  double temperature = 0.0;
  int timeout_seconds = 300;

  // Reads SCENEFORGE_ENDPOINT and SCENEFORGE_API_KEY over the given values.
  LiveProviderConfig with_environment() const;
};

class LiveProvider final : public ModelProvider {
 public:
  explicit LiveProvider(LiveProviderConfig config);

  std::string tag() const override;
  Completion complete(const ProviderRequest& request) override;
  std::vector<float> embed(const std::string& document) override;

 private:
  nlohmann::json post(const std::string& route, const nlohmann::json& body) const;

  LiveProviderConfig config_;
  std::string base_;    // scheme://host[:port]
  std::string prefix_;  // path prefix, no trailing slash
};

}  // namespace sceneforge
