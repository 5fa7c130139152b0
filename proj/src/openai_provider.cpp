// Chat-completion and embedding provider backed by the OpenAI HTTP API.
// Credentials come from OPENAI_API_KEY; OPENAI_BASE_URL overrides the host.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>
#include <memory>
#include <string>

#include "dto/cli.hpp"
#include "dto/errors.hpp"

namespace dto {

namespace {

class OpenAiProvider : public Provider {
 public:
  OpenAiProvider(std::string base_url, std::string api_key, std::string chat_model,
                 std::string embedding_model)
      : base_url_(std::move(base_url)),
        api_key_(std::move(api_key)),
        chat_model_(std::move(chat_model)),
        embedding_model_(std::move(embedding_model)) {}

  std::string name() const override { return "openai:" + chat_model_; }

  std::vector<double> embed(const std::string& text) override {
    const auto body = post("/v1/embeddings", {{"model", embedding_model_}, {"input", text}});
    try {
      return body.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
  }

  std::string complete(const std::string& prompt, double temperature, int max_tokens) override {
    const nlohmann::json req = {
        {"model", chat_model_},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
        {"temperature", temperature},
        {"max_tokens", max_tokens},
    };
    const auto body = post("/v1/chat/completions", req);
    try {
      return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed completion response: ") + e.what());
    }
  }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& payload) {
    httplib::Client client(base_url_);
    client.set_bearer_token_auth(api_key_);
    client.set_read_timeout(120, 0);
    const auto res = client.Post(path, payload.dump(), "application/json");
    if (!res) {
      throw TransientProviderError("request to " + base_url_ + path + " failed: " +
                                   httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransientProviderError("HTTP " + std::to_string(res->status) + " from " + path);
    }
    if (res->status != 200) {
      throw ProviderError("HTTP " + std::to_string(res->status) + " from " + path + ": " +
                          res->body.substr(0, 300));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("unparseable response: ") + e.what());
    }
  }

  std::string base_url_, api_key_, chat_model_, embedding_model_;
};

}  // namespace

// Null when OPENAI_API_KEY is unset.
std::unique_ptr<Provider> make_openai_provider(const LlmSetup& setup) {
  const char* key = std::getenv("OPENAI_API_KEY");
  if (!key || !*key) return nullptr;
  const char* base = std::getenv("OPENAI_BASE_URL");
  return std::make_unique<OpenAiProvider>(base && *base ? base : "https://api.openai.com", key,
                                          setup.chat_model, setup.embedding_model);
}

}  // namespace dto
