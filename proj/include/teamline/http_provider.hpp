#pragma once

#include "errors.hpp"
#include "provider.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

namespace teamline {

struct HttpProviderConfig {
    /// Full URL of a chat-completions endpoint, e.g. https://api.openai.com/v1/chat/completions
    std::string endpoint;
    std::string model = "gpt-4-turbo";
    /// Environment variable holding the bearer key. Empty means no auth header.
    std::string api_key_env = "OPENAI_API_KEY";
    int attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::chrono::seconds timeout{120};
};

/// Splits "scheme://host[:port]/path" into origin and path.
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Chat-completions client: one POST per attempt, bounded exponential backoff.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.attempts < 1) throw ConfigError("attempts must be >= 1");
        std::tie(origin_, path_) = split_url(cfg_.endpoint);
        if (!cfg_.api_key_env.empty()) {
            const char* key = std::getenv(cfg_.api_key_env.c_str());
            if (!key || !*key) throw MissingCredentials("environment variable " + cfg_.api_key_env + " is not set");
            api_key_ = key;
        }
    }

    ChatResponse complete(const ChatRequest& request) override {
        validate(request.params);
        const std::string body = request_body(request).dump();
        std::string last_error;
        auto backoff = cfg_.initial_backoff;
        for (int attempt = 1; attempt <= cfg_.attempts; ++attempt) {
            if (attempt > 1) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            httplib::Client client(origin_);
            client.set_connection_timeout(std::chrono::seconds(10));
            client.set_read_timeout(cfg_.timeout);
            httplib::Headers headers;
            if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
            auto res = client.Post(path_, headers, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw ProviderUnavailable("HTTP " + std::to_string(res->status) + ": " + res->body);
            return parse_response(res->body);
        }
        throw ProviderUnavailable("gave up after " + std::to_string(cfg_.attempts) + " attempts (" + last_error + ")");
    }

    nlohmann::json request_body(const ChatRequest& request) const {
        nlohmann::json messages = nlohmann::json::array();
        if (!request.system_prompt.empty())
            messages.push_back({{"role", "system"}, {"content", request.system_prompt}});
        for (const auto& m : request.messages) messages.push_back({{"role", "user"}, {"content", m.rendered()}});
        return {{"model", request.params.model_name.empty() ? cfg_.model : request.params.model_name},
                {"temperature", request.params.temperature},
                {"max_tokens", request.params.max_tokens},
                {"messages", std::move(messages)}};
    }

    static ChatResponse parse_response(const std::string& body) {
        try {
            auto j = nlohmann::json::parse(body);
            ChatResponse r;
            r.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
            if (j.contains("usage")) {
                r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0ull);
                r.usage.completion_tokens = j["usage"].value("completion_tokens", 0ull);
            }
            return r;
        } catch (const nlohmann::json::exception& ex) {
            throw MalformedResponse(std::string("unexpected completion payload: ") + ex.what());
        }
    }

private:
    HttpProviderConfig cfg_;
    std::string origin_;
    std::string path_;
    std::optional<std::string> api_key_;
};

} // namespace teamline
