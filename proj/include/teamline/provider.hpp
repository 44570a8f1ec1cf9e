#pragma once

#include "errors.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace teamline {

struct ChatMessage {
    std::string speaker_label;
    std::string content;

    /// "Label: content", or just the content when the label is empty.
    std::string rendered() const { return speaker_label.empty() ? content : speaker_label + ": " + content; }
    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatParams {
    double temperature = 0.2;
    int max_tokens = 1024;
    std::string model_name;
};

/// What the call is for. Local bookkeeping only, never sent on the wire.
enum class RequestPurpose { Decision, FileGeneration, Classification };

struct ChatRequest {
    std::string system_prompt;
    std::vector<ChatMessage> messages;
    ChatParams params;
    RequestPurpose purpose = RequestPurpose::Decision;

    /// System prompt followed by every rendered message, newline separated.
    std::string flattened() const {
        std::string out = system_prompt;
        for (const auto& m : messages) {
            out += '\n';
            out += m.rendered();
        }
        return out;
    }
};

struct TokenUsage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    TokenUsage& operator+=(const TokenUsage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        return *this;
    }
};

struct ChatResponse {
    std::string text;
    TokenUsage usage;
};

inline void validate(const ChatParams& p) {
    if (!(p.temperature >= 0.0 && p.temperature <= 2.0))
        throw ConfigError("temperature must be within [0, 2]");
    if (p.max_tokens <= 0) throw ConfigError("max_tokens must be positive");
}

/// A chat-completion service. Implementations must allow concurrent calls.
class Provider {
public:
    virtual ~Provider() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// One queued reply. An empty `when` matches every request; otherwise the
/// request's flattened text must contain it.
struct ScriptEntry {
    std::string when;
    std::string text;
};

/// Deterministic provider for tests and scripted sessions.
///
/// Each call takes the first queued entry whose predicate matches. When none
/// matches, the fallback reply is used if one is set; otherwise the call
/// fails with ScriptExhausted.
class ScriptedProvider final : public Provider {
public:
    ScriptedProvider() = default;
    explicit ScriptedProvider(std::vector<ScriptEntry> script, std::optional<std::string> fallback = std::nullopt)
        : queue_(script.begin(), script.end()), fallback_(std::move(fallback)) {}

    static std::shared_ptr<ScriptedProvider> of(std::vector<std::string> replies) {
        std::vector<ScriptEntry> script;
        for (auto& r : replies) script.push_back({"", std::move(r)});
        return std::make_shared<ScriptedProvider>(std::move(script));
    }

    void push(std::string text, std::string when = {}) {
        std::lock_guard lock(m_);
        queue_.push_back({std::move(when), std::move(text)});
    }

    ChatResponse complete(const ChatRequest& request) override {
        validate(request.params);
        const auto flat = request.flattened();
        std::lock_guard lock(m_);
        ++calls_;
        for (auto it = queue_.begin(); it != queue_.end(); ++it) {
            if (it->when.empty() || flat.find(it->when) != std::string::npos) {
                ChatResponse r;
                r.text = std::move(it->text);
                r.usage = estimate(flat, r.text);
                queue_.erase(it);
                return r;
            }
        }
        if (fallback_) return ChatResponse{*fallback_, estimate(flat, *fallback_)};
        throw ScriptExhausted("scripted provider has no reply for this request");
    }

    std::size_t remaining() const {
        std::lock_guard lock(m_);
        return queue_.size();
    }
    std::size_t calls() const {
        std::lock_guard lock(m_);
        return calls_;
    }

private:
    // Rough 4-characters-per-token estimate so scripted runs report usage.
    static TokenUsage estimate(const std::string& prompt, const std::string& reply) {
        return {(prompt.size() + 3) / 4, (reply.size() + 3) / 4};
    }

    mutable std::mutex m_;
    std::deque<ScriptEntry> queue_;
    std::optional<std::string> fallback_;
    std::size_t calls_ = 0;
};

/// Wraps a provider and hands every request to an observer first.
class RecordingProvider final : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::function<void(const ChatRequest&)> observer)
        : inner_(std::move(inner)), observer_(std::move(observer)) {}

    ChatResponse complete(const ChatRequest& request) override {
        observer_(request);
        return inner_->complete(request);
    }

private:
    std::shared_ptr<Provider> inner_;
    std::function<void(const ChatRequest&)> observer_;
};

} // namespace teamline
