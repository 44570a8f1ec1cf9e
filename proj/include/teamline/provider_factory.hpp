#pragma once

#include "http_provider.hpp"
#include "session.hpp"

namespace teamline {

inline HttpProviderConfig http_config_of(const ProviderBinding& b) {
    HttpProviderConfig c;
    c.endpoint = b.endpoint;
    c.model = b.model;
    c.api_key_env = b.api_key_env;
    c.attempts = b.attempts;
    c.initial_backoff = std::chrono::milliseconds(static_cast<std::int64_t>(b.backoff_s * 1000.0));
    return c;
}

/// Factory that builds real HTTP providers for http bindings. With
/// `force_scripted`, every binding becomes a scripted provider replaying its
/// script. An http binding without a script falls back to NONE.
inline ProviderFactory make_provider_factory(bool force_scripted = false) {
    return [force_scripted](const std::string&, const ProviderBinding& b) -> std::shared_ptr<Provider> {
        if (b.type == ProviderBinding::Type::Scripted) return make_scripted_provider(b);
        if (force_scripted) {
            return std::make_shared<ScriptedProvider>(b.script,
                                                      b.fallback.value_or("ACTION: NONE\nREASONING: offline run\nCONTENT:"));
        }
        return std::make_shared<HttpProvider>(http_config_of(b));
    };
}

} // namespace teamline
