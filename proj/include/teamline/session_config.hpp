#pragma once

#include "agent.hpp"
#include "assets.hpp"
#include "clock.hpp"
#include "errors.hpp"
#include "provider.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace teamline {

/// How one named provider is realised.
struct ProviderBinding {
    enum class Type { Scripted, Http };
    Type type = Type::Scripted;

    // scripted
    std::vector<ScriptEntry> script;
    std::optional<std::string> fallback;

    // http
    std::string endpoint;
    std::string model = "gpt-4-turbo";
    std::string api_key_env = "OPENAI_API_KEY";
    int attempts = 3;
    double backoff_s = 1.0;
};

/// Scripted client behaviour for the human participant.
struct HumanPlaybook {
    std::string human_name;
    double greet_delay_s = 10.0;
    std::string requirements_text;
    std::vector<std::string> clarification_answers;
    std::string stall_nudge_text = "Hello, what is the progress so far?";
    double stall_threshold_s = 45.0;
    /// How often the scripted human looks at the channel.
    double poll_s = 2.0;
};

struct TerminationRule {
    bool require_code_file = true;
    int none_streak = 2;
    double quiescence_s = 30.0;
};

enum class ClockMode { Real, Simulated };

inline constexpr TimeMs kDefaultSimulatedStart = 1710527700000;  // 2024-03-15T18:35:00Z

struct SessionConfig {
    std::string session_id = "main";
    std::string condition_name = "control";
    std::uint64_t seed = 0;
    ClockMode clock_mode = ClockMode::Simulated;
    TimeMs start_time_ms = kDefaultSimulatedStart;
    double pause_low_s = 3.0;
    double pause_high_s = 15.0;
    std::optional<double> deadlock_cap_s;  // defaults: 2000 simulated, 1800 real
    bool disclose_humans = false;
    int provider_failure_budget = 10;

    std::vector<AgentSpec> agents;
    std::map<std::string, std::string> agent_provider;  // agent name -> binding name
    std::map<std::string, ProviderBinding> providers;
    InstitutionalKnowledge knowledge;
    ChatParams agent_params{0.2, 1024, {}};
    ChatParams file_params{0.2, 4096, {}};
    std::optional<HumanPlaybook> human_playbook;
    TerminationRule termination;
    std::set<std::string> code_extensions = default_code_extensions();

    double cap_s() const { return deadlock_cap_s.value_or(clock_mode == ClockMode::Simulated ? 2000.0 : 1800.0); }
};

inline TimeMs seconds_to_ms(double s) { return static_cast<TimeMs>(std::llround(s * 1000.0)); }

inline void validate(const SessionConfig& cfg) {
    std::set<std::string> names;
    for (const auto& a : cfg.agents) {
        validate(a);
        if (!names.insert(a.name).second) throw ConfigError("duplicate participant name '" + a.name + "'");
        if (a.is_human) continue;
        auto it = cfg.agent_provider.find(a.name);
        if (it == cfg.agent_provider.end()) throw ConfigError("agent '" + a.name + "' has no provider");
        if (!cfg.providers.count(it->second))
            throw ConfigError("agent '" + a.name + "' refers to unknown provider '" + it->second + "'");
    }
    if (cfg.pause_low_s < 0 || cfg.pause_low_s > cfg.pause_high_s)
        throw ConfigError("pause_range_s must satisfy 0 <= low <= high");
    if (cfg.termination.none_streak < 1) throw ConfigError("termination.none_streak must be >= 1");
    if (cfg.termination.quiescence_s <= 0) throw ConfigError("termination.quiescence_s must be positive");
    if (cfg.cap_s() <= 0) throw ConfigError("deadlock_cap_s must be positive");
    validate(cfg.agent_params);
    validate(cfg.file_params);
    if (const auto& pb = cfg.human_playbook) {
        auto it = std::find_if(cfg.agents.begin(), cfg.agents.end(), [&](auto& a) { return a.name == pb->human_name; });
        if (it == cfg.agents.end() || !it->is_human)
            throw ConfigError("human_playbook.human must name a human participant");
        if (pb->requirements_text.empty()) throw ConfigError("human_playbook.requirements must not be empty");
        if (pb->greet_delay_s < 0) throw ConfigError("human_playbook.greet_delay_s must be >= 0");
        if (pb->stall_threshold_s <= 0) throw ConfigError("human_playbook.stall_threshold_s must be positive");
        if (pb->poll_s <= 0) throw ConfigError("human_playbook.poll_s must be positive");
    }
}

namespace config_detail {

// A long text may be given as an array of lines.
inline std::string text_of(const nlohmann::json& j) {
    if (j.is_string()) return assets::resolve(j.get<std::string>());
    if (j.is_array()) {
        std::string out;
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) out += '\n';
            out += j[i].get<std::string>();
        }
        return out;
    }
    throw ConfigError("expected a string or an array of lines");
}

inline ChatParams params_of(const nlohmann::json& j, ChatParams defaults) {
    defaults.temperature = j.value("temperature", defaults.temperature);
    defaults.max_tokens = j.value("max_tokens", defaults.max_tokens);
    defaults.model_name = j.value("model", defaults.model_name);
    return defaults;
}

inline ProviderBinding binding_of(const nlohmann::json& j) {
    ProviderBinding b;
    const auto type = j.value("type", std::string("scripted"));
    if (type == "scripted") {
        b.type = ProviderBinding::Type::Scripted;
    } else if (type == "http") {
        b.type = ProviderBinding::Type::Http;
        b.endpoint = j.at("endpoint").get<std::string>();
        b.model = j.value("model", b.model);
        b.api_key_env = j.value("api_key_env", b.api_key_env);
        b.attempts = j.value("attempts", b.attempts);
        b.backoff_s = j.value("backoff_s", b.backoff_s);
    } else {
        throw ConfigError("unknown provider type '" + type + "'");
    }
    // http bindings may carry a script too; it is used when runs are forced scripted.
    if (j.contains("script"))
        for (const auto& e : j.at("script")) {
            if (e.is_string()) b.script.push_back({"", e.get<std::string>()});
            else b.script.push_back({e.value("when", std::string{}), text_of(e.at("text"))});
        }
    if (j.contains("fallback")) b.fallback = text_of(j.at("fallback"));
    return b;
}

} // namespace config_detail

inline ProviderBinding provider_binding_from_json(const nlohmann::json& j) {
    try {
        return config_detail::binding_of(j);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("invalid provider binding: ") + ex.what());
    }
}

inline SessionConfig session_config_from_json(const nlohmann::json& j) {
    using config_detail::text_of;
    try {
        SessionConfig cfg;
        cfg.session_id = j.value("session_id", cfg.session_id);
        cfg.condition_name = j.value("condition", cfg.condition_name);
        cfg.seed = j.value("seed", cfg.seed);
        const auto clock = j.value("clock", std::string("simulated"));
        if (clock == "simulated") cfg.clock_mode = ClockMode::Simulated;
        else if (clock == "real") cfg.clock_mode = ClockMode::Real;
        else throw ConfigError("clock must be 'simulated' or 'real'");
        if (j.contains("start_time") && !parse_utc_timestamp(j.at("start_time").get<std::string>(), cfg.start_time_ms))
            throw ConfigError("start_time must look like 2024-03-15T18:35:00Z");
        if (j.contains("pause_range_s")) {
            const auto& r = j.at("pause_range_s");
            if (!r.is_array() || r.size() != 2) throw ConfigError("pause_range_s must be [low, high]");
            cfg.pause_low_s = r[0].get<double>();
            cfg.pause_high_s = r[1].get<double>();
        }
        if (j.contains("deadlock_cap_s")) cfg.deadlock_cap_s = j.at("deadlock_cap_s").get<double>();
        cfg.disclose_humans = j.value("disclose_humans", false);
        cfg.provider_failure_budget = j.value("provider_failure_budget", cfg.provider_failure_budget);

        if (j.contains("knowledge")) {
            const auto& k = j.at("knowledge");
            if (k.is_string()) {
                cfg.knowledge.base = text_of(k);
            } else {
                cfg.knowledge.base = k.contains("base") ? text_of(k.at("base")) : std::string{};
                if (k.contains("collaborative_move") && !k.at("collaborative_move").is_null())
                    cfg.knowledge.collaborative_move = text_of(k.at("collaborative_move"));
                if (k.contains("template")) cfg.knowledge.move_template = text_of(k.at("template"));
            }
        }

        for (const auto& a : j.at("agents")) {
            AgentSpec spec;
            spec.name = a.at("name").get<std::string>();
            spec.role_name = a.at("role").get<std::string>();
            spec.id = AgentId{a.value("id", spec.name)};
            spec.is_human = a.value("human", false);
            if (a.contains("persona")) spec.persona = text_of(a.at("persona"));
            if (!spec.is_human) cfg.agent_provider[spec.name] = a.value("provider", std::string("default"));
            cfg.agents.push_back(std::move(spec));
        }
        if (j.contains("providers"))
            for (const auto& [name, b] : j.at("providers").items()) cfg.providers[name] = config_detail::binding_of(b);

        if (j.contains("agent_params")) cfg.agent_params = config_detail::params_of(j.at("agent_params"), cfg.agent_params);
        if (j.contains("file_params")) cfg.file_params = config_detail::params_of(j.at("file_params"), cfg.file_params);

        if (j.contains("human_playbook") && !j.at("human_playbook").is_null()) {
            const auto& p = j.at("human_playbook");
            HumanPlaybook pb;
            pb.human_name = p.at("human").get<std::string>();
            pb.greet_delay_s = p.value("greet_delay_s", pb.greet_delay_s);
            pb.requirements_text = p.contains("requirements") ? text_of(p.at("requirements"))
                                                              : std::string(assets::kTicTacToeTask);
            if (p.contains("clarification_answers"))
                for (const auto& ans : p.at("clarification_answers")) pb.clarification_answers.push_back(text_of(ans));
            if (p.contains("stall_nudge_text")) pb.stall_nudge_text = text_of(p.at("stall_nudge_text"));
            pb.stall_threshold_s = p.value("stall_threshold_s", pb.stall_threshold_s);
            pb.poll_s = p.value("poll_s", pb.poll_s);
            cfg.human_playbook = std::move(pb);
        }
        if (j.contains("termination")) {
            const auto& t = j.at("termination");
            cfg.termination.require_code_file = t.value("require_code_file", cfg.termination.require_code_file);
            cfg.termination.none_streak = t.value("none_streak", cfg.termination.none_streak);
            cfg.termination.quiescence_s = t.value("quiescence_s", cfg.termination.quiescence_s);
            if (t.contains("code_extensions")) {
                cfg.code_extensions.clear();
                for (const auto& e : t.at("code_extensions")) cfg.code_extensions.insert(e.get<std::string>());
            }
        }
        validate(cfg);
        return cfg;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("invalid session config: ") + ex.what());
    }
}

inline SessionConfig load_session_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& ex) {
        throw ConfigError(path + ": " + ex.what());
    }
    return session_config_from_json(j);
}

} // namespace teamline
