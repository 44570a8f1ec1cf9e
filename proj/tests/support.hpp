#pragma once

#include <teamline/session.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace support {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

inline std::filesystem::path data(const std::string& name) { return std::filesystem::path(TEAMLINE_TEST_DATA) / name; }

inline std::filesystem::path source(const std::string& rel) { return std::filesystem::path(TEAMLINE_SOURCE_DIR) / rel; }

/// Fresh directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    auto p = std::filesystem::temp_directory_path() / ("teamline-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(p);
    return p;
}

inline std::string decision(const std::string& action, const std::string& content = {},
                            const std::string& reasoning = "r") {
    std::string s = "ACTION: " + action + "\nREASONING: " + reasoning;
    if (!content.empty()) s += "\nCONTENT: " + content;
    return s;
}

inline const std::string kNone = "ACTION: NONE\nREASONING: idle";

/// Three scripted AI agents and no human, simulated clock.
inline teamline::SessionConfig small_config(std::uint64_t seed = 1) {
    using namespace teamline;
    SessionConfig cfg;
    cfg.session_id = "t";
    cfg.seed = seed;
    cfg.knowledge.base = "Be kind.";
    for (auto [name, role] : {std::pair{"Peter", "CEO"}, {"Boshen", "Product Manager"}, {"Isabelle", "Developer"}}) {
        AgentSpec s;
        s.id = AgentId{name};
        s.name = name;
        s.role_name = role;
        s.persona = std::string("You are the ") + role + ".";
        cfg.agents.push_back(s);
        cfg.agent_provider[name] = name;
        ProviderBinding b;
        b.fallback = kNone;
        cfg.providers[name] = b;
    }
    return cfg;
}

inline teamline::SessionConfig golden_config() {
    return teamline::load_session_config(source("configs/tictactoe_scripted.json").string());
}

} // namespace support
