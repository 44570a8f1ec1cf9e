#pragma once

#include "clock.hpp"
#include "errors.hpp"

#include <json.hpp>

#include <compare>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace teamline {

using Seq = std::uint64_t;

/// Participant identity on the timeline.
struct AgentId {
    std::string value;

    friend auto operator<=>(const AgentId&, const AgentId&) = default;
    friend bool operator==(const AgentId&, const AgentId&) = default;
};

inline const AgentId kSystemAuthor{"system"};

enum class FileKind { Code, Document };

inline const char* to_string(FileKind k) { return k == FileKind::Code ? "code" : "document"; }

inline FileKind file_kind_from_string(const std::string& s) {
    if (s == "code") return FileKind::Code;
    if (s == "document") return FileKind::Document;
    throw ParseError("unknown file_kind '" + s + "'");
}

struct Join {
    std::string name;
    std::string role_name;
    friend bool operator==(const Join&, const Join&) = default;
};

struct Message {
    std::string text;
    friend bool operator==(const Message&, const Message&) = default;
};

struct TypingStarted {
    friend bool operator==(const TypingStarted&, const TypingStarted&) = default;
};

struct FileCreated {
    std::string filename;
    FileKind file_kind = FileKind::Document;
    std::string content;
    friend bool operator==(const FileCreated&, const FileCreated&) = default;
};

struct SystemNote {
    std::string note;
    friend bool operator==(const SystemNote&, const SystemNote&) = default;
};

using EventKind = std::variant<Join, Message, TypingStarted, FileCreated, SystemNote>;

inline const char* kind_name(const EventKind& k) {
    struct V {
        const char* operator()(const Join&) const { return "join"; }
        const char* operator()(const Message&) const { return "message"; }
        const char* operator()(const TypingStarted&) const { return "typing"; }
        const char* operator()(const FileCreated&) const { return "file"; }
        const char* operator()(const SystemNote&) const { return "system"; }
    };
    return std::visit(V{}, k);
}

struct Event {
    Seq seq = 0;
    TimeMs wall_time = 0;
    AgentId author;
    EventKind kind;

    template <class T>
    bool is() const { return std::holds_alternative<T>(kind); }
    template <class T>
    const T& as() const { return std::get<T>(kind); }

    friend bool operator==(const Event&, const Event&) = default;
};

// --- wire encoding (one JSON object per line) ---

inline nlohmann::ordered_json to_json(const Event& e) {
    nlohmann::ordered_json payload = nlohmann::ordered_json::object();
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, Join>) {
                payload["name"] = k.name;
                payload["role_name"] = k.role_name;
            } else if constexpr (std::is_same_v<T, Message>) {
                payload["text"] = k.text;
            } else if constexpr (std::is_same_v<T, FileCreated>) {
                payload["filename"] = k.filename;
                payload["file_kind"] = to_string(k.file_kind);
                payload["content"] = k.content;
            } else if constexpr (std::is_same_v<T, SystemNote>) {
                payload["note"] = k.note;
            }
        },
        e.kind);
    nlohmann::ordered_json j;
    j["seq"] = e.seq;
    j["wall_time"] = e.wall_time;
    j["author"] = e.author.value;
    j["kind"] = kind_name(e.kind);
    j["payload"] = std::move(payload);
    return j;
}

inline Event event_from_json(const nlohmann::json& j) {
    try {
        Event e;
        e.seq = j.at("seq").get<Seq>();
        e.wall_time = j.at("wall_time").get<TimeMs>();
        e.author = AgentId{j.at("author").get<std::string>()};
        const auto kind = j.at("kind").get<std::string>();
        const auto& p = j.at("payload");
        if (kind == "join")
            e.kind = Join{p.at("name").get<std::string>(), p.at("role_name").get<std::string>()};
        else if (kind == "message")
            e.kind = Message{p.at("text").get<std::string>()};
        else if (kind == "typing")
            e.kind = TypingStarted{};
        else if (kind == "file")
            e.kind = FileCreated{p.at("filename").get<std::string>(),
                                 file_kind_from_string(p.at("file_kind").get<std::string>()),
                                 p.at("content").get<std::string>()};
        else if (kind == "system")
            e.kind = SystemNote{p.at("note").get<std::string>()};
        else
            throw ParseError("unknown event kind '" + kind + "'");
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed event: ") + ex.what());
    }
}

inline std::string to_jsonl(const std::vector<Event>& events) {
    std::string out;
    for (const auto& e : events) {
        out += to_json(e).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<Event> events_from_jsonl(const std::string& text) {
    std::vector<Event> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::parse_error& ex) {
            throw ParseError(std::string("bad jsonl line: ") + ex.what());
        }
    }
    return out;
}

} // namespace teamline

template <>
struct std::hash<teamline::AgentId> {
    std::size_t operator()(const teamline::AgentId& id) const noexcept {
        return std::hash<std::string>{}(id.value);
    }
};
