#pragma once

#include "clock.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "event.hpp"

#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace teamline {

/// One conversational turn of a markdown transcript.
struct Turn {
    std::size_t index = 0;
    std::string speaker;
    std::string role;
    std::string time_label;
    std::string message;
    bool is_file = false;
    std::optional<std::string> filename;

    friend bool operator==(const Turn&, const Turn&) = default;
};

namespace transcript_detail {

inline const std::regex& header_pattern() {
    // **Name (Role)** 6:35 PM [optional trailing annotation]
    static const std::regex re(R"(^\*\*(.+?) \(([^()]+)\)\*\*[ \t]+(\d{1,2}:\d{2}[ \t]?[AaPp][Mm])(.*)$)");
    return re;
}

inline const std::regex& file_marker_pattern() {
    static const std::regex re(R"(^<File: (.+)>[ \t]*$)");
    return re;
}

inline bool needs_escape(std::string_view line) {
    return line.rfind("**", 0) == 0 || line.rfind("\\", 0) == 0 || line.rfind("<File:", 0) == 0;
}

inline std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.emplace_back(text.substr(pos));
            return out;
        }
        out.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
}

inline std::string escape_body(std::string_view body) {
    std::string out;
    bool first = true;
    for (auto& line : lines_of(body)) {
        if (!first) out += '\n';
        first = false;
        if (needs_escape(line)) out += '\\';
        out += line;
    }
    return out;
}

} // namespace transcript_detail

/// Renders Message and FileCreated events as markdown blocks separated by a
/// blank line. Other event kinds are omitted.
inline std::string render_markdown(const std::vector<Event>& events) {
    std::map<AgentId, std::pair<std::string, std::string>> who;
    std::string doc;
    for (const auto& e : events) {
        if (e.is<Join>()) {
            who[e.author] = {e.as<Join>().name, e.as<Join>().role_name};
            continue;
        }
        if (!e.is<Message>() && !e.is<FileCreated>()) continue;
        auto it = who.find(e.author);
        const auto& [name, role] =
            it != who.end() ? it->second : std::pair<std::string, std::string>{e.author.value, "Unknown"};
        if (!doc.empty()) doc += '\n';
        doc += "**" + name + " (" + role + ")** " + time_label(e.wall_time) + "\n";
        if (e.is<Message>()) {
            doc += transcript_detail::escape_body(e.as<Message>().text);
        } else {
            const auto& f = e.as<FileCreated>();
            doc += "<File: " + f.filename + ">\n";
            doc += transcript_detail::escape_body(f.content);
        }
        doc += '\n';
    }
    return doc;
}

struct ParsedTranscript {
    std::vector<Turn> turns;
    /// Non-blank lines before the first header that were skipped.
    std::size_t warnings = 0;
};

/// Splits a markdown transcript into turns. Each header starts a turn whose
/// body runs to the next header; trailing blank lines are dropped.
inline ParsedTranscript parse_markdown_detailed(std::string_view doc) {
    using namespace transcript_detail;
    ParsedTranscript out;
    if (doc.empty()) return out;

    std::vector<std::string> body;
    std::optional<Turn> current;

    auto flush = [&] {
        if (!current) return;
        while (!body.empty() && body.back().empty()) body.pop_back();
        std::size_t first = 0;
        std::smatch m;
        if (!body.empty() && std::regex_match(body.front(), m, file_marker_pattern())) {
            current->is_file = true;
            current->filename = m[1].str();
            first = 1;
        }
        std::string msg;
        for (std::size_t i = first; i < body.size(); ++i) {
            if (i > first) msg += '\n';
            const auto& line = body[i];
            msg += line.rfind('\\', 0) == 0 ? line.substr(1) : line;
        }
        current->message = std::move(msg);
        current->index = out.turns.size();
        out.turns.push_back(std::move(*current));
        current.reset();
        body.clear();
    };

    for (auto& raw : lines_of(doc)) {
        std::string line = raw;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::smatch m;
        if (std::regex_match(line, m, header_pattern())) {
            flush();
            current = Turn{};
            current->speaker = m[1].str();
            current->role = m[2].str();
            current->time_label = m[3].str();
            continue;
        }
        if (current)
            body.push_back(std::move(line));
        else if (line.find_first_not_of(" \t") != std::string::npos)
            ++out.warnings;
    }
    flush();
    return out;
}

inline std::vector<Turn> parse_markdown(std::string_view doc) { return parse_markdown_detailed(doc).turns; }

inline const std::vector<std::string>& turn_csv_header() {
    static const std::vector<std::string> h = {"index", "speaker", "role", "time", "message", "is_file", "filename"};
    return h;
}

inline std::string to_csv(const std::vector<Turn>& turns) {
    std::string out = csv::row(turn_csv_header());
    for (const auto& t : turns)
        out += csv::row({std::to_string(t.index), t.speaker, t.role, t.time_label, t.message,
                         t.is_file ? "true" : "false", t.filename.value_or("")});
    return out;
}

inline std::vector<Turn> turns_from_csv(std::string_view text) {
    auto rows = csv::parse(text);
    if (rows.empty()) return {};
    if (rows.front() != turn_csv_header()) throw ParseError("unexpected turns CSV header");
    std::vector<Turn> turns;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 7) throw ParseError("turns CSV row " + std::to_string(r) + " has " +
                                            std::to_string(f.size()) + " fields");
        Turn t;
        t.index = std::stoul(f[0]);
        t.speaker = f[1];
        t.role = f[2];
        t.time_label = f[3];
        t.message = f[4];
        t.is_file = f[5] == "true";
        if (!f[6].empty()) t.filename = f[6];
        turns.push_back(std::move(t));
    }
    return turns;
}

} // namespace teamline
