#pragma once

#include "errors.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace teamline::csv {

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += escape(fields[i]);
    }
    out += '\n';
    return out;
}

/// RFC 4180 reader. Accepts LF or CRLF record separators; quoted fields may
/// span lines. A trailing newline does not produce an empty record.
inline std::vector<std::vector<std::string>> parse(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> current;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    bool quoted_closed = false;

    auto end_field = [&] {
        current.push_back(std::move(field));
        field.clear();
        field_started = false;
        quoted_closed = false;
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(current));
        current.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                    quoted_closed = true;
                }
            } else {
                field += c;
            }
            continue;
        }
        switch (c) {
        case '"':
            if (field_started) throw ParseError("stray quote inside unquoted CSV field");
            in_quotes = true;
            field_started = true;
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
            break;
        case '\n':
            end_row();
            break;
        default:
            if (quoted_closed) throw ParseError("characters after closing quote in CSV field");
            field += c;
            field_started = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted CSV field");
    if (field_started || !current.empty()) end_row();
    return rows;
}

} // namespace teamline::csv
