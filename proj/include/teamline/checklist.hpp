#pragma once

#include "csv.hpp"
#include "errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace teamline {

struct Criterion {
    std::string id;  // "F1".."F17", "Q1".."Q3" for the bundled rubric
    std::string text;
    friend bool operator==(const Criterion&, const Criterion&) = default;
};

struct Rubric {
    std::vector<Criterion> functionality;
    std::vector<Criterion> quality;

    std::vector<Criterion> all() const {
        auto out = functionality;
        out.insert(out.end(), quality.begin(), quality.end());
        return out;
    }
    friend bool operator==(const Rubric&, const Rubric&) = default;
};

/// The tic-tac-toe evaluation rubric: 17 functionality and 3 code-quality criteria.
inline const Rubric& default_rubric() {
    static const Rubric rubric = [] {
        const std::vector<std::string> functionality = {
            "The code compiles without errors",
            "Uses 'X' and 'O' for the two players",
            "Creates a 3x3 grid",
            "Guides the players through the game",
            "Starts the game by displaying an empty board",
            "Starts the game by assigning 'X' to the first player and 'O' to the second player",
            "Prompts the players to input their moves by specifying the row and column",
            "Handles non-integer input",
            "Ensures that the user input is not out-of-range",
            "Ensures that the user input is not in an already occupied cell",
            "Correct placement of X's and O's according to user input coordinates",
            "Displays the updated board after each move",
            "Displays the final board after the game ends",
            "Detects the winner",
            "Announces the result of game as soon as a player wins",
            "Announces the result of game if it ends in a tie",
            "After the game concludes, asks for new game and if so restarts the game",
        };
        const std::vector<std::string> quality = {
            "Decomposition",
            "Source Code Documentation (general comments, inline comments, etc.)",
            "Supporting material (user instructions, summary, notes, etc.)",
        };
        Rubric r;
        for (std::size_t i = 0; i < functionality.size(); ++i)
            r.functionality.push_back({"F" + std::to_string(i + 1), functionality[i]});
        for (std::size_t i = 0; i < quality.size(); ++i)
            r.quality.push_back({"Q" + std::to_string(i + 1), quality[i]});
        return r;
    }();
    return rubric;
}

enum class Mark { Pass, Fail, Partial, NotAssessed };

inline const char* to_string(Mark m) {
    switch (m) {
    case Mark::Pass: return "pass";
    case Mark::Fail: return "fail";
    case Mark::Partial: return "partial";
    case Mark::NotAssessed: return "not_assessed";
    }
    return "not_assessed";
}

inline Mark mark_from_string(const std::string& raw) {
    std::string s = raw;
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (s == "pass") return Mark::Pass;
    if (s == "fail") return Mark::Fail;
    if (s == "partial") return Mark::Partial;
    if (s == "not_assessed") return Mark::NotAssessed;
    throw UnknownMark("unknown mark '" + s + "' (expected pass, fail, partial, not_assessed)");
}

struct MarkInput {
    std::string mark;
    std::string note;
};

struct ScoreCard {
    std::string system_name;
    std::string run_id;
    Rubric rubric;
    std::map<std::string, Mark> marks;
    std::map<std::string, std::string> notes;

    std::size_t passes(const std::vector<Criterion>& group) const {
        return static_cast<std::size_t>(std::count_if(group.begin(), group.end(), [&](const Criterion& c) {
            return marks.at(c.id) == Mark::Pass;
        }));
    }
    std::size_t functionality_passes() const { return passes(rubric.functionality); }
    std::size_t quality_passes() const { return passes(rubric.quality); }
};

/// Validates one mark per rubric criterion. Notes are stored verbatim.
inline ScoreCard score(const std::string& system_name, const std::string& run_id,
                       const std::map<std::string, MarkInput>& input, const Rubric& rubric = default_rubric()) {
    ScoreCard card{system_name, run_id, rubric, {}, {}};
    const auto criteria = rubric.all();
    for (const auto& [id, _] : input) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return c.id == id; }))
            throw UnknownCriterion("criterion '" + id + "' is not part of the rubric");
    }
    for (const auto& c : criteria) {
        auto it = input.find(c.id);
        if (it == input.end()) throw MissingCriterion("no mark for criterion " + c.id + " (" + c.text + ")");
        card.marks[c.id] = mark_from_string(it->second.mark);
        if (!it->second.note.empty()) card.notes[c.id] = it->second.note;
    }
    return card;
}

/// Reads "criterion,mark,note" rows (note optional).
inline std::map<std::string, MarkInput> marks_from_csv(std::string_view text) {
    auto rows = csv::parse(text);
    std::map<std::string, MarkInput> out;
    if (rows.empty()) return out;
    if (rows.front().size() < 2 || rows.front()[0] != "criterion" || rows.front()[1] != "mark")
        throw ParseError("marks CSV must start with a criterion,mark[,note] header");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() < 2) throw ParseError("marks CSV row " + std::to_string(r) + " is short");
        out[f[0]] = {f[1], f.size() > 2 ? f[2] : std::string{}};
    }
    return out;
}

inline nlohmann::ordered_json to_json(const Rubric& r) {
    nlohmann::ordered_json j;
    auto group = [](const std::vector<Criterion>& g) {
        auto a = nlohmann::ordered_json::array();
        for (const auto& c : g) a.push_back({{"id", c.id}, {"text", c.text}});
        return a;
    };
    j["functionality"] = group(r.functionality);
    j["quality"] = group(r.quality);
    return j;
}

inline Rubric rubric_from_json(const nlohmann::json& j) {
    try {
        Rubric r;
        for (const auto& c : j.at("functionality")) r.functionality.push_back({c.at("id"), c.at("text")});
        for (const auto& c : j.at("quality")) r.quality.push_back({c.at("id"), c.at("text")});
        return r;
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed rubric: ") + ex.what());
    }
}

inline nlohmann::ordered_json to_json(const ScoreCard& card) {
    nlohmann::ordered_json j;
    j["system_name"] = card.system_name;
    j["run_id"] = card.run_id;
    j["rubric"] = to_json(card.rubric);
    auto marks = nlohmann::ordered_json::array();
    for (const auto& c : card.rubric.all()) {
        nlohmann::ordered_json m;
        m["criterion"] = c.id;
        m["mark"] = to_string(card.marks.at(c.id));
        auto n = card.notes.find(c.id);
        m["note"] = n == card.notes.end() ? "" : n->second;
        marks.push_back(std::move(m));
    }
    j["marks"] = std::move(marks);
    j["functionality_passes"] = card.functionality_passes();
    j["quality_passes"] = card.quality_passes();
    return j;
}

inline ScoreCard scorecard_from_json(const nlohmann::json& j) {
    try {
        std::map<std::string, MarkInput> input;
        for (const auto& m : j.at("marks"))
            input[m.at("criterion").get<std::string>()] = {m.at("mark").get<std::string>(), m.value("note", "")};
        return score(j.at("system_name"), j.at("run_id"), input, rubric_from_json(j.at("rubric")));
    } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("malformed score card: ") + ex.what());
    }
}

/// Criterion-by-system matrix.
struct ComparisonTable {
    std::vector<std::string> columns;  // "system/run_id"
    std::vector<Criterion> rows;
    std::size_t functionality_rows = 0;
    std::vector<std::vector<Mark>> cells;  // [row][column]
    std::vector<std::size_t> functionality_totals;
    std::vector<std::size_t> quality_totals;
};

inline ComparisonTable compare(const std::vector<ScoreCard>& cards) {
    ComparisonTable t;
    if (cards.empty()) return t;
    const auto& rubric = cards.front().rubric;
    for (const auto& c : cards)
        if (!(c.rubric == rubric))
            throw RubricMismatch("score card " + c.system_name + "/" + c.run_id + " uses a different rubric");
    t.rows = rubric.all();
    t.functionality_rows = rubric.functionality.size();
    for (const auto& c : cards) {
        t.columns.push_back(c.system_name + "/" + c.run_id);
        t.functionality_totals.push_back(c.functionality_passes());
        t.quality_totals.push_back(c.quality_passes());
    }
    for (const auto& crit : t.rows) {
        std::vector<Mark> row;
        for (const auto& c : cards) row.push_back(c.marks.at(crit.id));
        t.cells.push_back(std::move(row));
    }
    return t;
}

inline std::string to_csv(const ComparisonTable& t) {
    std::vector<std::string> header = {"criterion", "text"};
    header.insert(header.end(), t.columns.begin(), t.columns.end());
    std::string out = csv::row(header);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::vector<std::string> f = {t.rows[r].id, t.rows[r].text};
        for (auto m : t.cells[r]) f.emplace_back(to_string(m));
        out += csv::row(f);
    }
    std::vector<std::string> ft = {"total", "functionality passes"}, qt = {"total", "quality passes"};
    for (auto n : t.functionality_totals) ft.push_back(std::to_string(n));
    for (auto n : t.quality_totals) qt.push_back(std::to_string(n));
    out += csv::row(ft);
    out += csv::row(qt);
    return out;
}

inline std::string to_text(const ComparisonTable& t) {
    std::size_t text_w = 9;
    for (const auto& r : t.rows) text_w = std::max(text_w, r.id.size() + 1 + r.text.size());
    std::vector<std::size_t> col_w;
    for (const auto& c : t.columns) col_w.push_back(std::max<std::size_t>(c.size(), 12));

    std::ostringstream os;
    auto pad = [&](const std::string& s, std::size_t w) { os << s << std::string(w > s.size() ? w - s.size() : 0, ' '); };
    pad("criterion", text_w);
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        os << "  ";
        pad(t.columns[c], col_w[c]);
    }
    os << '\n';
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        pad(t.rows[r].id + " " + t.rows[r].text, text_w);
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            os << "  ";
            pad(to_string(t.cells[r][c]), col_w[c]);
        }
        os << '\n';
    }
    auto totals = [&](const char* name, const std::vector<std::size_t>& v, std::size_t of) {
        pad(name, text_w);
        for (std::size_t c = 0; c < v.size(); ++c) {
            os << "  ";
            pad(std::to_string(v[c]) + "/" + std::to_string(of), col_w[c]);
        }
        os << '\n';
    };
    if (!t.columns.empty()) {
        totals("functionality", t.functionality_totals, t.functionality_rows);
        totals("quality", t.quality_totals, t.rows.size() - t.functionality_rows);
    }
    return os.str();
}

} // namespace teamline
