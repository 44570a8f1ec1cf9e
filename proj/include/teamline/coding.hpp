#pragma once

#include "assets.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "provider.hpp"
#include "transcript.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace teamline {

/// Bales' Interaction Process Analysis categories plus a catch-all.
struct IpaCategory {
    int code;
    std::string_view label;
    std::string_view description;
};

inline constexpr int kCategoryCount = 13;
inline constexpr int kNoneOfTheAbove = 13;

inline constexpr std::array<IpaCategory, kCategoryCount> kIpaCategories = {{
    {1, "Shows Solidarity", "raises other's status, gives help, reward."},
    {2, "Shows Tension Release", "jokes, laughs, shows satisfaction."},
    {3, "Agrees", "shows passive acceptance, understands, concurs, complies."},
    {4, "Gives Suggestion", "direction, implying autonomy for other."},
    {5, "Gives Opinion", "evaluation, analysis, expresses feeling, wish."},
    {6, "Gives Orientation", "information, repeats, clarifies, confirms."},
    {7, "Asks for Orientation", "information, repetition, confirmation."},
    {8, "Asks for Opinion", "evaluation, analysis, expression of feeling."},
    {9, "Asks for Suggestion", "direction, possible ways of action."},
    {10, "Disagrees", "shows passive rejection, formality, withholds help."},
    {11, "Shows Tension", "asks for help, withdraws out of field."},
    {12, "Shows Antagonism", "deflates other's status, defends or asserts self."},
    {13, "None of the Above", ""},
}};

inline bool is_valid_category(int code) { return code >= 1 && code <= kCategoryCount; }

inline const IpaCategory& ipa_category(int code) {
    if (!is_valid_category(code)) throw InvalidCategory("category " + std::to_string(code) + " outside 1..13");
    return kIpaCategories[static_cast<std::size_t>(code - 1)];
}

/// Case-insensitive lookup by label.
inline std::optional<int> category_from_label(std::string_view label) {
    auto same = [](std::string_view a, std::string_view b) {
        return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
                   return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
               });
    };
    for (const auto& c : kIpaCategories)
        if (same(c.label, label)) return c.code;
    return std::nullopt;
}

struct CodedTurn {
    std::size_t turn_index = 0;
    int category = kNoneOfTheAbove;
    /// "llm" or "human:<name>".
    std::string rater = "llm";
    std::string raw_response;
    bool parse_failed = false;
    /// Speaker role, when known. Needed for per-role distributions.
    std::string role;
};

// ---------------------------------------------------------------------------
// Classification

inline constexpr std::string_view kTargetMarker = ">>> TARGET: ";

/// Up to two turns either side of turn i, each labelled "Name (Role)"; the
/// label of turn i carries the target marker.
inline std::vector<ChatMessage> build_context(const std::vector<Turn>& turns, std::size_t i) {
    if (i >= turns.size()) throw std::out_of_range("turn index out of range");
    const std::size_t lo = i >= 2 ? i - 2 : 0;
    const std::size_t hi = std::min(turns.size() - 1, i + 2);
    std::vector<ChatMessage> out;
    for (std::size_t k = lo; k <= hi; ++k) {
        const auto& t = turns[k];
        std::string label = t.speaker + " (" + t.role + ")";
        if (k == i) label = std::string(kTargetMarker) + label;
        std::string content = t.is_file ? "<File: " + t.filename.value_or("") + ">\n" + t.message : t.message;
        out.push_back({std::move(label), std::move(content)});
    }
    return out;
}

/// Accepts an integer 1..13 with optional surrounding whitespace and one
/// trailing period.
inline std::optional<int> parse_category(std::string_view reply) {
    auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!reply.empty() && is_space(reply.front())) reply.remove_prefix(1);
    while (!reply.empty() && is_space(reply.back())) reply.remove_suffix(1);
    if (!reply.empty() && reply.back() == '.') reply.remove_suffix(1);
    if (reply.empty() || reply.size() > 2) return std::nullopt;
    int value = 0;
    for (char c : reply) {
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + (c - '0');
    }
    return is_valid_category(value) ? std::optional<int>(value) : std::nullopt;
}

struct ClassifyOptions {
    ChatParams params{0.0, 8, {}};
    std::string system_prompt = std::string(assets::kIpaLabelingPrompt);
    std::string rater = "llm";
};

/// Codes one turn. A reply that does not parse is retried once; a second
/// failure records None of the Above with parse_failed set.
inline CodedTurn classify_turn(const std::vector<Turn>& turns, std::size_t i, Provider& provider,
                               const ClassifyOptions& options = {}) {
    ChatRequest req;
    req.purpose = RequestPurpose::Classification;
    req.system_prompt = options.system_prompt;
    req.messages = build_context(turns, i);
    req.params = options.params;

    CodedTurn coded;
    coded.turn_index = turns[i].index;
    coded.rater = options.rater;
    coded.role = turns[i].role;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = provider.complete(req);
        coded.raw_response = resp.text;
        if (auto c = parse_category(resp.text)) {
            coded.category = *c;
            return coded;
        }
    }
    coded.category = kNoneOfTheAbove;
    coded.parse_failed = true;
    return coded;
}

// ---------------------------------------------------------------------------
// Agreement

struct AgreementReport {
    std::size_t n = 0;
    double percent_agreement = 0.0;
    double kappa = 0.0;
    double observed_po = 0.0;
    double expected_pe = 0.0;
    /// Set when both raters are constant on the same category (p_e = 1).
    bool degenerate = false;
    /// confusion[a-1][b-1]: turns rater A coded a and rater B coded b.
    std::array<std::array<std::size_t, kCategoryCount>, kCategoryCount> confusion{};
};

namespace coding_detail {

inline std::vector<std::pair<int, int>> paired(const std::vector<CodedTurn>& a, const std::vector<CodedTurn>& b) {
    auto index = [](const std::vector<CodedTurn>& v, const char* who) {
        std::map<std::size_t, int> m;
        for (const auto& c : v) {
            ipa_category(c.category);
            if (!m.emplace(c.turn_index, c.category).second)
                throw LengthMismatch(std::string("rater ") + who + " codes turn " + std::to_string(c.turn_index) +
                                     " more than once");
        }
        return m;
    };
    const auto ma = index(a, "A");
    const auto mb = index(b, "B");
    if (ma.size() != mb.size()) throw LengthMismatch("raters coded different numbers of turns");
    std::vector<std::pair<int, int>> out;
    for (auto ia = ma.begin(), ib = mb.begin(); ia != ma.end(); ++ia, ++ib) {
        if (ia->first != ib->first) throw LengthMismatch("raters coded different turn indices");
        out.emplace_back(ia->second, ib->second);
    }
    if (out.empty()) throw LengthMismatch("no coded turns");
    return out;
}

} // namespace coding_detail

/// Fraction of shared turns on which both raters chose the same category.
inline double percent_agreement(const std::vector<CodedTurn>& a, const std::vector<CodedTurn>& b) {
    const auto pairs = coding_detail::paired(a, b);
    std::size_t same = 0;
    for (auto [x, y] : pairs) same += x == y;
    return static_cast<double>(same) / static_cast<double>(pairs.size());
}

inline AgreementReport cohens_kappa(const std::vector<CodedTurn>& a, const std::vector<CodedTurn>& b) {
    const auto pairs = coding_detail::paired(a, b);
    AgreementReport r;
    r.n = pairs.size();
    for (auto [x, y] : pairs) ++r.confusion[x - 1][y - 1];

    std::size_t trace = 0;
    std::array<std::size_t, kCategoryCount> rows{}, cols{};
    for (int i = 0; i < kCategoryCount; ++i) {
        trace += r.confusion[i][i];
        for (int j = 0; j < kCategoryCount; ++j) {
            rows[i] += r.confusion[i][j];
            cols[j] += r.confusion[i][j];
        }
    }
    const double n = static_cast<double>(r.n);
    r.observed_po = static_cast<double>(trace) / n;
    r.percent_agreement = r.observed_po;
    double marginal_sum = 0.0;
    for (int c = 0; c < kCategoryCount; ++c) marginal_sum += static_cast<double>(rows[c]) * static_cast<double>(cols[c]);
    r.expected_pe = marginal_sum / (n * n);

    if (r.expected_pe >= 1.0) {
        r.degenerate = true;
        r.kappa = r.observed_po >= 1.0 ? 1.0 : 0.0;
    } else {
        r.kappa = (r.observed_po - r.expected_pe) / (1.0 - r.expected_pe);
    }
    return r;
}

inline nlohmann::ordered_json to_json(const AgreementReport& r) {
    nlohmann::ordered_json j;
    j["n"] = r.n;
    j["percent_agreement"] = r.percent_agreement;
    j["kappa"] = r.kappa;
    j["observed_po"] = r.observed_po;
    j["expected_pe"] = r.expected_pe;
    j["degenerate"] = r.degenerate;
    auto m = nlohmann::ordered_json::array();
    for (const auto& row : r.confusion) m.push_back(row);
    j["confusion"] = std::move(m);
    return j;
}

inline std::string to_text(const AgreementReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "turns              " << r.n << '\n'
       << "percent agreement  " << r.percent_agreement << '\n'
       << "observed p_o       " << r.observed_po << '\n'
       << "expected p_e       " << r.expected_pe << '\n'
       << "cohen's kappa      " << r.kappa << (r.degenerate ? "  (degenerate: both raters constant)" : "") << '\n'
       << "\nconfusion (rows: rater A, columns: rater B)\n    ";
    for (int j = 1; j <= kCategoryCount; ++j) os << (j < 10 ? "   " : "  ") << j;
    os << '\n';
    for (int i = 0; i < kCategoryCount; ++i) {
        os << (i + 1 < 10 ? "  " : " ") << i + 1 << ' ';
        for (int j = 0; j < kCategoryCount; ++j) {
            auto s = std::to_string(r.confusion[i][j]);
            os << std::string(4 - std::min<std::size_t>(4, s.size()), ' ') << s;
        }
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Codes CSV: turn_index,category,rater

inline std::string to_codes_csv(const std::vector<CodedTurn>& codes) {
    std::string out = csv::row({"turn_index", "category", "rater"});
    for (const auto& c : codes) out += csv::row({std::to_string(c.turn_index), std::to_string(c.category), c.rater});
    return out;
}

/// Reads a codes file. The rater column is optional (human files often
/// carry only turn_index,category); `default_rater` fills it in.
inline std::vector<CodedTurn> codes_from_csv(std::string_view text, const std::string& default_rater = "human") {
    auto rows = csv::parse(text);
    std::vector<CodedTurn> out;
    if (rows.empty()) return out;
    const auto& header = rows.front();
    if (header.size() < 2 || header[0] != "turn_index" || header[1] != "category")
        throw ParseError("codes CSV must start with a turn_index,category header");
    const bool has_rater = header.size() >= 3 && header[2] == "rater";
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() == 1 && f[0].empty()) continue;
        if (f.size() < 2) throw ParseError("codes CSV row " + std::to_string(r) + " is short");
        CodedTurn c;
        try {
            c.turn_index = std::stoul(f[0]);
            c.category = std::stoi(f[1]);
        } catch (const std::exception&) {
            throw ParseError("codes CSV row " + std::to_string(r) + " is not numeric");
        }
        if (!is_valid_category(c.category))
            throw InvalidCategory("codes CSV row " + std::to_string(r) + " has category " + f[1]);
        c.rater = has_rater && f.size() >= 3 && !f[2].empty() ? f[2] : default_rater;
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace teamline
