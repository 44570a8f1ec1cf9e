#pragma once

#include "coding.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace teamline {

/// "Gives" and "Asks for" variants folded together.
struct MergedCategory {
    std::string_view key;
    std::string_view label;
    int gives;
    int asks;
};

inline constexpr std::array<MergedCategory, 3> kMergedCategories = {{
    {"suggestion", "Gives/Asks for Suggestion", 4, 9},
    {"orientation", "Gives/Asks for Orientation", 6, 7},
    {"opinion", "Gives/Asks for Opinion", 5, 8},
}};

/// Categories that have no Gives/Asks partner.
inline constexpr std::array<int, 6> kUnmergedCategories = {1, 2, 3, 10, 11, 12};

struct CodedRun {
    std::string condition_name;
    std::vector<CodedTurn> turns;
};

struct AggregateOptions {
    /// Count None of the Above in proportions and diffs.
    bool include_none = false;
};

struct ConditionReport {
    std::string condition_name;
    std::size_t runs = 0;
    std::map<int, std::size_t> counts;
    std::map<std::string, std::size_t> merged_counts;
    std::map<int, double> proportions;
    std::map<std::string, std::map<int, double>> role_distributions;
    bool include_none = false;

    std::size_t total() const {
        std::size_t t = 0;
        for (auto& [_, n] : counts) t += n;
        return t;
    }
    std::size_t count(int category) const {
        auto it = counts.find(category);
        return it == counts.end() ? 0 : it->second;
    }
};

namespace report_detail {

inline std::map<int, double> proportions_of(const std::map<int, std::size_t>& counts, bool include_none) {
    std::size_t denom = 0;
    for (auto& [c, n] : counts)
        if (include_none || c != kNoneOfTheAbove) denom += n;
    std::map<int, double> out;
    if (denom == 0) return out;
    for (auto& [c, n] : counts)
        if (include_none || c != kNoneOfTheAbove) out[c] = static_cast<double>(n) / static_cast<double>(denom);
    return out;
}

} // namespace report_detail

inline std::map<std::string, std::size_t> merge_counts(const std::map<int, std::size_t>& counts) {
    auto get = [&](int c) {
        auto it = counts.find(c);
        return it == counts.end() ? std::size_t{0} : it->second;
    };
    std::map<std::string, std::size_t> merged;
    for (const auto& m : kMergedCategories) merged[std::string(m.key)] = get(m.gives) + get(m.asks);
    return merged;
}

/// Sums coded runs per condition (in order of first appearance) and derives
/// proportions and per-role distributions. Raw counts always include None of
/// the Above; the option only affects the derived proportions.
inline std::vector<ConditionReport> aggregate(const std::vector<CodedRun>& runs, AggregateOptions options = {}) {
    std::vector<ConditionReport> reports;
    std::map<std::string, std::map<std::string, std::map<int, std::size_t>>> role_counts;

    auto find = [&](const std::string& name) -> ConditionReport& {
        for (auto& r : reports)
            if (r.condition_name == name) return r;
        reports.push_back({});
        reports.back().condition_name = name;
        return reports.back();
    };

    for (const auto& run : runs) {
        auto& rep = find(run.condition_name);
        ++rep.runs;
        for (const auto& t : run.turns) {
            ipa_category(t.category);
            ++rep.counts[t.category];
            ++role_counts[run.condition_name][t.role.empty() ? "unknown" : t.role][t.category];
        }
    }
    for (auto& rep : reports) {
        rep.include_none = options.include_none;
        rep.merged_counts = merge_counts(rep.counts);
        rep.proportions = report_detail::proportions_of(rep.counts, options.include_none);
        for (auto& [role, counts] : role_counts[rep.condition_name])
            rep.role_distributions[role] = report_detail::proportions_of(counts, options.include_none);
    }
    return reports;
}

struct DiffRow {
    std::string label;
    std::size_t control = 0;
    std::size_t condition = 0;
    /// nullopt when the control count is zero.
    std::optional<double> percent_diff;
};

struct DiffReport {
    std::string condition;
    std::string control;
    std::vector<DiffRow> rows;

    const DiffRow* row(std::string_view label) const {
        for (const auto& r : rows)
            if (r.label == label) return &r;
        return nullptr;
    }
};

inline std::optional<double> percent_difference(std::size_t condition, std::size_t control) {
    if (control == 0) return std::nullopt;
    return 100.0 * (static_cast<double>(condition) - static_cast<double>(control)) / static_cast<double>(control);
}

/// Percent change per category relative to the control: merged
/// Gives/Asks rows plus the categories without a partner.
inline DiffReport diff_vs_control(const ConditionReport& cond, const ConditionReport& control) {
    DiffReport d;
    d.condition = cond.condition_name;
    d.control = control.condition_name;
    auto add = [&](std::string label, std::size_t ctl, std::size_t cnd) {
        d.rows.push_back({std::move(label), ctl, cnd, percent_difference(cnd, ctl)});
    };
    const auto mc = merge_counts(control.counts);
    const auto mx = merge_counts(cond.counts);
    for (int c : kUnmergedCategories)
        add(std::string(ipa_category(c).label), control.count(c), cond.count(c));
    for (const auto& m : kMergedCategories)
        add(std::string(m.label), mc.at(std::string(m.key)), mx.at(std::string(m.key)));
    if (cond.include_none || control.include_none)
        add(std::string(ipa_category(kNoneOfTheAbove).label), control.count(kNoneOfTheAbove),
            cond.count(kNoneOfTheAbove));
    return d;
}

struct SequenceStrip {
    std::vector<std::pair<std::size_t, int>> sequence;
    std::map<int, std::size_t> early;
    std::map<int, std::size_t> middle;
    std::map<int, std::size_t> late;
};

/// Orders a run's codes by turn and summarises them in thirds. Position p of
/// n falls in the early third when p < floor(n/3), late when p >= floor(2n/3).
inline SequenceStrip sequence_strip(std::vector<CodedTurn> run) {
    std::sort(run.begin(), run.end(), [](const auto& a, const auto& b) { return a.turn_index < b.turn_index; });
    SequenceStrip s;
    const std::size_t n = run.size();
    const std::size_t first_cut = n / 3;
    const std::size_t second_cut = 2 * n / 3;
    for (std::size_t p = 0; p < n; ++p) {
        s.sequence.emplace_back(run[p].turn_index, run[p].category);
        auto& bucket = p < first_cut ? s.early : p < second_cut ? s.middle : s.late;
        ++bucket[run[p].category];
    }
    return s;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const ConditionReport& r) {
    nlohmann::ordered_json j;
    j["condition"] = r.condition_name;
    j["runs"] = r.runs;
    j["total"] = r.total();
    j["include_none"] = r.include_none;
    auto counts = nlohmann::ordered_json::object();
    for (auto& [c, n] : r.counts) counts[std::to_string(c)] = n;
    j["counts"] = counts;
    auto merged = nlohmann::ordered_json::object();
    for (auto& [k, n] : r.merged_counts) merged[k] = n;
    j["merged_counts"] = merged;
    auto props = nlohmann::ordered_json::object();
    for (auto& [c, p] : r.proportions) props[std::to_string(c)] = p;
    j["proportions"] = props;
    auto roles = nlohmann::ordered_json::object();
    for (auto& [role, dist] : r.role_distributions) {
        auto d = nlohmann::ordered_json::object();
        for (auto& [c, p] : dist) d[std::to_string(c)] = p;
        roles[role] = d;
    }
    j["role_distributions"] = roles;
    return j;
}

inline nlohmann::ordered_json to_json(const DiffReport& d) {
    nlohmann::ordered_json j;
    j["condition"] = d.condition;
    j["control"] = d.control;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : d.rows) {
        nlohmann::ordered_json row;
        row["category"] = r.label;
        row["control"] = r.control;
        row["condition"] = r.condition;
        if (r.percent_diff) row["percent_diff"] = *r.percent_diff;
        else row["percent_diff"] = "undefined (control=0)";
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

inline nlohmann::ordered_json to_json(const SequenceStrip& s) {
    nlohmann::ordered_json j;
    auto seq = nlohmann::ordered_json::array();
    for (auto [idx, cat] : s.sequence) seq.push_back({idx, cat});
    j["sequence"] = std::move(seq);
    auto bucket = [](const std::map<int, std::size_t>& m) {
        auto o = nlohmann::ordered_json::object();
        for (auto& [c, n] : m) o[std::to_string(c)] = n;
        return o;
    };
    j["early"] = bucket(s.early);
    j["middle"] = bucket(s.middle);
    j["late"] = bucket(s.late);
    return j;
}

inline std::string format_percent(const std::optional<double>& p) {
    if (!p) return "undefined (control=0)";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.1f%%", *p);
    return buf;
}

inline std::string to_text(const ConditionReport& r) {
    std::ostringstream os;
    os << "condition " << r.condition_name << " (" << r.runs << " run" << (r.runs == 1 ? "" : "s") << ", "
       << r.total() << " coded turns)\n";
    char line[128];
    for (const auto& c : kIpaCategories) {
        auto it = r.proportions.find(c.code);
        std::snprintf(line, sizeof line, "  %-26s %5zu  %6.1f%%\n", std::string(c.label).c_str(), r.count(c.code),
                      it == r.proportions.end() ? 0.0 : 100.0 * it->second);
        os << line;
    }
    for (const auto& m : kMergedCategories) {
        std::snprintf(line, sizeof line, "  %-26s %5zu\n", std::string(m.label).c_str(),
                      r.merged_counts.at(std::string(m.key)));
        os << line;
    }
    return os.str();
}

inline std::string to_text(const DiffReport& d) {
    std::ostringstream os;
    os << d.condition << " vs " << d.control << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "  %-28s %8s %10s  %s\n", "category", "control", "condition", "change");
    os << line;
    for (const auto& r : d.rows) {
        std::snprintf(line, sizeof line, "  %-28s %8zu %10zu  %s\n", r.label.c_str(), r.control, r.condition,
                      format_percent(r.percent_diff).c_str());
        os << line;
    }
    return os.str();
}

inline std::string to_text(const SequenceStrip& s) {
    std::ostringstream os;
    os << "sequence:";
    for (auto [_, cat] : s.sequence) os << ' ' << cat;
    auto bucket = [&](const char* name, const std::map<int, std::size_t>& m) {
        os << "\n  " << name << ':';
        for (auto& [c, n] : m) os << ' ' << c << 'x' << n;
    };
    bucket("early ", s.early);
    bucket("middle", s.middle);
    bucket("late  ", s.late);
    os << '\n';
    return os.str();
}

} // namespace teamline
