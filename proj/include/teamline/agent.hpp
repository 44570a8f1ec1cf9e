#pragma once

#include "clock.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "provider.hpp"
#include "timeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace teamline {

struct AgentSpec {
    AgentId id;
    std::string name;
    std::string role_name;
    std::string persona;
    bool is_human = false;
};

inline void validate(const AgentSpec& spec) {
    if (spec.name.empty()) throw ConfigError("participant name must not be empty");
    if (spec.role_name.empty()) throw ConfigError("participant '" + spec.name + "' has no role name");
    if (!spec.is_human && spec.persona.empty())
        throw ConfigError("AI participant '" + spec.name + "' has no persona");
}

/// Shared team conventions, optionally extended by one collaborative move.
struct InstitutionalKnowledge {
    std::string base;
    std::optional<std::string> collaborative_move;
    std::string move_template = "Use the following collaborative move when interacting with others in the team, "
                                "as appropriate: {description}.";

    std::string rendered() const {
        if (!collaborative_move) return base;
        std::string sentence = move_template;
        if (auto pos = sentence.find("{description}"); pos != std::string::npos)
            sentence.replace(pos, std::string_view("{description}").size(), *collaborative_move);
        return base + " " + sentence;
    }
};

enum class Action { Message, File, None };

inline const char* to_string(Action a) {
    switch (a) {
    case Action::Message: return "message";
    case Action::File: return "file";
    case Action::None: return "none";
    }
    return "none";
}

struct Decision {
    Action action = Action::None;
    std::string reasoning;
    std::string content;
    // Set when the completion did not follow the reply protocol.
    bool warning = false;
};

struct ReasoningEntry {
    Seq seq_at_decision = 0;
    TimeMs wall_time = 0;
    Decision decision;
};

struct AgentState {
    Seq cursor = 0;
    std::vector<ReasoningEntry> reasoning_log;
    int consecutive_none = 0;
};

inline nlohmann::ordered_json to_json(const AgentId& agent, const ReasoningEntry& r) {
    nlohmann::ordered_json j;
    j["agent"] = agent.value;
    j["seq_at_decision"] = r.seq_at_decision;
    j["wall_time"] = r.wall_time;
    j["action"] = to_string(r.decision.action);
    j["reasoning"] = r.decision.reasoning;
    j["content"] = r.decision.content;
    j["warning"] = r.decision.warning;
    return j;
}

// ---------------------------------------------------------------------------
// Prompt assembly

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(pos));
            break;
        }
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

} // namespace detail

/// Display names collected from Join events: id -> "Name (Role)".
inline std::map<AgentId, std::string> participant_labels(const std::vector<Event>& events) {
    std::map<AgentId, std::string> labels;
    for (const auto& e : events)
        if (e.is<Join>()) labels[e.author] = e.as<Join>().name + " (" + e.as<Join>().role_name + ")";
    return labels;
}

inline const std::string kDecisionProtocol =
    "Everything that happens in the team channel is listed below in order: messages, shared files, "
    "and who joined. Whenever something new happens you decide for yourself whether to act. You may "
    "send a message, create a file, or do nothing.\n"
    "\n"
    "Reply in exactly this format:\n"
    "ACTION: MESSAGE or FILE or NONE\n"
    "REASONING: your private reasoning (only the admin can see it)\n"
    "CONTENT: for MESSAGE, the text to post; for FILE, instructions for writing the file, starting with "
    "a line \"FILENAME: <name>\"; leave out for NONE";

struct PromptOptions {
    ChatParams params{0.2, 1024, {}};
    /// Names of human participants, listed only when non-empty.
    std::vector<std::string> disclosed_humans;
};

/// Builds the decision request for one agent.
///
/// The system prompt holds, in order, the persona, the institutional
/// knowledge and the reply protocol. The message list renders the events
/// followed by one status line naming whoever is currently typing.
inline ChatRequest assemble_prompt(const AgentSpec& spec, const InstitutionalKnowledge& knowledge,
                                   const std::vector<Event>& events, const std::vector<AgentId>& typing,
                                   const PromptOptions& options = {}) {
    ChatRequest req;
    req.purpose = RequestPurpose::Decision;
    req.params = options.params;

    req.system_prompt = spec.persona;
    const auto k = knowledge.rendered();
    if (!k.empty()) req.system_prompt += "\n\n" + k;
    req.system_prompt += "\n\nYou are " + spec.name + " (" + spec.role_name + ").";
    if (!options.disclosed_humans.empty()) {
        req.system_prompt += " Human participants:";
        for (std::size_t i = 0; i < options.disclosed_humans.size(); ++i)
            req.system_prompt += (i ? ", " : " ") + options.disclosed_humans[i];
        req.system_prompt += ".";
    }
    req.system_prompt += " " + kDecisionProtocol;

    auto labels = participant_labels(events);
    auto label_of = [&](const AgentId& id) {
        auto it = labels.find(id);
        return it == labels.end() ? id.value : it->second;
    };

    for (const auto& e : events) {
        if (e.is<Join>())
            req.messages.push_back({label_of(e.author), "joined the channel."});
        else if (e.is<Message>())
            req.messages.push_back({label_of(e.author), e.as<Message>().text});
        else if (e.is<FileCreated>())
            req.messages.push_back(
                {label_of(e.author) + " shared file " + e.as<FileCreated>().filename, e.as<FileCreated>().content});
        else if (e.is<SystemNote>())
            req.messages.push_back({"System", e.as<SystemNote>().note});
    }

    std::string status;
    if (typing.empty()) {
        status = "No one is typing.";
    } else {
        for (std::size_t i = 0; i < typing.size(); ++i) {
            if (i) status += (i + 1 == typing.size()) ? " and " : ", ";
            status += label_of(typing[i]);
        }
        status += typing.size() == 1 ? " is typing." : " are typing.";
    }
    req.messages.push_back({"", status});
    return req;
}

// ---------------------------------------------------------------------------
// Decision protocol

/// Parses the ACTION / REASONING / CONTENT reply. Never throws: anything
/// that does not start with a valid ACTION line becomes a None decision
/// carrying the raw text as reasoning, flagged with a warning.
inline Decision parse_decision(std::string_view completion) {
    const auto lines = detail::split_lines(completion);
    std::size_t i = 0;
    while (i < lines.size() && detail::trim(lines[i]).empty()) ++i;

    auto fallback = [&] {
        Decision d;
        d.reasoning = detail::trim(completion);
        d.warning = true;
        return d;
    };
    if (i == lines.size()) return fallback();

    auto tag_value = [](std::string_view line, std::string_view tag) -> std::optional<std::string_view> {
        auto t = line.find_first_not_of(" \t");
        if (t == std::string_view::npos) return std::nullopt;
        line.remove_prefix(t);
        if (line.size() < tag.size()) return std::nullopt;
        for (std::size_t c = 0; c < tag.size(); ++c)
            if (std::toupper(static_cast<unsigned char>(line[c])) != tag[c]) return std::nullopt;
        return line.substr(tag.size());
    };

    auto action_text = tag_value(lines[i], "ACTION:");
    if (!action_text) return fallback();
    const auto verb = detail::lower(detail::trim(*action_text));
    Decision d;
    if (verb == "message")
        d.action = Action::Message;
    else if (verb == "file")
        d.action = Action::File;
    else if (verb == "none")
        d.action = Action::None;
    else
        return fallback();

    enum class Block { Skip, Reasoning, Content } block = Block::Skip;
    std::string reasoning, content;
    bool have_content = false;
    for (++i; i < lines.size(); ++i) {
        const auto line = lines[i];
        if (block != Block::Content) {
            if (auto v = tag_value(line, "REASONING:")) {
                block = Block::Reasoning;
                reasoning = std::string(*v);
                continue;
            }
            if (auto v = tag_value(line, "CONTENT:")) {
                block = Block::Content;
                content = std::string(*v);
                have_content = true;
                continue;
            }
        }
        std::string& target = block == Block::Content ? content : reasoning;
        if (block == Block::Skip) continue;
        target += '\n';
        target += line;
    }
    d.reasoning = detail::trim(reasoning);
    d.content = have_content ? detail::trim(content) : std::string{};

    if ((d.action == Action::Message || d.action == Action::File) && d.content.empty()) {
        d.action = Action::None;
        d.warning = true;
    }
    if (d.action == Action::None && !d.content.empty()) {
        d.content.clear();
        d.warning = true;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Files

/// Value of the first "FILENAME: <name>" line, if any.
inline std::optional<std::string> filename_from_instructions(std::string_view instructions) {
    for (auto line : detail::split_lines(instructions)) {
        auto t = detail::trim(line);
        if (t.size() > 9 && detail::lower(t.substr(0, 9)) == "filename:") {
            auto name = detail::trim(std::string_view(t).substr(9));
            if (!name.empty()) return name;
        }
    }
    return std::nullopt;
}

/// "<role>-<seq>.txt" with the role lowercased and spaces turned into dashes.
inline std::string default_filename(const std::string& role_name, Seq seq) {
    std::string slug;
    for (unsigned char c : role_name) slug += std::isspace(c) ? '-' : static_cast<char>(std::tolower(c));
    return slug + "-" + std::to_string(seq) + ".txt";
}

inline const std::set<std::string>& default_code_extensions() {
    static const std::set<std::string> exts = {".java", ".py",  ".js", ".ts", ".cpp", ".cc", ".c",
                                               ".h",    ".hpp", ".cs", ".go", ".rs",  ".kt", ".rb"};
    return exts;
}

inline FileKind classify_file(const std::string& filename, const std::set<std::string>& code_extensions) {
    auto dot = filename.rfind('.');
    if (dot == std::string::npos) return FileKind::Document;
    return code_extensions.count(detail::lower(filename.substr(dot))) ? FileKind::Code : FileKind::Document;
}

inline const std::string kFileProtocol =
    "You are now writing a file you decided to share with the team. Follow your own instructions below. "
    "Reply with the complete file content only, without any preamble.";

// ---------------------------------------------------------------------------
// Agent

struct AgentOptions {
    PromptOptions prompt;
    ChatParams file_params{0.2, 4096, {}};
    TimeMs pause_min_ms = 3'000;
    TimeMs pause_max_ms = 15'000;
    std::set<std::string> code_extensions = default_code_extensions();
    TimeMs typing_expiry_ms = kTypingExpiryMs;
};

struct StepResult {
    /// Whether the provider was asked for a decision.
    bool prompted = false;
    /// The Message or FileCreated the agent produced, if any.
    std::optional<Event> event;
    /// Every event this step appended, in order.
    std::vector<Event> appended;
    /// Pause the runner should wait before the next step.
    TimeMs pause_ms = 0;
};

/// One autonomous participant: observes the timeline, decides, acts.
///
/// step() may be called from any thread but never runs concurrently with
/// itself; state() may be read at any time.
class Agent {
public:
    Agent(AgentSpec spec, std::shared_ptr<Provider> provider, AgentOptions options, std::uint64_t seed)
        : spec_(std::move(spec)), provider_(std::move(provider)), options_(std::move(options)), rng_(seed) {
        validate(spec_);
        if (options_.pause_min_ms < 0 || options_.pause_min_ms > options_.pause_max_ms)
            throw ConfigError("pause range must satisfy 0 <= low <= high");
    }

    const AgentSpec& spec() const { return spec_; }
    const AgentOptions& options() const { return options_; }

    AgentState state() const {
        std::lock_guard lock(state_mutex_);
        return state_;
    }

    Seq cursor() const {
        std::lock_guard lock(state_mutex_);
        return state_.cursor;
    }

    int consecutive_none() const {
        std::lock_guard lock(state_mutex_);
        return state_.consecutive_none;
    }

    void set_cursor(Seq cursor) {
        std::lock_guard lock(state_mutex_);
        state_.cursor = cursor;
    }

    /// Observe, decide, act. Does nothing (and calls no provider) when no
    /// event arrived since the last decision. Provider failures propagate and
    /// leave the cursor untouched so the next step retries.
    StepResult step(Timeline& timeline, const InstitutionalKnowledge& knowledge) {
        std::lock_guard step_lock(step_mutex_);
        StepResult result;
        result.pause_ms = draw_pause();

        const Seq seen = cursor();
        if (timeline.head() == seen) return result;

        const auto events = timeline.snapshot();
        const Seq head = events.size();
        const TimeMs now = timeline.clock().now_ms();
        auto typing = active_typists(events, now, options_.typing_expiry_ms);
        std::erase(typing, spec_.id);

        result.prompted = true;
        const auto request = assemble_prompt(spec_, knowledge, events, typing, options_.prompt);
        const auto response = provider_->complete(request);
        add_usage(response.usage);
        Decision decision = parse_decision(response.text);

        {
            std::lock_guard lock(state_mutex_);
            state_.cursor = head;
            state_.reasoning_log.push_back({head, now, decision});
            if (decision.action == Action::None) ++state_.consecutive_none;
            else state_.consecutive_none = 0;
        }

        switch (decision.action) {
        case Action::Message: {
            result.appended.push_back(timeline.append(spec_.id, TypingStarted{}));
            auto msg = timeline.append(spec_.id, Message{decision.content});
            result.appended.push_back(msg);
            result.event = msg;
            break;
        }
        case Action::File: {
            auto file = generate_file(timeline, knowledge, events, decision.content, head);
            result.appended.push_back(file);
            result.event = file;
            break;
        }
        case Action::None:
            break;
        }
        return result;
    }

    /// Second-stage call that turns the agent's own instructions into file
    /// content and appends the FileCreated event. Nothing is appended when
    /// the provider fails.
    Event generate_file(Timeline& timeline, const InstitutionalKnowledge& knowledge,
                        const std::vector<Event>& history, const std::string& instructions, Seq seq_hint) {
        if (detail::trim(instructions).empty()) throw ConfigError("file instructions are empty");
        const auto filename = filename_from_instructions(instructions).value_or(
            default_filename(spec_.role_name, seq_hint));

        ChatRequest req;
        req.purpose = RequestPurpose::FileGeneration;
        req.params = options_.file_params;
        req.system_prompt = spec_.persona;
        if (auto k = knowledge.rendered(); !k.empty()) req.system_prompt += "\n\n" + k;
        req.system_prompt += "\n\n" + kFileProtocol;
        auto labels = participant_labels(history);
        for (const auto& e : history) {
            if (e.is<Message>()) req.messages.push_back({labels[e.author], e.as<Message>().text});
            else if (e.is<FileCreated>())
                req.messages.push_back(
                    {labels[e.author] + " shared file " + e.as<FileCreated>().filename, e.as<FileCreated>().content});
        }
        req.messages.push_back({"Your file instructions", instructions});

        const auto response = provider_->complete(req);
        add_usage(response.usage);
        return timeline.append(spec_.id,
                               FileCreated{filename, classify_file(filename, options_.code_extensions), response.text});
    }

    TokenUsage usage() const {
        std::lock_guard lock(state_mutex_);
        return usage_;
    }

    std::string reasoning_jsonl() const {
        std::string out;
        for (const auto& r : state().reasoning_log) {
            out += to_json(spec_.id, r).dump();
            out += '\n';
        }
        return out;
    }

private:
    void add_usage(const TokenUsage& u) {
        std::lock_guard lock(state_mutex_);
        usage_ += u;
    }

    TimeMs draw_pause() {
        const auto span = static_cast<double>(options_.pause_max_ms - options_.pause_min_ms + 1);
        const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
        return options_.pause_min_ms + std::min<TimeMs>(static_cast<TimeMs>(u * span),
                                                        options_.pause_max_ms - options_.pause_min_ms);
    }

    AgentSpec spec_;
    std::shared_ptr<Provider> provider_;
    AgentOptions options_;
    std::mt19937_64 rng_;
    TokenUsage usage_;

    std::mutex step_mutex_;
    mutable std::mutex state_mutex_;
    AgentState state_;
};

} // namespace teamline
