#pragma once

#include "agent.hpp"
#include "clock.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "provider.hpp"
#include "session_config.hpp"
#include "timeline.hpp"
#include "transcript.hpp"

#include <json.hpp>

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace teamline {

/// Builds the provider behind a named binding.
using ProviderFactory = std::function<std::shared_ptr<Provider>(const std::string& name, const ProviderBinding&)>;

inline std::shared_ptr<Provider> make_scripted_provider(const ProviderBinding& b) {
    return std::make_shared<ScriptedProvider>(b.script, b.fallback);
}

/// Factory that only understands scripted bindings.
inline ProviderFactory scripted_provider_factory() {
    return [](const std::string& name, const ProviderBinding& b) -> std::shared_ptr<Provider> {
        if (b.type != ProviderBinding::Type::Scripted)
            throw ConfigError("provider '" + name + "' is not scripted and no network factory was supplied");
        return make_scripted_provider(b);
    };
}

/// Everything a finished (or stopped) session leaves behind.
struct RunArtifacts {
    std::string timeline_jsonl;
    std::string transcript_md;
    std::map<std::string, std::string> reasoning;  // agent name -> jsonl
    nlohmann::ordered_json meta;

    void write_to(const std::filesystem::path& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir / "reasoning");
        auto put = [](const fs::path& p, const std::string& text) {
            std::ofstream out(p, std::ios::binary);
            if (!out) throw Error("cannot write " + p.string());
            out << text;
        };
        put(dir / "timeline.jsonl", timeline_jsonl);
        put(dir / "transcript.md", transcript_md);
        for (const auto& [name, log] : reasoning) put(dir / "reasoning" / (name + ".jsonl"), log);
        put(dir / "meta.json", meta.dump(2) + "\n");
    }
};

/// The scripted client. Greets after a delay, posts the requirements, answers
/// clarifying questions in order and asks for progress when work stalls.
/// Never posts twice without a message or file from someone else in between.
class ScriptedHuman {
public:
    ScriptedHuman(HumanPlaybook playbook, AgentId self) : pb_(std::move(playbook)), self_(std::move(self)) {}

    /// What to say now, if anything. `settled` tells whether the session's
    /// termination conditions other than quiescence already hold.
    std::optional<std::string> act(const std::vector<Event>& events, TimeMs started, TimeMs now, bool settled) {
        switch (stage_) {
        case Stage::Greet:
            if (now - started < seconds_to_ms(pb_.greet_delay_s)) return std::nullopt;
            stage_ = Stage::Requirements;
            return greeting(events);
        case Stage::Requirements:
            if (!someone_else_spoke(events)) return std::nullopt;
            stage_ = Stage::Answering;
            // questions asked so far are covered by the requirements themselves
            scanned_ = events.size();
            return pb_.requirements_text;
        case Stage::Answering:
            break;
        }

        for (Seq s = scanned_; s < events.size(); ++s) {
            const auto& e = events[s];
            if (e.author == self_ || !e.is<Message>()) continue;
            const auto& text = e.as<Message>().text;
            if (text.find(pb_.human_name) != std::string::npos && text.find('?') != std::string::npos) ++pending_;
        }
        scanned_ = events.size();

        if (!someone_else_spoke(events)) return std::nullopt;
        if (pending_ > 0 && next_answer_ < pb_.clarification_answers.size()) {
            --pending_;
            return pb_.clarification_answers[next_answer_++];
        }
        if (!settled && !events.empty() && now - events.back().wall_time >= seconds_to_ms(pb_.stall_threshold_s))
            return pb_.stall_nudge_text;
        return std::nullopt;
    }

    void posted(Seq seq) { last_post_ = seq; }
    std::size_t answers_given() const { return next_answer_; }
    const HumanPlaybook& playbook() const { return pb_; }
    const AgentId& id() const { return self_; }

private:
    enum class Stage { Greet, Requirements, Answering };

    bool someone_else_spoke(const std::vector<Event>& events) const {
        for (Seq s = last_post_; s < events.size(); ++s) {
            const auto& e = events[s];
            if (e.author != self_ && (e.is<Message>() || e.is<FileCreated>())) return true;
        }
        return false;
    }

    std::string greeting(const std::vector<Event>& events) const {
        std::vector<std::string> names;
        std::map<AgentId, std::string> name_of;
        for (const auto& e : events)
            if (e.is<Join>()) name_of[e.author] = e.as<Join>().name;
        for (const auto& e : events) {
            if (e.author == self_ || !e.is<Message>()) continue;
            const auto& n = name_of[e.author];
            if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
        }
        if (names.empty()) return "Hello team!";
        std::string out = "Hello ";
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) out += (i + 1 == names.size()) ? " and " : ", ";
            out += names[i];
        }
        return out + "!";
    }

    HumanPlaybook pb_;
    AgentId self_;
    Stage stage_ = Stage::Greet;
    Seq last_post_ = 0;
    Seq scanned_ = 0;
    std::size_t pending_ = 0;
    std::size_t next_answer_ = 0;
};

enum class SessionStatus { Created, Running, Ended };

inline const char* to_string(SessionStatus s) {
    switch (s) {
    case SessionStatus::Created: return "created";
    case SessionStatus::Running: return "running";
    case SessionStatus::Ended: return "ended";
    }
    return "ended";
}

struct Participant {
    AgentId id;
    std::string name;
    std::string role_name;
    bool is_human = false;
};

/// Observed around every agent step; used to audit prompting.
struct StepTrace {
    std::string agent;
    Seq cursor_before = 0;
    Seq head_before = 0;
    bool prompted = false;
};

/// One team run: the timeline, its agents, the scripted human and the
/// termination rule.
///
/// run() drives the session to completion. With a simulated clock the agents
/// are scheduled cooperatively on one thread (earliest wake first, ties in
/// configuration order), which makes runs byte-for-byte reproducible. With a
/// real clock every agent and the scripted human get their own thread.
/// Sessions can also be driven by hand through step_agent().
class Session {
public:
    explicit Session(SessionConfig config, ProviderFactory factory = scripted_provider_factory())
        : config_(std::move(config)), factory_(std::move(factory)) {
        validate(config_);
        if (config_.clock_mode == ClockMode::Simulated) {
            virtual_clock_ = std::make_shared<VirtualClock>(config_.start_time_ms);
            clock_ = virtual_clock_;
        } else {
            clock_ = std::make_shared<SystemClock>();
        }
        timeline_ = std::make_unique<Timeline>(clock_);
        for (const auto& spec : config_.agents) {
            participants_.push_back({spec.id, spec.name, spec.role_name, spec.is_human});
            if (!spec.is_human) add_agent_object(spec, provider_for(config_.agent_provider.at(spec.name)));
        }
        if (config_.human_playbook) {
            const auto& pb = *config_.human_playbook;
            human_.emplace(pb, find_participant(pb.human_name)->id);
        }
    }

    ~Session() {
        request_stop();
        join_threads();
    }

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Announces every configured participant with a Join event.
    void start() {
        std::lock_guard lock(mutex_);
        if (status_ != SessionStatus::Created) return;
        started_at_ = clock_->now_ms();
        for (const auto& p : participants_) timeline_->append(p.id, Join{p.name, p.role_name});
        status_ = SessionStatus::Running;
    }

    /// Runs until the termination rule holds. Throws Deadlock when the cap
    /// passes first and ProviderUnavailable when the failure budget runs out;
    /// artifacts() stays available either way.
    RunArtifacts run() {
        start();
        if (config_.clock_mode == ClockMode::Simulated) run_simulated();
        else run_realtime();
        return artifacts();
    }

    /// Ends a running session (real-clock runs return from run()).
    void request_stop() {
        {
            std::lock_guard lock(mutex_);
            stop_requested_ = true;
        }
        wake_.notify_all();
        timeline_->interrupt_waiters();
    }

    void end(const std::string& outcome) {
        std::lock_guard lock(mutex_);
        if (status_ == SessionStatus::Ended) return;
        status_ = SessionStatus::Ended;
        outcome_ = outcome;
        ended_at_ = clock_->now_ms();
    }

    /// One observe/decide/act cycle for the named AI agent.
    StepResult step_agent(const std::string& name) {
        require_running();
        auto agent = find_agent(name);
        if (!agent) throw UnknownParticipant("no AI agent named '" + name + "'");
        return step(*agent);
    }

    /// Adds an AI agent to a running session. Its cursor starts at the head,
    /// so it is first prompted on the next event, with the full history.
    Event add_agent_live(AgentSpec spec, std::shared_ptr<Provider> provider) {
        if (spec.id.value.empty()) spec.id = AgentId{spec.name};
        spec.is_human = false;
        validate(spec);
        std::shared_ptr<Agent> agent;
        Event join;
        {
            std::lock_guard lock(mutex_);
            if (status_ == SessionStatus::Ended) throw SessionEnded("session has ended");
            if (status_ != SessionStatus::Running) throw SessionEnded("session is not running");
            for (const auto& p : participants_)
                if (p.name == spec.name || p.id == spec.id) throw DuplicateName("participant '" + spec.name + "' exists");
            participants_.push_back({spec.id, spec.name, spec.role_name, false});
            agent = add_agent_object_locked(spec, std::move(provider));
            join = timeline_->append(spec.id, Join{spec.name, spec.role_name});
            agent->set_cursor(join.seq);
            if (threads_running_) spawn_agent_thread_locked(agent);
        }
        return join;
    }

    Event add_agent_live(AgentSpec spec, const std::string& binding_name) {
        auto it = config_.providers.find(binding_name);
        if (it == config_.providers.end()) throw ConfigError("unknown provider '" + binding_name + "'");
        return add_agent_live(std::move(spec), provider_for(binding_name));
    }

    /// Posts a message on behalf of a human participant.
    Event post_message(const std::string& author_name, const std::string& text) {
        auto id = human_id(author_name);
        require_running();
        return timeline_->append(id, Message{text});
    }

    Event post_typing(const std::string& author_name) {
        auto id = human_id(author_name);
        require_running();
        return timeline_->append(id, TypingStarted{});
    }

    /// Termination conditions other than quiescence: a code file exists (if
    /// required) and every AI agent declined at least none_streak times in a row.
    bool work_settled() const {
        if (config_.termination.require_code_file && !has_code_file()) return false;
        for (const auto& a : agents_snapshot())
            if (a->consecutive_none() < config_.termination.none_streak) return false;
        return true;
    }

    bool termination_holds(TimeMs now) const {
        if (!work_settled()) return false;
        auto last = timeline_->last_event_time();
        return last && now - *last >= seconds_to_ms(config_.termination.quiescence_s);
    }

    bool has_code_file() const {
        for (const auto& e : timeline_->snapshot())
            if (e.is<FileCreated>() && e.as<FileCreated>().file_kind == FileKind::Code) return true;
        return false;
    }

    RunArtifacts artifacts() const {
        RunArtifacts out;
        const auto events = timeline_->snapshot();
        out.timeline_jsonl = to_jsonl(events);
        out.transcript_md = render_markdown(events);
        TokenUsage total;
        auto agents_meta = nlohmann::ordered_json::array();
        for (const auto& a : agents_snapshot()) {
            out.reasoning[a->spec().name] = a->reasoning_jsonl();
            const auto st = a->state();
            const auto usage = a->usage();
            total += usage;
            nlohmann::ordered_json m;
            m["name"] = a->spec().name;
            m["role"] = a->spec().role_name;
            m["decisions"] = st.reasoning_log.size();
            m["consecutive_none"] = st.consecutive_none;
            m["prompt_tokens"] = usage.prompt_tokens;
            m["completion_tokens"] = usage.completion_tokens;
            agents_meta.push_back(std::move(m));
        }
        std::lock_guard lock(mutex_);
        auto& meta = out.meta;
        meta["session_id"] = config_.session_id;
        meta["condition"] = config_.condition_name;
        meta["seed"] = config_.seed;
        meta["clock"] = config_.clock_mode == ClockMode::Simulated ? "simulated" : "real";
        meta["status"] = to_string(status_);
        meta["outcome"] = outcome_;
        meta["started_at_ms"] = started_at_;
        meta["ended_at_ms"] = ended_at_;
        meta["duration_ms"] = ended_at_ ? ended_at_ - started_at_ : 0;
        meta["events"] = events.size();
        meta["human_answers"] = human_ ? human_->answers_given() : 0;
        meta["agents"] = std::move(agents_meta);
        meta["token_usage"] = {{"prompt_tokens", total.prompt_tokens}, {"completion_tokens", total.completion_tokens}};
        return out;
    }

    Timeline& timeline() { return *timeline_; }
    const Timeline& timeline() const { return *timeline_; }
    const SessionConfig& config() const { return config_; }
    const Clock& clock() const { return *clock_; }

    SessionStatus status() const {
        std::lock_guard lock(mutex_);
        return status_;
    }

    std::vector<Participant> participants() const {
        std::lock_guard lock(mutex_);
        return participants_;
    }

    std::optional<AgentState> agent_state(const std::string& name) const {
        auto a = find_agent(name);
        if (!a) return std::nullopt;
        return a->state();
    }

    std::shared_ptr<Agent> find_agent(const std::string& name) const {
        std::lock_guard lock(mutex_);
        for (const auto& a : agents_)
            if (a->spec().name == name) return a;
        return nullptr;
    }

    void set_step_observer(std::function<void(const StepTrace&)> observer) {
        std::lock_guard lock(mutex_);
        observer_ = std::move(observer);
    }

private:
    // ---- construction helpers ----

    std::shared_ptr<Provider> provider_for(const std::string& binding_name) {
        std::lock_guard lock(providers_mutex_);
        auto it = provider_cache_.find(binding_name);
        if (it != provider_cache_.end()) return it->second;
        auto p = factory_(binding_name, config_.providers.at(binding_name));
        provider_cache_[binding_name] = p;
        return p;
    }

    AgentOptions agent_options() const {
        AgentOptions o;
        o.prompt.params = config_.agent_params;
        o.file_params = config_.file_params;
        o.pause_min_ms = seconds_to_ms(config_.pause_low_s);
        o.pause_max_ms = seconds_to_ms(config_.pause_high_s);
        o.code_extensions = config_.code_extensions;
        if (config_.disclose_humans)
            for (const auto& a : config_.agents)
                if (a.is_human) o.prompt.disclosed_humans.push_back(a.name);
        return o;
    }

    static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    void add_agent_object(const AgentSpec& spec, std::shared_ptr<Provider> provider) {
        std::lock_guard lock(mutex_);
        add_agent_object_locked(spec, std::move(provider));
    }

    std::shared_ptr<Agent> add_agent_object_locked(const AgentSpec& spec, std::shared_ptr<Provider> provider) {
        auto agent = std::make_shared<Agent>(spec, std::move(provider), agent_options(),
                                             mix_seed(config_.seed, agents_.size()));
        agents_.push_back(agent);
        return agent;
    }

    std::vector<std::shared_ptr<Agent>> agents_snapshot() const {
        std::lock_guard lock(mutex_);
        return agents_;
    }

    const Participant* find_participant(const std::string& name) const {
        for (const auto& p : participants_)
            if (p.name == name) return &p;
        return nullptr;
    }

    AgentId human_id(const std::string& name) const {
        std::lock_guard lock(mutex_);
        auto p = find_participant(name);
        if (!p) throw UnknownParticipant("no participant named '" + name + "'");
        if (!p->is_human) throw NotHuman("'" + name + "' is not a human participant");
        return p->id;
    }

    void require_running() const {
        std::lock_guard lock(mutex_);
        if (status_ == SessionStatus::Ended) throw SessionEnded("session has ended");
        if (status_ != SessionStatus::Running) throw SessionEnded("session has not started");
    }

    StepResult step(Agent& agent) {
        StepTrace trace{agent.spec().name, agent.cursor(), timeline_->head(), false};
        auto result = agent.step(*timeline_, config_.knowledge);
        trace.prompted = result.prompted;
        std::function<void(const StepTrace&)> observer;
        {
            std::lock_guard lock(mutex_);
            observer = observer_;
        }
        if (observer) observer(trace);
        return result;
    }

    // Counts a provider failure; true once the session budget is exhausted.
    bool note_provider_failure() {
        return ++provider_failures_ > config_.provider_failure_budget;
    }

    std::optional<std::string> human_turn(TimeMs now) {
        if (!human_) return std::nullopt;
        const auto events = timeline_->snapshot();
        auto text = human_->act(events, started_at_, now, work_settled());
        if (!text) return std::nullopt;
        auto e = timeline_->append(human_->id(), Message{*text});
        human_->posted(e.seq);
        return text;
    }

    // ---- simulated clock ----

    void run_simulated() {
        struct Slot {
            std::shared_ptr<Agent> agent;  // null for the scripted human
            TimeMs wake;
        };
        const TimeMs t0 = started_at_;
        const TimeMs cap = seconds_to_ms(config_.cap_s());
        const TimeMs quiet = seconds_to_ms(config_.termination.quiescence_s);
        std::vector<Slot> slots;
        for (const auto& a : agents_snapshot()) slots.push_back({a, t0});
        if (human_) slots.push_back({nullptr, t0 + seconds_to_ms(human_->playbook().poll_s)});
        if (slots.empty()) {
            end("terminated");
            return;
        }

        for (;;) {
            if (stop_requested()) {
                end("stopped");
                return;
            }
            auto next = std::min_element(slots.begin(), slots.end(),
                                         [](const Slot& a, const Slot& b) { return a.wake < b.wake; });
            if (work_settled()) {
                const TimeMs done_at = std::max(clock_->now_ms(), *timeline_->last_event_time() + quiet);
                if (done_at <= next->wake) {
                    virtual_clock_->advance_to(done_at);
                    end("terminated");
                    return;
                }
            }
            if (next->wake - t0 > cap) {
                virtual_clock_->advance_to(t0 + cap);
                end("deadlock");
                throw Deadlock("session did not terminate within " + std::to_string(config_.cap_s()) + " s");
            }
            virtual_clock_->advance_to(next->wake);

            if (!next->agent) {
                human_turn(next->wake);
                next->wake += std::max<TimeMs>(1, seconds_to_ms(human_->playbook().poll_s));
                continue;
            }
            TimeMs pause = seconds_to_ms(config_.pause_low_s);
            try {
                pause = step(*next->agent).pause_ms;
            } catch (const ProviderUnavailable&) {
                if (note_provider_failure()) {
                    end("provider_unavailable");
                    throw;
                }
            }
            next->wake += std::max<TimeMs>(1, pause);
        }
    }

    // ---- real clock ----

    bool stop_requested() const {
        std::lock_guard lock(mutex_);
        return stop_requested_;
    }

    bool running_or_stop() const {
        std::lock_guard lock(mutex_);
        return status_ == SessionStatus::Running && !stop_requested_;
    }

    // Sleeps unless a stop arrives first. Returns false on stop.
    bool sleep_ms(TimeMs ms) {
        std::unique_lock lock(mutex_);
        return !wake_.wait_for(lock, std::chrono::milliseconds(ms),
                               [&] { return stop_requested_ || status_ == SessionStatus::Ended; });
    }

    void spawn_agent_thread_locked(std::shared_ptr<Agent> agent) {
        threads_.emplace_back([this, agent] {
            while (running_or_stop()) {
                TimeMs pause = seconds_to_ms(config_.pause_low_s);
                try {
                    pause = step(*agent).pause_ms;
                } catch (const SessionEnded&) {
                    return;
                } catch (const ProviderUnavailable& ex) {
                    if (note_provider_failure()) {
                        {
                            std::lock_guard lock(mutex_);
                            fatal_error_ = std::string("provider unavailable: ") + ex.what();
                        }
                        request_stop();
                        return;
                    }
                } catch (const Error&) {
                    // scripted providers running dry and similar: keep observing
                }
                if (!sleep_ms(std::max<TimeMs>(1, pause))) return;
            }
        });
    }

    void run_realtime() {
        const TimeMs cap = seconds_to_ms(config_.cap_s());
        {
            std::lock_guard lock(mutex_);
            threads_running_ = true;
            for (const auto& a : agents_) spawn_agent_thread_locked(a);
            if (human_) {
                threads_.emplace_back([this] {
                    const TimeMs poll = std::max<TimeMs>(1, seconds_to_ms(human_->playbook().poll_s));
                    while (running_or_stop()) {
                        if (!sleep_ms(poll)) return;
                        try {
                            human_turn(clock_->now_ms());
                        } catch (const Error&) {
                        }
                    }
                });
            }
        }
        std::string outcome = "terminated";
        for (;;) {
            {
                std::lock_guard lock(mutex_);
                if (stop_requested_) {
                    outcome = fatal_error_.empty() ? "stopped" : "provider_unavailable";
                    break;
                }
            }
            const TimeMs now = clock_->now_ms();
            if (termination_holds(now)) break;
            if (now - started_at_ > cap) {
                outcome = "deadlock";
                break;
            }
            std::unique_lock lock(mutex_);
            wake_.wait_for(lock, std::chrono::milliseconds(50), [&] { return stop_requested_; });
        }
        end(outcome);
        request_stop();
        join_threads();
        if (outcome == "deadlock") throw Deadlock("session did not terminate within the wall-clock cap");
        if (outcome == "provider_unavailable") throw ProviderUnavailable(fatal_error_);
    }

    void join_threads() {
        std::vector<std::jthread> threads;
        {
            std::lock_guard lock(mutex_);
            threads.swap(threads_);
            threads_running_ = false;
        }
        for (auto& t : threads)
            if (t.joinable() && t.get_id() != std::this_thread::get_id()) t.join();
    }

    SessionConfig config_;
    ProviderFactory factory_;
    std::shared_ptr<Clock> clock_;
    std::shared_ptr<VirtualClock> virtual_clock_;
    std::unique_ptr<Timeline> timeline_;

    mutable std::mutex mutex_;
    std::condition_variable wake_;
    SessionStatus status_ = SessionStatus::Created;
    bool stop_requested_ = false;
    bool threads_running_ = false;
    std::string outcome_ = "running";
    TimeMs started_at_ = 0;
    TimeMs ended_at_ = 0;
    std::vector<Participant> participants_;
    std::vector<std::shared_ptr<Agent>> agents_;
    std::vector<std::jthread> threads_;
    std::function<void(const StepTrace&)> observer_;

    std::mutex providers_mutex_;
    std::map<std::string, std::shared_ptr<Provider>> provider_cache_;

    std::optional<ScriptedHuman> human_;
    std::atomic<int> provider_failures_{0};
    std::string fatal_error_;
};

} // namespace teamline
