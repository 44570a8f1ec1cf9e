#include "support.hpp"

#include <teamline/session.hpp>

#include <gtest/gtest.h>

using namespace teamline;
using support::decision;

namespace {

struct FailingProvider : Provider {
    std::atomic<int> calls{0};
    ChatResponse complete(const ChatRequest&) override {
        ++calls;
        throw ProviderUnavailable("down");
    }
};

ProviderBinding script_binding(std::vector<ScriptEntry> script) {
    ProviderBinding b;
    b.script = std::move(script);
    b.fallback = support::kNone;
    return b;
}

SessionConfig with_human(SessionConfig cfg) {
    cfg.agents.push_back(AgentSpec{AgentId{"Benjamin"}, "Benjamin", "Client", "", true});
    return cfg;
}

} // namespace

// ---- configuration ----

TEST(SessionConfig, GoldenConfigLoads) {
    auto cfg = support::golden_config();
    EXPECT_EQ(cfg.agents.size(), 4u);
    EXPECT_TRUE(cfg.agents[3].is_human);
    EXPECT_EQ(cfg.agents[0].persona, assets::kPersonaCeo);
    EXPECT_EQ(cfg.knowledge.base, assets::kKnowledgeControl);
    ASSERT_TRUE(cfg.human_playbook);
    EXPECT_EQ(cfg.human_playbook->requirements_text, assets::kTicTacToeTask);
    EXPECT_EQ(cfg.start_time_ms, 1710527700000);
    EXPECT_EQ(cfg.cap_s(), 2000.0);
}

TEST(SessionConfig, RejectsBrokenDocuments) {
    const auto base = nlohmann::json::parse(support::read_file(support::source("configs/tictactoe_scripted.json")));
    auto broken = [&](auto&& mutate) {
        auto j = base;
        mutate(j);
        EXPECT_THROW(session_config_from_json(j), ConfigError) << j.dump().substr(0, 80);
    };
    broken([](auto& j) { j["agents"][1]["name"] = "Peter"; });
    broken([](auto& j) { j["agents"][0]["provider"] = "nobody"; });
    broken([](auto& j) { j["agents"][0]["persona"] = "asset:no_such_asset"; });
    broken([](auto& j) { j["clock"] = "sundial"; });
    broken([](auto& j) { j["human_playbook"]["human"] = "Peter"; });
    broken([](auto& j) { j["pause_range_s"] = {15, 3}; });
    broken([](auto& j) { j["agents"][0].erase("role"); });
    broken([](auto& j) { j["providers"]["peter"]["type"] = "carrier-pigeon"; });
    broken([](auto& j) { j["agent_params"] = {{"temperature", 3.0}}; });
    EXPECT_THROW(load_session_config("/nonexistent/config.json"), ConfigError);
}

TEST(SessionConfig, KnowledgeWithCollaborativeMove) {
    auto j = nlohmann::json::parse(support::read_file(support::source("configs/tictactoe_scripted.json")));
    j["knowledge"] = {{"base", "asset:knowledge_control"}, {"collaborative_move", "Gives Suggestion"}};
    auto cfg = session_config_from_json(j);
    EXPECT_EQ(cfg.knowledge.rendered(),
              std::string(assets::kKnowledgeControl) +
                  " Use the following collaborative move when interacting with others in the team, as appropriate: "
                  "Gives Suggestion.");
}

// ---- lifecycle ----

TEST(Session, StartAnnouncesParticipantsInConfigOrder) {
    Session s(with_human(support::small_config()));
    s.start();
    const auto ev = s.timeline().snapshot();
    ASSERT_EQ(ev.size(), 4u);
    std::vector<std::string> names;
    for (const auto& e : ev) names.push_back(e.as<Join>().name);
    EXPECT_EQ(names, (std::vector<std::string>{"Peter", "Boshen", "Isabelle", "Benjamin"}));
    EXPECT_EQ(s.status(), SessionStatus::Running);
}

TEST(Session, GoldenRunMatchesFrozenArtifacts) {
    Session s(support::golden_config());
    auto art = s.run();
    const auto golden = support::source("tests/golden/tictactoe_scripted");
    EXPECT_EQ(art.timeline_jsonl, support::read_file(golden / "timeline.jsonl"));
    EXPECT_EQ(art.transcript_md, support::read_file(golden / "transcript.md"));
    EXPECT_EQ(art.meta.dump(2) + "\n", support::read_file(golden / "meta.json"));
    for (const auto& [name, log] : art.reasoning)
        EXPECT_EQ(log, support::read_file(golden / "reasoning" / (name + ".jsonl"))) << name;
    EXPECT_EQ(art.meta["outcome"], "terminated");
}

TEST(Session, SeedChangesTimingOnly) {
    auto a = Session(support::golden_config()).run();
    auto cfg = support::golden_config();
    cfg.seed = 99;
    auto b = Session(cfg).run();
    EXPECT_NE(a.timeline_jsonl, b.timeline_jsonl);
    auto texts = [](const std::string& jsonl) {
        std::vector<std::string> out;
        for (const auto& e : events_from_jsonl(jsonl))
            if (e.is<FileCreated>()) out.push_back(e.as<FileCreated>().filename);
        return out;
    };
    EXPECT_EQ(texts(a.timeline_jsonl), texts(b.timeline_jsonl));
}

TEST(Session, TerminationNeedsCodeFileStreakAndQuiet) {
    Session s(support::golden_config());
    s.run();
    EXPECT_TRUE(s.has_code_file());
    EXPECT_TRUE(s.work_settled());
    for (const auto& p : s.participants()) {
        if (p.is_human) continue;
        EXPECT_GE(s.agent_state(p.name)->consecutive_none, 2) << p.name;
    }
    const auto last = *s.timeline().last_event_time();
    EXPECT_EQ(s.clock().now_ms() - last, 30'000);
    EXPECT_TRUE(s.termination_holds(s.clock().now_ms()));
    EXPECT_FALSE(s.termination_holds(last + 29'999));
}

TEST(Session, DeadlocksWithoutCodeFile) {
    auto cfg = support::small_config();
    cfg.deadlock_cap_s = 200;
    Session s(cfg);
    EXPECT_THROW(s.run(), Deadlock);
    EXPECT_EQ(s.artifacts().meta["outcome"], "deadlock");
    EXPECT_LE(s.clock().now_ms() - cfg.start_time_ms, 200'000);
    EXPECT_EQ(s.status(), SessionStatus::Ended);
}

TEST(Session, MinimalTerminationAfterOneRound) {
    auto cfg = support::small_config();
    cfg.termination.require_code_file = false;
    cfg.termination.none_streak = 1;
    std::atomic<int> calls{0};
    Session s(cfg, [&](const std::string&, const ProviderBinding& b) -> std::shared_ptr<Provider> {
        return std::make_shared<RecordingProvider>(make_scripted_provider(b), [&](const ChatRequest&) { ++calls; });
    });
    auto art = s.run();
    EXPECT_EQ(art.meta["outcome"], "terminated");
    EXPECT_EQ(calls.load(), 3);
    EXPECT_EQ(s.clock().now_ms(), cfg.start_time_ms + 30'000);
}

TEST(Session, ProviderFailureBudget) {
    auto cfg = support::small_config();
    cfg.provider_failure_budget = 3;
    auto failing = std::make_shared<FailingProvider>();
    Session s(cfg, [&](const std::string&, const ProviderBinding&) -> std::shared_ptr<Provider> { return failing; });
    EXPECT_THROW(s.run(), ProviderUnavailable);
    EXPECT_EQ(failing->calls.load(), 4);
    EXPECT_EQ(s.artifacts().meta["outcome"], "provider_unavailable");
}

TEST(Session, HttpBindingNeedsAFactory) {
    auto cfg = support::small_config();
    cfg.providers["Peter"].type = ProviderBinding::Type::Http;
    cfg.providers["Peter"].endpoint = "http://127.0.0.1:1/v1";
    EXPECT_THROW(Session{cfg}, ConfigError);
}

// ---- human participation ----

TEST(Session, PostMessageChecksAuthor) {
    Session s(with_human(support::small_config()));
    EXPECT_THROW(s.post_message("Benjamin", "early"), SessionEnded);
    s.start();
    auto e = s.post_message("Benjamin", "Hello team!");
    EXPECT_EQ(e.author, AgentId{"Benjamin"});
    EXPECT_THROW(s.post_message("Peter", "I am an AI"), NotHuman);
    EXPECT_THROW(s.post_message("Nobody", "hi"), UnknownParticipant);
    EXPECT_THROW(s.post_message("Benjamin", ""), EmptyMessage);
    EXPECT_TRUE(s.post_typing("Benjamin").is<TypingStarted>());
    s.end("stopped");
    EXPECT_THROW(s.post_message("Benjamin", "late"), SessionEnded);
}

TEST(Session, HumanMessageReachesNextPrompt) {
    auto cfg = with_human(support::small_config());
    std::vector<std::string> prompts;
    Session s(cfg, [&](const std::string&, const ProviderBinding& b) -> std::shared_ptr<Provider> {
        return std::make_shared<RecordingProvider>(make_scripted_provider(b),
                                                   [&](const ChatRequest& r) { prompts.push_back(r.flattened()); });
    });
    s.start();
    s.step_agent("Peter");
    s.post_message("Benjamin", "Please use Java.");
    s.step_agent("Peter");
    ASSERT_EQ(prompts.size(), 2u);
    EXPECT_EQ(prompts[0].find("Please use Java."), std::string::npos);
    EXPECT_NE(prompts[1].find("Benjamin (Client): Please use Java."), std::string::npos);
}

TEST(ScriptedHuman, FollowsThePlaybook) {
    auto clock = std::make_shared<VirtualClock>(0);
    Timeline tl(clock);
    AgentId ben{"Benjamin"}, peter{"Peter"}, isa{"Isabelle"};
    tl.append(peter, Join{"Peter", "CEO"});
    tl.append(isa, Join{"Isabelle", "Developer"});
    tl.append(ben, Join{"Benjamin", "Client"});
    HumanPlaybook pb;
    pb.human_name = "Benjamin";
    pb.requirements_text = "Build tic-tac-toe.";
    pb.clarification_answers = {"Java.", "Yes."};
    ScriptedHuman h(pb, ben);
    auto act = [&](bool settled = false) {
        auto text = h.act(tl.snapshot(), 0, clock->now_ms(), settled);
        if (text) h.posted(tl.append(ben, Message{*text}).seq);
        return text;
    };

    clock->advance_to(5'000);
    EXPECT_EQ(act(), std::nullopt);  // greeting waits for the delay
    tl.append(peter, Message{"Hi, Peter here."});
    tl.append(isa, Message{"Isabelle here."});
    clock->advance_to(10'000);
    EXPECT_EQ(act(), "Hello Peter and Isabelle!");
    EXPECT_EQ(act(), std::nullopt);  // nobody answered yet
    tl.append(peter, Message{"Benjamin, what should we build?"});
    EXPECT_EQ(act(), "Build tic-tac-toe.");  // the question is covered by the requirements
    EXPECT_EQ(act(), std::nullopt);
    tl.append(peter, Message{"Benjamin, which language? And Benjamin, names?"});
    EXPECT_EQ(act(), "Java.");
    EXPECT_EQ(act(), std::nullopt) << "speaks only after someone else";
}

TEST(ScriptedHuman, AnswersOneQuestionPerTurnThenNudges) {
    auto clock = std::make_shared<VirtualClock>(0);
    Timeline tl(clock);
    AgentId ben{"Benjamin"}, peter{"Peter"};
    tl.append(peter, Join{"Peter", "CEO"});
    tl.append(ben, Join{"Benjamin", "Client"});
    HumanPlaybook pb;
    pb.human_name = "Benjamin";
    pb.greet_delay_s = 0;
    pb.requirements_text = "Build it.";
    pb.clarification_answers = {"Java.", "Yes."};
    ScriptedHuman h(pb, ben);
    auto act = [&](bool settled = false) {
        auto text = h.act(tl.snapshot(), 0, clock->now_ms(), settled);
        if (text) h.posted(tl.append(ben, Message{*text}).seq);
        return text;
    };
    EXPECT_EQ(act(), "Hello team!");
    tl.append(peter, Message{"Welcome"});
    EXPECT_EQ(act(), "Build it.");
    tl.append(peter, Message{"Benjamin, Java?"});
    tl.append(peter, Message{"Benjamin, names?"});
    EXPECT_EQ(act(), "Java.");
    EXPECT_EQ(act(), std::nullopt);
    tl.append(peter, Message{"Thanks"});
    EXPECT_EQ(act(), "Yes.");
    tl.append(peter, Message{"Working on it"});
    clock->advance_by(44'000);
    EXPECT_EQ(act(), std::nullopt);
    clock->advance_by(1'000);
    EXPECT_EQ(act(true), std::nullopt) << "no nudge once the work is done";
    EXPECT_EQ(act(), "Hello, what is the progress so far?");
    EXPECT_EQ(h.answers_given(), 2u);
}

// ---- live changes ----

TEST(Session, AddAgentLiveSeesFullHistory) {
    auto cfg = with_human(support::small_config());
    Session s(cfg);
    s.start();
    s.post_message("Benjamin", "Requirements here.");
    std::vector<ChatRequest> seen;
    auto qa = std::make_shared<RecordingProvider>(std::make_shared<ScriptedProvider>(std::vector<ScriptEntry>{}, support::kNone),
                                                  [&](const ChatRequest& r) { seen.push_back(r); });
    auto join = s.add_agent_live(AgentSpec{AgentId{"Jeff"}, "Jeff", "QA", "You test code.", false}, qa);
    EXPECT_TRUE(join.is<Join>());
    EXPECT_EQ(join.seq, s.timeline().head());
    EXPECT_EQ(s.agent_state("Jeff")->cursor, join.seq);
    EXPECT_FALSE(s.step_agent("Jeff").prompted);
    s.post_message("Benjamin", "Welcome Jeff.");
    EXPECT_TRUE(s.step_agent("Jeff").prompted);
    ASSERT_EQ(seen.size(), 1u);
    const auto flat = seen[0].flattened();
    EXPECT_NE(flat.find("Peter (CEO): joined the channel."), std::string::npos);
    EXPECT_NE(flat.find("Benjamin (Client): Requirements here."), std::string::npos);
    EXPECT_NE(flat.find("Jeff (QA): joined the channel."), std::string::npos);

    EXPECT_THROW(s.add_agent_live(AgentSpec{AgentId{"x"}, "Peter", "CEO", "p", false}, qa), DuplicateName);
    s.end("stopped");
    EXPECT_THROW(s.add_agent_live(AgentSpec{AgentId{"Ann"}, "Ann", "QA", "p", false}, qa), SessionEnded);
}

TEST(Session, StepObserverSeesCursorAndHead) {
    Session s(support::golden_config());
    std::vector<StepTrace> traces;
    s.set_step_observer([&](const StepTrace& t) { traces.push_back(t); });
    s.run();
    ASSERT_FALSE(traces.empty());
    for (const auto& t : traces) EXPECT_EQ(t.prompted, t.head_before > t.cursor_before);
}

TEST(Session, RealClockRunTerminates) {
    auto cfg = support::small_config();
    cfg.clock_mode = ClockMode::Real;
    cfg.pause_low_s = 0.005;
    cfg.pause_high_s = 0.02;
    cfg.termination.quiescence_s = 0.2;
    cfg.termination.none_streak = 1;
    cfg.deadlock_cap_s = 20;
    cfg.providers["Isabelle"] = script_binding({{"", decision("FILE", "FILENAME: a.py\ncode")}, {"FILENAME: a.py", "print(1)"}});
    Session s(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    auto art = s.run();
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(10));
    EXPECT_EQ(art.meta["outcome"], "terminated");
    EXPECT_TRUE(s.has_code_file());
    const auto ev = s.timeline().snapshot();
    for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_EQ(ev[i].seq, i + 1);
}

TEST(Session, RealClockStopRequest) {
    auto cfg = support::small_config();
    cfg.clock_mode = ClockMode::Real;
    cfg.pause_low_s = 0.01;
    cfg.pause_high_s = 0.02;
    Session s(cfg);
    std::thread stopper([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        s.request_stop();
    });
    s.run();
    stopper.join();
    EXPECT_EQ(s.artifacts().meta["outcome"], "stopped");
}

TEST(RunArtifacts, WritesAllFiles) {
    Session s(support::golden_config());
    auto art = s.run();
    const auto dir = support::temp_dir("artifacts");
    art.write_to(dir);
    EXPECT_EQ(support::read_file(dir / "timeline.jsonl"), art.timeline_jsonl);
    EXPECT_EQ(support::read_file(dir / "transcript.md"), art.transcript_md);
    EXPECT_TRUE(std::filesystem::exists(dir / "reasoning" / "Peter.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "meta.json"));
    std::filesystem::remove_all(dir);
}
