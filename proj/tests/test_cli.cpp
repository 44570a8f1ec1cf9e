#include "support.hpp"

#include <teamline/coding.hpp>

#include <httplib.h>

#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fcntl.h>

namespace fs = std::filesystem;

extern char** environ;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome cli(const std::string& args) {
    const std::string cmd = std::string(TEAMLINE_CLI) + " " + args + " 2>/dev/null";
    Outcome o;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return o;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) o.out.append(buf, n);
    const int status = ::pclose(p);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

int free_port() {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    ::close(fd);
    return ntohs(addr.sin_port);
}

nlohmann::json golden_json() {
    return nlohmann::json::parse(support::read_file(support::source("configs/tictactoe_scripted.json")));
}

fs::path write_json(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
    support::write_file(dir / name, j.dump(2));
    return dir / name;
}

} // namespace

TEST(Cli, RunReproducesGoldenArtifacts) {
    auto dir = support::temp_dir("cli-run");
    auto r = cli("run " + q(support::source("configs/tictactoe_scripted.json")) + " --scripted --out " + q(dir / "out"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("session tictactoe-scripted: terminated"), std::string::npos) << r.out;
    const fs::path golden = support::source("tests/golden/tictactoe_scripted");
    for (const auto* f : {"timeline.jsonl", "transcript.md", "meta.json", "reasoning/Peter.jsonl",
                          "reasoning/Boshen.jsonl", "reasoning/Isabelle.jsonl"})
        EXPECT_EQ(support::read_file(dir / "out" / f), support::read_file(golden / f)) << f;
    fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitTwo) {
    auto dir = support::temp_dir("cli-bad");
    support::write_file(dir / "broken.json", "{ not json");
    EXPECT_EQ(cli("run " + q(dir / "broken.json") + " --out " + q(dir / "o")).code, 2);
    EXPECT_EQ(cli("run " + q(dir / "missing.json")).code, 2);
    EXPECT_EQ(cli("frobnicate").code, 2);
    EXPECT_EQ(cli("").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, MissingCredentialsExitThree) {
    auto dir = support::temp_dir("cli-key");
    auto cfg = golden_json();
    for (auto& [name, b] : cfg["providers"].items()) {
        b["type"] = "http";
        b["endpoint"] = "http://127.0.0.1:9/v1/chat/completions";
        b["api_key_env"] = "TEAMLINE_TEST_UNSET_KEY_8213";
    }
    auto path = write_json(dir, "live.json", cfg);
    ::unsetenv("TEAMLINE_TEST_UNSET_KEY_8213");
    EXPECT_EQ(cli("run " + q(path) + " --out " + q(dir / "o")).code, 3);
    // the same config runs offline when forced scripted
    EXPECT_EQ(cli("run " + q(path) + " --scripted --out " + q(dir / "o2")).code, 0);
    fs::remove_all(dir);
}

TEST(Cli, DeadlockExitsFive) {
    auto dir = support::temp_dir("cli-dead");
    nlohmann::json cfg = {
        {"session_id", "stuck"},
        {"deadlock_cap_s", 120},
        {"knowledge", "Be kind."},
        {"agents", {{{"name", "A"}, {"role", "CEO"}, {"persona", "p"}, {"provider", "idle"}},
                    {{"name", "B"}, {"role", "Developer"}, {"persona", "p"}, {"provider", "idle"}}}},
        {"providers", {{"idle", {{"type", "scripted"}, {"fallback", support::kNone}}}}},
        {"termination", {{"require_code_file", true}, {"none_streak", 1}, {"quiescence_s", 30}}}};
    auto path = write_json(dir, "stuck.json", cfg);
    auto r = cli("run " + q(path) + " --out " + q(dir / "o"));
    EXPECT_EQ(r.code, 5);
    EXPECT_TRUE(fs::exists(dir / "o" / "meta.json"));
    auto meta = nlohmann::json::parse(support::read_file(dir / "o" / "meta.json"));
    EXPECT_EQ(meta["outcome"], "deadlock");
    fs::remove_all(dir);
}

TEST(Cli, CodeAgreeAndReport) {
    auto dir = support::temp_dir("cli-code");
    auto binding = write_json(dir, "classifier.json",
                              {{"type", "scripted"}, {"script", {"4", " 13."}}, {"fallback", "banana"}});
    auto r = cli("code " + q(support::data("reference_transcript.md")) + " --provider " + q(binding) + " --out " +
                 q(dir / "codes.csv"));
    ASSERT_EQ(r.code, 0);
    auto rows = teamline::codes_from_csv(support::read_file(dir / "codes.csv"));
    ASSERT_EQ(rows.size(), 12u);
    EXPECT_EQ(rows[0].category, 4);
    EXPECT_EQ(rows[1].category, 13);
    EXPECT_EQ(rows[2].category, 13);  // unparseable replies fall back to None of the Above
    EXPECT_EQ(rows[0].rater, "llm");

    support::write_file(dir / "empty.md", "");
    r = cli("code " + q(dir / "empty.md") + " --provider " + q(binding));
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.out, "turn_index,category,rater\n");

    support::write_file(dir / "a.csv", "turn_index,category\n0,1\n1,1\n2,2\n3,3\n");
    support::write_file(dir / "b.csv", "turn_index,category\n0,1\n1,2\n2,2\n3,3\n");
    support::write_file(dir / "short.csv", "turn_index,category\n0,1\n");
    r = cli("agree " + q(dir / "a.csv") + " " + q(dir / "b.csv") + " --json");
    ASSERT_EQ(r.code, 0);
    auto j = nlohmann::json::parse(r.out);
    EXPECT_DOUBLE_EQ(j["percent_agreement"].get<double>(), 0.75);
    EXPECT_NEAR(j["kappa"].get<double>(), 0.636364, 1e-6);
    r = cli("agree " + q(dir / "a.csv") + " " + q(dir / "a.csv") + " --json");
    EXPECT_DOUBLE_EQ(nlohmann::json::parse(r.out)["kappa"].get<double>(), 1.0);
    EXPECT_EQ(cli("agree " + q(dir / "a.csv") + " " + q(dir / "short.csv")).code, 2);

    // control: four solidarity turns, treatment: seven
    std::string control = "turn_index,category\n", treat = "turn_index,category\n";
    for (int i = 0; i < 4; ++i) control += std::to_string(i) + ",1\n";
    for (int i = 0; i < 7; ++i) treat += std::to_string(i) + ",1\n";
    support::write_file(dir / "control.csv", control);
    support::write_file(dir / "treat.csv", treat);
    const auto runs = " --run control," + dir.string() + "/control.csv --run move," + dir.string() + "/treat.csv";
    r = cli("report" + runs + " --control control");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("+75.0%"), std::string::npos) << r.out;
    r = cli("report" + runs + " --control control --json");
    auto rep = nlohmann::json::parse(r.out);
    EXPECT_DOUBLE_EQ(rep["diffs"][0]["rows"][0]["percent_diff"].get<double>(), 75.0);
    EXPECT_EQ(cli("report" + runs + " --control nobody").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, ScoreAndCompare) {
    auto dir = support::temp_dir("cli-score");
    std::string marks = "criterion,mark,note\n";
    for (int i = 1; i <= 17; ++i) marks += "F" + std::to_string(i) + "," + (i <= 10 ? "pass" : "fail") + ",\n";
    for (int i = 1; i <= 3; ++i) marks += "Q" + std::to_string(i) + ",pass,\n";
    support::write_file(dir / "marks.csv", marks);
    auto r = cli("score " + q(dir / "marks.csv") + " --system teamline --run-id r1 --out " + q(dir / "a.json"));
    ASSERT_EQ(r.code, 0);
    r = cli("score " + q(dir / "marks.csv") + " --system baseline --run-id r1 --out " + q(dir / "b.json"));
    ASSERT_EQ(r.code, 0);
    r = cli("compare " + q(dir / "a.json") + " " + q(dir / "b.json") + " --csv");
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 23);

    support::write_file(dir / "short.csv", "criterion,mark\nF1,pass\n");
    EXPECT_EQ(cli("score " + q(dir / "short.csv") + " --system s --run-id r").code, 2);
    fs::remove_all(dir);
}

TEST(Cli, AssetsAreListedAndPrinted) {
    auto r = cli("asset");
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("tictactoe_task"), std::string::npos);
    EXPECT_EQ(cli("asset no_such_asset").code, 2);
}

TEST(Cli, ServeRefusesOccupiedPort) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
    ASSERT_EQ(::listen(fd, 4), 0);
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    const int port = ntohs(addr.sin_port);
    auto dir = support::temp_dir("cli-busy");
    auto r = cli("serve " + q(support::source("configs/tictactoe_scripted.json")) + " --scripted --bind 127.0.0.1:" +
                 std::to_string(port) + " --out " + q(dir));
    EXPECT_EQ(r.code, 4);
    ::close(fd);
    fs::remove_all(dir);
}

TEST(Cli, ServeStopsOnSigintAndExports) {
    auto dir = support::temp_dir("cli-serve");
    const int port = free_port();
    const std::string bind = "127.0.0.1:" + std::to_string(port);
    const std::string cfg = support::source("configs/tictactoe_scripted.json").string();
    const std::string out = (dir / "out").string();
    std::vector<std::string> args = {TEAMLINE_CLI, "serve", cfg, "--scripted", "--bind", bind, "--out", out};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, "/dev/null", O_WRONLY, 0);
    pid_t pid = 0;
    ASSERT_EQ(posix_spawn(&pid, TEAMLINE_CLI, &actions, nullptr, argv.data(), environ), 0);
    posix_spawn_file_actions_destroy(&actions);

    httplib::Client c("127.0.0.1", port);
    bool up = false;
    for (int i = 0; i < 200 && !up; ++i) {
        auto res = c.Get("/sessions/tictactoe-scripted");
        up = res && res->status == 200;
        if (!up) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    EXPECT_TRUE(up);
    if (up) {
        auto posted = c.Post("/sessions/tictactoe-scripted/messages", R"({"author":"Benjamin","text":"Hi all"})",
                             "application/json");
        ASSERT_TRUE(posted);
        EXPECT_EQ(posted->status, 201);
    }
    ::kill(pid, SIGINT);
    int status = 0;
    ASSERT_EQ(::waitpid(pid, &status, 0), pid);
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
    auto meta = nlohmann::json::parse(support::read_file(dir / "out" / "meta.json"));
    EXPECT_EQ(meta["outcome"], "stopped");
    EXPECT_EQ(meta["clock"], "real");
    EXPECT_NE(support::read_file(dir / "out" / "transcript.md").find("**Benjamin (Client)**"), std::string::npos);
    EXPECT_NE(support::read_file(dir / "out" / "transcript.md").find("\nHi all\n"), std::string::npos);
    fs::remove_all(dir);
}
