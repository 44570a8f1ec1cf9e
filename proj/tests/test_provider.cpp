#include <teamline/http_provider.hpp>
#include <teamline/provider.hpp>

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

using namespace teamline;

namespace {

ChatRequest request_with(const std::string& text) {
    ChatRequest r;
    r.system_prompt = "sys";
    r.messages.push_back({"Peter (CEO)", text});
    return r;
}

std::string completion(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
        .dump();
}

// Local chat-completions stand-in. `plan` decides the status for each call.
struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> calls{0};
    std::function<int(int)> plan = [](int) { return 200; };
    std::string reply = completion("ACTION: NONE");
    nlohmann::json last_body;
    std::string last_auth;
    std::mutex m;

    StubServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const int n = ++calls;
            {
                std::lock_guard lock(m);
                last_body = nlohmann::json::parse(req.body);
                last_auth = req.get_header_value("Authorization");
            }
            res.status = plan(n);
            res.set_content(res.status == 200 ? reply : std::string("{\"error\":\"busy\"}"), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~StubServer() {
        server.stop();
        thread.join();
    }
    HttpProviderConfig config() const {
        HttpProviderConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
        c.api_key_env = "";
        c.initial_backoff = std::chrono::milliseconds(1);
        c.timeout = std::chrono::seconds(5);
        return c;
    }
};

} // namespace

TEST(ScriptedProvider, ReplaysInOrder) {
    auto p = ScriptedProvider::of({"one", "two"});
    EXPECT_EQ(p->complete(request_with("x")).text, "one");
    EXPECT_EQ(p->complete(request_with("x")).text, "two");
    EXPECT_THROW(p->complete(request_with("x")), ScriptExhausted);
    EXPECT_EQ(p->calls(), 3u);
}

TEST(ScriptedProvider, PredicatesPickFirstMatchingEntry) {
    ScriptedProvider p({{"approved", "go"}, {"", "hello"}}, "idle");
    EXPECT_EQ(p.complete(request_with("nothing yet")).text, "hello");
    EXPECT_EQ(p.complete(request_with("nothing yet")).text, "idle");
    EXPECT_EQ(p.complete(request_with("PRD approved")).text, "go");
    EXPECT_EQ(p.remaining(), 0u);
    EXPECT_EQ(p.complete(request_with("PRD approved")).text, "idle");
}

TEST(ScriptedProvider, ReportsUsage) {
    auto p = ScriptedProvider::of({"abcdefgh"});
    auto r = p->complete(request_with("x"));
    EXPECT_GT(r.usage.prompt_tokens, 0u);
    EXPECT_EQ(r.usage.completion_tokens, 2u);
}

TEST(RecordingProvider, SeesEveryRequest) {
    auto inner = std::make_shared<ScriptedProvider>(std::vector<ScriptEntry>{}, "x");
    std::vector<std::string> seen;
    RecordingProvider rec(inner, [&](const ChatRequest& r) { seen.push_back(r.flattened()); });
    rec.complete(request_with("first"));
    rec.complete(request_with("second"));
    ASSERT_EQ(seen.size(), 2u);
    EXPECT_NE(seen[1].find("Peter (CEO): second"), std::string::npos);
}

TEST(ChatParams, Validation) {
    EXPECT_NO_THROW(validate(ChatParams{0.0, 8, {}}));
    EXPECT_THROW(validate(ChatParams{-0.1, 8, {}}), ConfigError);
    EXPECT_THROW(validate(ChatParams{2.5, 8, {}}), ConfigError);
    EXPECT_THROW(validate(ChatParams{0.2, 0, {}}), ConfigError);
}

TEST(HttpProvider, SplitsEndpoint) {
    EXPECT_EQ(split_url("https://api.example.com/v1/chat/completions"),
              (std::pair<std::string, std::string>{"https://api.example.com", "/v1/chat/completions"}));
    EXPECT_EQ(split_url("http://h:8080").second, "/");
    EXPECT_THROW(split_url("no-scheme"), ConfigError);
}

TEST(HttpProvider, SendsChatRequestAndParsesReply) {
    StubServer stub;
    stub.reply = completion("ACTION: MESSAGE\nCONTENT: hi");
    HttpProvider p(stub.config());
    ChatRequest req = request_with("hello");
    req.params = {0.0, 8, {}};
    auto r = p.complete(req);
    EXPECT_EQ(r.text, "ACTION: MESSAGE\nCONTENT: hi");
    EXPECT_EQ(r.usage.prompt_tokens, 11u);
    EXPECT_EQ(r.usage.completion_tokens, 3u);
    std::lock_guard lock(stub.m);
    EXPECT_EQ(stub.last_body["model"], "gpt-4-turbo");
    EXPECT_EQ(stub.last_body["temperature"], 0.0);
    EXPECT_EQ(stub.last_body["max_tokens"], 8);
    ASSERT_EQ(stub.last_body["messages"].size(), 2u);
    EXPECT_EQ(stub.last_body["messages"][0]["role"], "system");
    EXPECT_EQ(stub.last_body["messages"][1]["content"], "Peter (CEO): hello");
    EXPECT_TRUE(stub.last_auth.empty());
}

TEST(HttpProvider, RetriesTransientFailures) {
    StubServer stub;
    stub.plan = [](int n) { return n == 1 ? 503 : n == 2 ? 429 : 200; };
    HttpProvider p(stub.config());
    EXPECT_EQ(p.complete(request_with("x")).text, "ACTION: NONE");
    EXPECT_EQ(stub.calls.load(), 3);
}

TEST(HttpProvider, GivesUpAfterConfiguredAttempts) {
    StubServer stub;
    stub.plan = [](int) { return 500; };
    auto cfg = stub.config();
    cfg.attempts = 2;
    HttpProvider p(cfg);
    EXPECT_THROW(p.complete(request_with("x")), ProviderUnavailable);
    EXPECT_EQ(stub.calls.load(), 2);
}

TEST(HttpProvider, ClientErrorsAreNotRetried) {
    StubServer stub;
    stub.plan = [](int) { return 400; };
    HttpProvider p(stub.config());
    EXPECT_THROW(p.complete(request_with("x")), ProviderUnavailable);
    EXPECT_EQ(stub.calls.load(), 1);
}

TEST(HttpProvider, UnreachableEndpointIsUnavailable) {
    // bind an ephemeral port, then release it so nothing listens there
    int port = 0;
    {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr), 0);
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        port = ntohs(addr.sin_port);
        ::close(fd);
    }
    HttpProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.api_key_env = "";
    cfg.attempts = 2;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    HttpProvider p(cfg);
    EXPECT_THROW(p.complete(request_with("x")), ProviderUnavailable);
}

TEST(HttpProvider, MalformedPayload) {
    StubServer stub;
    stub.reply = R"({"choices": []})";
    HttpProvider p(stub.config());
    EXPECT_THROW(p.complete(request_with("x")), MalformedResponse);
}

TEST(HttpProvider, BearerKeyFromEnvironment) {
    StubServer stub;
    auto cfg = stub.config();
    cfg.api_key_env = "TEAMLINE_TEST_KEY";
    ::unsetenv("TEAMLINE_TEST_KEY");
    EXPECT_THROW(HttpProvider{cfg}, MissingCredentials);
    ::setenv("TEAMLINE_TEST_KEY", "sk-test", 1);
    HttpProvider p(cfg);
    p.complete(request_with("x"));
    std::lock_guard lock(stub.m);
    EXPECT_EQ(stub.last_auth, "Bearer sk-test");
    ::unsetenv("TEAMLINE_TEST_KEY");
}
