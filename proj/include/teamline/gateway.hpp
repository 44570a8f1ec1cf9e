#pragma once

#include "provider_factory.hpp"
#include "session.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace teamline {

inline constexpr const char* kAdminTokenEnv = "TEAMLINE_ADMIN_TOKEN";

struct GatewayOptions {
    /// Bearer token for admin endpoints. Empty disables them (always 401).
    std::string admin_token;
    /// Used for sessions created through POST /sessions and for agents added by binding name.
    ProviderFactory provider_factory = scripted_provider_factory();
    /// Sessions created through POST /sessions run on the wall clock.
    bool force_real_clock = true;
    /// Upper bound for the long-poll wait on GET /events.
    std::chrono::milliseconds max_wait{30000};
};

inline GatewayOptions gateway_options_from_env(ProviderFactory factory) {
    GatewayOptions o;
    if (const char* t = std::getenv(kAdminTokenEnv)) o.admin_token = t;
    o.provider_factory = std::move(factory);
    return o;
}

/// HTTP front for one or more live sessions.
///
///   GET  /sessions/:id                       roster and head
///   GET  /sessions/:id/events?since=&wait_ms=  events with seq > since, one JSON per line
///   GET  /sessions/:id/stream                server-sent events, resumable via Last-Event-ID
///   POST /sessions/:id/messages              {"author","text"} from a human participant
///   POST /sessions/:id/typing                {"author"}
///   GET  /sessions/:id/agents                participants (kind only with admin token)
///   POST /sessions/:id/agents                admin: add an agent mid-run
///   GET  /sessions/:id/agents/:name/reasoning  admin: reasoning log
///   GET  /sessions/:id/report                activity summary
///   POST /sessions                           create and run a session from a config document
class Gateway {
public:
    explicit Gateway(GatewayOptions options = {}) : options_(std::move(options)) {
        // no SO_REUSEPORT: a port held by another server must fail to bind
        server_.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        routes();
    }

    ~Gateway() { stop(); }

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Serves an existing session. With `run`, Session::run() is driven on a
    /// background thread; otherwise the caller drives it.
    void host(std::shared_ptr<Session> session, bool run = false) {
        const auto id = session->config().session_id;
        std::lock_guard lock(mutex_);
        if (hosted_.count(id)) throw DuplicateName("session '" + id + "' is already hosted");
        auto h = std::make_shared<Hosted>();
        h->session = std::move(session);
        if (run) start_runner(*h);
        hosted_[id] = std::move(h);
    }

    std::shared_ptr<Session> session(const std::string& id) const {
        auto h = find(id);
        return h ? h->session : nullptr;
    }

    /// Error that ended a background run, if any.
    std::optional<std::string> run_error(const std::string& id) const {
        auto h = find(id);
        if (!h) return std::nullopt;
        std::lock_guard lock(h->mutex);
        return h->error;
    }

    /// Binds; returns false when the address is unavailable.
    bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }

    /// Binds to a free port and returns it (-1 on failure).
    int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }

    /// Blocks serving requests until stop().
    bool listen() { return server_.listen_after_bind(); }

    /// Runs listen() on a background thread and waits until it accepts.
    void listen_in_background() {
        listener_ = std::jthread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    /// Stops serving and ends background sessions.
    void stop() {
        stopping_ = true;
        server_.stop();
        if (listener_.joinable()) listener_.join();
        std::map<std::string, std::shared_ptr<Hosted>> hosted;
        {
            std::lock_guard lock(mutex_);
            hosted = hosted_;
        }
        for (auto& [id, h] : hosted) {
            h->session->request_stop();
            h->session->timeline().interrupt_waiters();
            if (h->runner.joinable()) h->runner.join();
        }
    }

    /// Waits for a background run to finish.
    void wait(const std::string& id) {
        auto h = find(id);
        if (h && h->runner.joinable()) h->runner.join();
    }

    httplib::Server& server() { return server_; }

private:
    struct Hosted {
        std::shared_ptr<Session> session;
        std::jthread runner;
        mutable std::mutex mutex;
        std::optional<std::string> error;
    };

    using Json = nlohmann::ordered_json;

    static void send_json(httplib::Response& res, int status, const Json& body) {
        res.status = status;
        res.set_content(body.dump() + "\n", "application/json");
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        send_json(res, status, Json{{"error", message}});
    }

    static std::string event_line(const Event& e) { return to_json(e).dump() + "\n"; }

    void start_runner(Hosted& h) {
        h.runner = std::jthread([&h] {
            try {
                h.session->run();
            } catch (const std::exception& ex) {
                std::lock_guard lock(h.mutex);
                h.error = ex.what();
            }
        });
    }

    std::shared_ptr<Hosted> find(const std::string& id) const {
        std::lock_guard lock(mutex_);
        auto it = hosted_.find(id);
        return it == hosted_.end() ? nullptr : it->second;
    }

    bool is_admin(const httplib::Request& req) const {
        if (options_.admin_token.empty()) return false;
        return req.get_header_value("Authorization") == "Bearer " + options_.admin_token;
    }

    // Resolves :id or answers 404.
    std::shared_ptr<Session> session_or_404(const httplib::Request& req, httplib::Response& res) const {
        auto s = session(req.path_params.at("id"));
        if (!s) send_error(res, 404, "unknown session");
        return s;
    }

    static std::optional<nlohmann::json> body_or_400(const httplib::Request& req, httplib::Response& res) {
        try {
            auto j = nlohmann::json::parse(req.body);
            if (!j.is_object()) throw std::runtime_error("object expected");
            return j;
        } catch (const std::exception&) {
            send_error(res, 400, "request body must be a JSON object");
            return std::nullopt;
        }
    }

    static Seq seq_param(const httplib::Request& req, const char* name, Seq fallback) {
        if (!req.has_param(name)) return fallback;
        return static_cast<Seq>(std::stoull(req.get_param_value(name)));
    }

    Json roster(const Session& s, bool admin) const {
        Json people = Json::array();
        for (const auto& p : s.participants()) {
            Json j{{"name", p.name}, {"role_name", p.role_name}};
            if (admin) j["participant_kind"] = p.is_human ? "human" : "ai";
            people.push_back(std::move(j));
        }
        return Json{{"session_id", s.config().session_id},
                    {"status", s.status() == SessionStatus::Ended ? "ended" : "running"},
                    {"head", s.timeline().head()},
                    {"participants", std::move(people)}};
    }

    Json report(const Session& s, bool admin) const {
        const auto events = s.timeline().snapshot();
        std::map<AgentId, std::string> name_of;
        for (const auto& e : events)
            if (e.is<Join>()) name_of[e.author] = e.as<Join>().name;
        Json by_kind = Json::object();
        std::map<std::string, std::size_t> messages;
        Json files = Json::array();
        for (const auto& e : events) {
            const std::string k = kind_name(e.kind);
            by_kind[k] = by_kind.value(k, 0) + 1;
            if (e.is<Message>()) ++messages[name_of.count(e.author) ? name_of[e.author] : e.author.value];
            if (e.is<FileCreated>()) {
                const auto& f = e.as<FileCreated>();
                files.push_back({{"seq", e.seq}, {"filename", f.filename}, {"file_kind", to_string(f.file_kind)}});
            }
        }
        Json out = roster(s, false);
        out.erase("participants");
        out["events_by_kind"] = std::move(by_kind);
        out["messages_by_participant"] = messages;
        out["files"] = std::move(files);
        out["transcript_md"] = render_markdown(events);
        if (admin) out["meta"] = s.artifacts().meta;
        return out;
    }

    void routes() {
        server_.Get("/sessions/:id", [this](const httplib::Request& req, httplib::Response& res) {
            if (auto s = session_or_404(req, res)) send_json(res, 200, roster(*s, is_admin(req)));
        });

        server_.Get("/sessions/:id/events", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            Seq since = 0;
            long long wait = 0;
            try {
                since = seq_param(req, "since", 0);
                if (req.has_param("wait_ms")) wait = std::stoll(req.get_param_value("wait_ms"));
            } catch (const std::exception&) {
                send_error(res, 400, "since and wait_ms must be integers");
                return;
            }
            auto& tl = s->timeline();
            if (since > tl.head()) {
                send_error(res, 400, "since is beyond the head of the timeline");
                return;
            }
            if (wait > 0 && since == tl.head()) {
                auto ms = std::min(std::chrono::milliseconds(wait), options_.max_wait);
                tl.wait_beyond(since, ms);
            }
            std::string body;
            for (const auto& e : tl.read_since(since)) body += event_line(e);
            res.status = 200;
            res.set_content(body, "application/x-ndjson");
        });

        server_.Get("/sessions/:id/stream", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            Seq start = 0;
            try {
                start = req.has_header("Last-Event-ID") ? std::stoull(req.get_header_value("Last-Event-ID"))
                                                        : seq_param(req, "since", 0);
            } catch (const std::exception&) {
                send_error(res, 400, "bad resume position");
                return;
            }
            start = std::min(start, s->timeline().head());
            auto cursor = std::make_shared<Seq>(start);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider(
                "text/event-stream", [this, s, cursor](std::size_t, httplib::DataSink& sink) {
                    auto& tl = s->timeline();
                    const auto batch = tl.read_since(*cursor);
                    for (const auto& e : batch) {
                        std::string frame = "id: " + std::to_string(e.seq) + "\nevent: " + kind_name(e.kind) +
                                            "\ndata: " + to_json(e).dump() + "\n\n";
                        if (!sink.write(frame.data(), frame.size())) return false;
                        *cursor = e.seq;
                    }
                    if (stopping_ || s->status() == SessionStatus::Ended) {
                        sink.done();
                        return true;
                    }
                    if (batch.empty() && !tl.wait_beyond(*cursor, std::chrono::milliseconds(1000))) {
                        static const std::string ping = ": keepalive\n\n";
                        if (!sink.write(ping.data(), ping.size())) return false;
                    }
                    return !stopping_;
                });
        });

        server_.Post("/sessions/:id/messages", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            auto body = body_or_400(req, res);
            if (!body) return;
            const auto author = body->value("author", std::string{});
            const auto text = body->value("text", std::string{});
            try {
                send_json(res, 201, to_json(s->post_message(author, text)));
            } catch (const UnknownParticipant& ex) {
                send_error(res, 403, ex.what());
            } catch (const NotHuman& ex) {
                send_error(res, 403, ex.what());
            } catch (const SessionEnded& ex) {
                send_error(res, 409, ex.what());
            } catch (const EmptyMessage& ex) {
                send_error(res, 422, ex.what());
            }
        });

        server_.Post("/sessions/:id/typing", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            auto body = body_or_400(req, res);
            if (!body) return;
            try {
                send_json(res, 201, to_json(s->post_typing(body->value("author", std::string{}))));
            } catch (const UnknownParticipant& ex) {
                send_error(res, 403, ex.what());
            } catch (const NotHuman& ex) {
                send_error(res, 403, ex.what());
            } catch (const SessionEnded& ex) {
                send_error(res, 409, ex.what());
            }
        });

        server_.Get("/sessions/:id/agents", [this](const httplib::Request& req, httplib::Response& res) {
            if (auto s = session_or_404(req, res)) send_json(res, 200, roster(*s, is_admin(req))["participants"]);
        });

        server_.Post("/sessions/:id/agents", [this](const httplib::Request& req, httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            if (!is_admin(req)) {
                send_error(res, 401, "admin token required");
                return;
            }
            auto body = body_or_400(req, res);
            if (!body) return;
            try {
                AgentSpec spec;
                spec.name = body->value("name", std::string{});
                spec.role_name = body->value("role", body->value("role_name", std::string{}));
                spec.id = AgentId{body->value("id", spec.name)};
                if (body->contains("persona")) spec.persona = config_detail::text_of(body->at("persona"));
                Event join;
                if (body->contains("script")) {
                    auto binding = config_detail::binding_of(*body);
                    join = s->add_agent_live(spec, make_scripted_provider(binding));
                } else {
                    join = s->add_agent_live(spec, body->value("provider", std::string{"default"}));
                }
                send_json(res, 201, to_json(join));
            } catch (const DuplicateName& ex) {
                send_error(res, 409, ex.what());
            } catch (const SessionEnded& ex) {
                send_error(res, 409, ex.what());
            } catch (const ConfigError& ex) {
                send_error(res, 422, ex.what());
            } catch (const nlohmann::json::exception& ex) {
                send_error(res, 400, ex.what());
            }
        });

        server_.Get("/sessions/:id/agents/:name/reasoning", [this](const httplib::Request& req,
                                                                    httplib::Response& res) {
            auto s = session_or_404(req, res);
            if (!s) return;
            if (!is_admin(req)) {
                send_error(res, 401, "admin token required");
                return;
            }
            auto agent = s->find_agent(req.path_params.at("name"));
            if (!agent) {
                send_error(res, 404, "unknown agent");
                return;
            }
            res.status = 200;
            res.set_content(agent->reasoning_jsonl(), "application/x-ndjson");
        });

        server_.Get("/sessions/:id/report", [this](const httplib::Request& req, httplib::Response& res) {
            if (auto s = session_or_404(req, res)) send_json(res, 200, report(*s, is_admin(req)));
        });

        server_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            auto body = body_or_400(req, res);
            if (!body) return;
            try {
                auto cfg = session_config_from_json(*body);
                if (options_.force_real_clock) cfg.clock_mode = ClockMode::Real;
                auto s = std::make_shared<Session>(std::move(cfg), options_.provider_factory);
                host(s, true);
                send_json(res, 201, roster(*s, false));
            } catch (const DuplicateName& ex) {
                send_error(res, 409, ex.what());
            } catch (const Error& ex) {
                send_error(res, 422, ex.what());
            }
        });
    }

    GatewayOptions options_;
    httplib::Server server_;
    std::jthread listener_;
    std::atomic<bool> stopping_{false};
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Hosted>> hosted_;
};

} // namespace teamline
