// teamline: run team sessions, serve them over HTTP, code and compare transcripts.

#include <teamline.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using namespace teamline;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kProvider = 3, kEnvironment = 4, kDeadlock = 5 };

struct Failure {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Failure{kUsage, "cannot read " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    if (auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text)) throw Failure{kEnvironment, "cannot write " + path};
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-") std::cout << text;
    else write_file(out_path, text);
}

// ---- run ----

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool scripted = false;
    std::string out;
};

int cmd_run(const RunArgs& a) {
    auto cfg = load_session_config(a.config);
    if (a.seed) cfg.seed = *a.seed;
    const std::string out = a.out.empty() ? "runs/" + cfg.session_id : a.out;
    Session session(cfg, make_provider_factory(a.scripted));
    int code = kOk;
    try {
        session.run();
    } catch (const Deadlock& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        code = kDeadlock;
    } catch (const ProviderUnavailable& ex) {
        std::cerr << "teamline: provider unavailable: " << ex.what() << '\n';
        code = kProvider;
    }
    const auto art = session.artifacts();
    try {
        art.write_to(out);
    } catch (const std::exception& ex) {
        throw Failure{kEnvironment, ex.what()};
    }
    std::cout << "session " << cfg.session_id << ": " << art.meta["outcome"].get<std::string>() << ", "
              << art.meta["events"].get<std::size_t>() << " events, artifacts in " << out << '\n';
    return code;
}

// ---- serve ----

struct ServeArgs {
    std::string config;
    std::string bind;
    std::string out;
    bool scripted = false;
};

std::pair<std::string, int> parse_bind(const std::string& bind) {
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Failure{kUsage, "--bind must be host:port"};
    try {
        return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
    } catch (const std::exception&) {
        throw Failure{kUsage, "--bind must be host:port"};
    }
}

int cmd_serve(const ServeArgs& a) {
    auto cfg = load_session_config(a.config);
    cfg.clock_mode = ClockMode::Real;
    std::string bind = a.bind;
    if (bind.empty()) {
        const char* env = std::getenv("TEAMLINE_BIND");
        bind = env ? env : "127.0.0.1:8080";
    }
    auto [host, port] = parse_bind(bind);
    const std::string out = a.out.empty() ? "runs/" + cfg.session_id : a.out;

    // Signals are taken by a dedicated thread; every other thread inherits the mask.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    auto factory = make_provider_factory(a.scripted);
    auto session = std::make_shared<Session>(cfg, factory);
    Gateway gateway(gateway_options_from_env(factory));
    if (!gateway.bind(host, port)) throw Failure{kEnvironment, "cannot bind " + bind};
    gateway.host(session, true);

    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        gateway.server().stop();
    });
    std::cout << "serving session " << cfg.session_id << " on http://" << host << ':' << port << std::endl;
    gateway.listen();
    gateway.stop();
    // wakes the waiter if listen() returned without a signal; otherwise stays pending and blocked
    kill(getpid(), SIGTERM);
    waiter.join();
    session->end("stopped");
    try {
        session->artifacts().write_to(out);
    } catch (const std::exception& ex) {
        throw Failure{kEnvironment, ex.what()};
    }
    std::cout << "artifacts in " << out << std::endl;
    return kOk;
}

// ---- code ----

struct CodeArgs {
    std::string transcript;
    std::string provider;
    std::string out;
    std::string rater = "llm";
};

int cmd_code(const CodeArgs& a) {
    const auto turns = parse_markdown(read_file(a.transcript));
    std::vector<CodedTurn> codes;
    if (!turns.empty()) {
        nlohmann::json binding_json;
        try {
            binding_json = nlohmann::json::parse(read_file(a.provider));
        } catch (const nlohmann::json::parse_error& ex) {
            throw Failure{kUsage, a.provider + ": " + ex.what()};
        }
        auto binding = provider_binding_from_json(binding_json);
        auto provider = make_provider_factory(false)("classifier", binding);
        ClassifyOptions opts;
        opts.rater = a.rater;
        for (std::size_t i = 0; i < turns.size(); ++i) codes.push_back(classify_turn(turns, i, *provider, opts));
    }
    emit(a.out, to_codes_csv(codes));
    return kOk;
}

// ---- agree ----

int cmd_agree(const std::string& a, const std::string& b, bool json) {
    auto ra = codes_from_csv(read_file(a), "a");
    auto rb = codes_from_csv(read_file(b), "b");
    const auto rep = cohens_kappa(ra, rb);
    std::cout << (json ? to_json(rep).dump(2) + "\n" : to_text(rep));
    return kOk;
}

// ---- report ----

struct ReportArgs {
    std::vector<std::string> runs;
    std::string control;
    bool include_none = false;
    bool json = false;
};

int cmd_report(const ReportArgs& a) {
    std::vector<CodedRun> runs;
    std::vector<std::string> labels;
    for (const auto& spec : a.runs) {
        std::vector<std::string> parts;
        std::stringstream ss(spec);
        for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
        if (parts.size() < 2 || parts.size() > 3 || parts[0].empty())
            throw Failure{kUsage, "--run expects NAME,codes.csv[,transcript.md]"};
        CodedRun run{parts[0], codes_from_csv(read_file(parts[1]), "llm")};
        if (parts.size() == 3) {
            const auto turns = parse_markdown(read_file(parts[2]));
            for (auto& t : run.turns)
                if (t.role.empty() && t.turn_index < turns.size()) t.role = turns[t.turn_index].role;
        }
        labels.push_back(parts[0] + " (" + parts[1] + ")");
        runs.push_back(std::move(run));
    }
    const auto reports = aggregate(runs, {a.include_none});
    const ConditionReport* control = nullptr;
    for (const auto& r : reports)
        if (r.condition_name == a.control) control = &r;
    if (!control) throw Failure{kUsage, "no run belongs to control condition '" + a.control + "'"};

    nlohmann::ordered_json j;
    std::ostringstream text;
    j["conditions"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        j["conditions"].push_back(to_json(r));
        text << to_text(r) << '\n';
    }
    j["diffs"] = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        if (&r == control) continue;
        const auto d = diff_vs_control(r, *control);
        j["diffs"].push_back(to_json(d));
        text << to_text(d) << '\n';
    }
    j["sequences"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto strip = sequence_strip(runs[i].turns);
        auto sj = to_json(strip);
        sj["run"] = labels[i];
        j["sequences"].push_back(std::move(sj));
        text << labels[i] << ' ' << to_text(strip);
    }
    std::cout << (a.json ? j.dump(2) + "\n" : text.str());
    return kOk;
}

// ---- score / compare ----

struct ScoreArgs {
    std::string rubric = "default";
    std::string system;
    std::string run_id;
    std::string marks;
    std::string out;
};

int cmd_score(const ScoreArgs& a) {
    Rubric rubric = default_rubric();
    if (a.rubric != "default") {
        try {
            rubric = rubric_from_json(nlohmann::json::parse(read_file(a.rubric)));
        } catch (const nlohmann::json::exception& ex) {
            throw Failure{kUsage, a.rubric + ": " + ex.what()};
        }
    }
    const auto card = score(a.system, a.run_id, marks_from_csv(read_file(a.marks)), rubric);
    emit(a.out, to_json(card).dump(2) + "\n");
    return kOk;
}

int cmd_compare(const std::vector<std::string>& cards_paths, bool as_csv) {
    std::vector<ScoreCard> cards;
    for (const auto& p : cards_paths) {
        try {
            cards.push_back(scorecard_from_json(nlohmann::json::parse(read_file(p))));
        } catch (const nlohmann::json::parse_error& ex) {
            throw Failure{kUsage, p + ": " + ex.what()};
        }
    }
    const auto table = compare(cards);
    std::cout << (as_csv ? to_csv(table) : to_text(table));
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"teamline: multi-agent team sessions and transcript analysis"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run a session and write its artifacts");
    run->add_option("config", run_args.config, "Session config (JSON)")->required();
    run->add_option("--seed", run_args.seed, "Override the config seed");
    run->add_flag("--scripted", run_args.scripted, "Use scripted providers only (no network)");
    run->add_option("--out", run_args.out, "Output directory (default runs/<session_id>)");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Serve a live session over HTTP");
    serve->add_option("config", serve_args.config, "Session config (JSON)")->required();
    serve->add_option("--bind", serve_args.bind, "host:port (default $TEAMLINE_BIND or 127.0.0.1:8080)");
    serve->add_option("--out", serve_args.out, "Where to export artifacts on shutdown");
    serve->add_flag("--scripted", serve_args.scripted, "Use scripted providers only");

    CodeArgs code_args;
    auto* code = app.add_subcommand("code", "Parse a transcript and classify every turn");
    code->add_option("transcript", code_args.transcript, "Transcript markdown")->required();
    code->add_option("--provider", code_args.provider, "Provider binding (JSON)")->required();
    code->add_option("--out", code_args.out, "codes.csv (default stdout)");
    code->add_option("--rater", code_args.rater, "Rater label written to the csv");

    std::string agree_a, agree_b;
    bool agree_json = false;
    auto* agree = app.add_subcommand("agree", "Agreement and Cohen's kappa between two code files");
    agree->add_option("codes_a", agree_a)->required();
    agree->add_option("codes_b", agree_b)->required();
    agree->add_flag("--json", agree_json);

    ReportArgs report_args;
    auto* report = app.add_subcommand("report", "Category counts per condition and changes against a control");
    report->add_option("--run", report_args.runs, "NAME,codes.csv[,transcript.md] (repeatable)")->required();
    report->add_option("--control", report_args.control, "Control condition name")->required();
    report->add_flag("--include-none", report_args.include_none, "Count None of the Above in proportions and diffs");
    report->add_flag("--json", report_args.json);

    ScoreArgs score_args;
    auto* scorecmd = app.add_subcommand("score", "Score one system run against the rubric");
    scorecmd->add_option("marks", score_args.marks, "criterion,mark[,note] csv")->required();
    scorecmd->add_option("--rubric", score_args.rubric, "'default' or a rubric JSON file");
    scorecmd->add_option("--system", score_args.system)->required();
    scorecmd->add_option("--run-id", score_args.run_id)->required();
    scorecmd->add_option("--out", score_args.out, "card.json (default stdout)");

    std::vector<std::string> cards;
    bool compare_csv = false;
    auto* comparecmd = app.add_subcommand("compare", "Side-by-side table of score cards");
    comparecmd->add_option("cards", cards)->required();
    comparecmd->add_flag("--csv", compare_csv);

    std::string asset_name;
    auto* asset = app.add_subcommand("asset", "Print a bundled text asset (no name: list them)");
    asset->add_option("name", asset_name);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return cmd_run(run_args);
        if (*serve) return cmd_serve(serve_args);
        if (*code) return cmd_code(code_args);
        if (*agree) return cmd_agree(agree_a, agree_b, agree_json);
        if (*report) return cmd_report(report_args);
        if (*scorecmd) return cmd_score(score_args);
        if (*comparecmd) return cmd_compare(cards, compare_csv);
        if (*asset) {
            if (asset_name.empty()) {
                for (const auto& [name, _] : assets::registry()) std::cout << name << '\n';
            } else {
                std::cout << assets::resolve("asset:" + asset_name) << '\n';
            }
            return kOk;
        }
    } catch (const Failure& f) {
        std::cerr << "teamline: " << f.message << '\n';
        return f.code;
    } catch (const MissingCredentials& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        return kProvider;
    } catch (const ProviderUnavailable& ex) {
        std::cerr << "teamline: provider unavailable: " << ex.what() << '\n';
        return kProvider;
    } catch (const MalformedResponse& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        return kProvider;
    } catch (const ScriptExhausted& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        return kProvider;
    } catch (const Error& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        return kUsage;
    } catch (const std::exception& ex) {
        std::cerr << "teamline: " << ex.what() << '\n';
        return kEnvironment;
    }
    return kUsage;
}
