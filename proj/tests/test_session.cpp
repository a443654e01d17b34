#include "doctest.h"

#include <algorithm>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "mvopt/protocol.hpp"
#include "mvopt/quality.hpp"
#include "mvopt/session.hpp"

using namespace mvopt;

namespace {

scene::Scenario small_scene(std::uint64_t seed, int n = 24, int m = 6) {
    scene::GeneratorSpec spec;
    spec.seed = seed;
    spec.n_entities = n;
    spec.m_viewers = m;
    spec.extent = {{0, 0, 0}, {150, 40, 150}};
    return scene::generate_scenario(spec);
}

sess::AgentConfig quick_agent(std::uint64_t seed = 5) {
    sess::AgentConfig cfg;
    cfg.seed = seed;
    cfg.sched = {20, 0.9, 10, 200, 1e-4};
    return cfg;
}

proto::Problem small_problem() {
    proto::Problem p;
    p.k = 2;
    p.resolution = 32;
    return p;
}

// Logs this endpoint's traffic; '<' = read, '>' = written. Only the thread
// running the endpoint touches it, so no locking is needed.
class RecordingStream : public sess::LineStream {
public:
    explicit RecordingStream(sess::LineStream& inner) : inner_(inner) {}

    std::optional<std::string> read_line() override {
        auto line = inner_.read_line();
        if (line) events.push_back({'<', *line});
        return line;
    }
    bool write_line(std::string_view line) override {
        events.push_back({'>', std::string(line)});
        return inner_.write_line(line);
    }

    std::vector<std::pair<char, std::string>> events;

private:
    sess::LineStream& inner_;
};

int first_event(const std::vector<std::pair<char, std::string>>& events, char dir,
                const std::string& word) {
    for (size_t i = 0; i < events.size(); ++i)
        if (events[i].first == dir && events[i].second.rfind(word, 0) == 0)
            return static_cast<int>(i);
    return -1;
}

// Runs the real agent on a worker thread while the test scripts the peer by
// hand over the other pipe end.
struct ScriptedAgent {
    sess::DuplexPipe pipe;
    sess::SessionReport report;
    std::thread worker;

    explicit ScriptedAgent(const sess::AgentConfig& cfg)
        : worker([this, cfg] { report = sess::run_agent(pipe.a(), cfg); }) {}
    ~ScriptedAgent() {
        pipe.close();
        if (worker.joinable()) worker.join();
    }

    sess::LineStream& io() { return pipe.b(); }
    void finish() {
        if (worker.joinable()) worker.join();
    }
};

struct ScriptedApp {
    sess::DuplexPipe pipe;
    sess::SessionReport report;
    std::thread worker;

    ScriptedApp(std::vector<scene::Scenario> ticks, const sess::AppConfig& cfg)
        : worker([this, ticks = std::move(ticks), cfg] {
              report = sess::run_app_endpoint(pipe.a(), ticks, cfg);
          }) {}
    ~ScriptedApp() {
        pipe.close();
        if (worker.joinable()) worker.join();
    }

    sess::LineStream& io() { return pipe.b(); }
    void finish() {
        if (worker.joinable()) worker.join();
    }
};

proto::Message read_message(sess::LineStream& io, proto::BlockContext ctx) {
    auto line = io.read_line();
    REQUIRE_MESSAGE(line.has_value(), "stream ended while a message was expected");
    auto res = proto::decode(*line, ctx);
    if (const auto* err = std::get_if<proto::DecodeError>(&res))
        FAIL(*line, " -> ", err->token, ": ", err->detail);
    REQUIRE(std::holds_alternative<proto::Message>(res));
    return std::get<proto::Message>(res);
}

void expect_err(sess::LineStream& io, const std::string& code) {
    const auto m = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::Err>(m));
    CHECK(std::get<proto::Err>(m).code == code);
}

void expect_req(sess::LineStream& io) {
    const auto m = read_message(io, proto::BlockContext::None);
    CHECK(std::holds_alternative<proto::DataRequest>(m));
}

// Serves one snapshot the way the application would, ENT then VIEWER in id
// order, optionally smuggling extra raw lines in before the terminator.
void send_data_block(sess::LineStream& io, const scene::Scenario& s,
                     const std::vector<std::string>& extra = {}, int extra_in_count = 0) {
    io.write_line(proto::encode(proto::DataBegin{static_cast<int>(s.tick),
                                                 static_cast<int>(s.entities.size()) + extra_in_count,
                                                 static_cast<int>(s.viewers.size())}));
    for (const auto& e : s.entities) io.write_line(proto::encode(proto::DataEntity{e}));
    for (const auto& raw : extra) io.write_line(raw);
    for (const auto& v : s.viewers) io.write_line(proto::encode(proto::DataViewer{v}));
    io.write_line("END");
}

// Reads SOLUTION .. END off the agent and hands back the block.
std::vector<proto::SolutionView> read_solution_block(sess::LineStream& io, int expect_tick) {
    const auto head = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::SolutionBegin>(head));
    CHECK(std::get<proto::SolutionBegin>(head).tick == expect_tick);
    std::vector<proto::SolutionView> views;
    for (;;) {
        const auto m = read_message(io, proto::BlockContext::InSolution);
        if (std::holds_alternative<proto::SolutionEnd>(m)) return views;
        REQUIRE(std::holds_alternative<proto::SolutionView>(m));
        views.push_back(std::get<proto::SolutionView>(m));
    }
}

}  // namespace

TEST_CASE("duplex pipe delivers lines in order and drains after close") {
    sess::DuplexPipe pipe;
    CHECK(pipe.a().write_line("one"));
    CHECK(pipe.a().write_line("two"));
    CHECK(pipe.b().write_line("reply"));

    CHECK(pipe.b().read_line() == "one");
    CHECK(pipe.a().read_line() == "reply");

    pipe.close();
    CHECK(pipe.b().read_line() == "two");  // queued before the close
    CHECK_FALSE(pipe.b().read_line().has_value());
    CHECK_FALSE(pipe.a().read_line().has_value());
    CHECK_FALSE(pipe.a().write_line("late"));
}

TEST_CASE("loopback session optimizes every tick and closes cleanly") {
    const auto t0 = small_scene(42);
    const auto t1 = scene::advance_tick(t0, scene::DynamicsScript{});
    const std::vector<scene::Scenario> ticks = {t0, t1};

    sess::AppConfig app_cfg;
    app_cfg.problem = small_problem();
    const auto run = sess::run_loopback(ticks, app_cfg, quick_agent());

    CHECK(run.agent.clean_close);
    CHECK(run.app.clean_close);
    CHECK(run.agent.note.empty());
    CHECK(run.app.note.empty());
    CHECK(run.agent.errors_sent == 0);
    CHECK(run.app.errors_sent == 0);

    REQUIRE(run.app.solutions.size() == 2);
    REQUIRE(run.agent.solutions.size() == 2);
    for (size_t i = 0; i < 2; ++i) {
        const auto& applied = run.app.solutions[i];
        CHECK(applied.tick == static_cast<int>(i));
        CHECK(applied.views.views.size() == 2);
        // The claimed score must survive the wire round trip and an
        // independent recheck against the application's own scenario.
        CHECK(applied.q_claimed == applied.q_rechecked);
        CHECK(applied.q_claimed == run.agent.solutions[i].q_claimed);
        CHECK(applied.views == run.agent.solutions[i].views);
        CHECK(applied.q_rechecked > 0.0);
    }

    SUBCASE("a second identical run reproduces the session bit for bit") {
        const auto rerun = sess::run_loopback(ticks, app_cfg, quick_agent());
        REQUIRE(rerun.app.solutions.size() == 2);
        for (size_t i = 0; i < 2; ++i) {
            CHECK(rerun.app.solutions[i].q_claimed == run.app.solutions[i].q_claimed);
            CHECK(rerun.app.solutions[i].views == run.app.solutions[i].views);
            CHECK(rerun.app.solutions[i].iterations == run.app.solutions[i].iterations);
        }
    }
}

TEST_CASE("transcript follows the handshake order") {
    const std::vector<scene::Scenario> ticks = {small_scene(7)};
    sess::AppConfig app_cfg;
    app_cfg.problem = small_problem();

    auto run_recorded = [&] {
        sess::DuplexPipe pipe;
        RecordingStream rec(pipe.a());
        sess::SessionReport agent_report;
        std::thread worker([&] {
            agent_report = sess::run_agent(rec, quick_agent());
            pipe.close();
        });
        sess::run_app_endpoint(pipe.b(), ticks, app_cfg);
        pipe.close();
        worker.join();
        CHECK(agent_report.clean_close);
        return rec.events;
    };

    const auto events = run_recorded();
    const int connect = first_event(events, '>', "CONNECT");
    const int ack = first_event(events, '<', "ACK");
    const int problem = first_event(events, '<', "PROBLEM");
    const int req = first_event(events, '>', "REQ");
    const int data = first_event(events, '<', "DATA");
    const int solution = first_event(events, '>', "SOLUTION");
    const int bye = first_event(events, '<', "BYE");

    CHECK(connect == 0);
    CHECK(connect < ack);
    CHECK(ack < problem);
    CHECK(problem < req);
    CHECK(req < data);
    CHECK(data < solution);
    CHECK(solution < bye);
    CHECK(bye == static_cast<int>(events.size()) - 1);
    CHECK(first_event(events, '>', "ERR") == -1);
    CHECK(first_event(events, '<', "ERR") == -1);

    SUBCASE("the byte stream itself is reproducible") {
        CHECK(run_recorded() == events);
    }
}

TEST_CASE("agent rebuffs an out-of-order problem and recovers") {
    const auto s = small_scene(11);
    ScriptedAgent agent(quick_agent());
    auto& io = agent.io();

    const auto hello = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::Connect>(hello));
    CHECK(std::get<proto::Connect>(hello).proto == proto::kProtoVersion);

    io.write_line(proto::encode(small_problem()));  // before ACK
    expect_err(io, "proto");
    io.write_line("ACK session=9");
    io.write_line(proto::encode(small_problem()));

    expect_req(io);
    send_data_block(io, s);
    const auto views = read_solution_block(io, 0);
    CHECK(views.size() == 2);
    for (const auto& v : views) CHECK(s.find_viewer(v.view_id) != nullptr);

    expect_req(io);
    io.write_line("BYE");
    agent.finish();

    CHECK(agent.report.clean_close);
    CHECK(agent.report.errors_sent == 1);
    CHECK(agent.report.solutions.size() == 1);
}

TEST_CASE("agent refuses a poisoned data block atomically and retries") {
    const auto s = small_scene(13);
    const std::vector<std::string> poison = {
        "ENT id=9001 kind=Building min=0,0,0 max=1,1,1 fire=2 buried=0",
        "ENT id=9002 kind=Building min=0,0,0 max=-1,1,1 fire=0 buried=0",
    };

    ScriptedAgent agent(quick_agent());
    auto& io = agent.io();
    read_message(io, proto::BlockContext::None);  // CONNECT
    io.write_line("ACK session=1");
    io.write_line(proto::encode(small_problem()));

    expect_req(io);
    send_data_block(io, s, poison, static_cast<int>(poison.size()));
    // Two bad lines, one refusal: the block is judged only at its END.
    expect_err(io, "parse");
    expect_req(io);
    send_data_block(io, s);
    const auto views = read_solution_block(io, 0);
    CHECK(views.size() == 2);

    expect_req(io);
    io.write_line("BYE");
    agent.finish();

    CHECK(agent.report.clean_close);
    CHECK(agent.report.errors_sent == 1);
    CHECK(agent.report.solutions.size() == 1);
}

TEST_CASE("agent gives up after repeated bad blocks") {
    const auto s = small_scene(13);
    const std::vector<std::string> poison = {
        "ENT id=9001 kind=Building min=0,0,0 max=1,1,1 fire=2 buried=0"};

    sess::AgentConfig cfg = quick_agent();
    cfg.data_retry_limit = 3;
    ScriptedAgent agent(cfg);
    auto& io = agent.io();
    read_message(io, proto::BlockContext::None);  // CONNECT
    io.write_line("ACK session=1");
    io.write_line(proto::encode(small_problem()));

    for (int round = 0; round < 4; ++round) {
        expect_req(io);
        send_data_block(io, s, poison, 1);
        expect_err(io, "parse");
    }
    const auto m = read_message(io, proto::BlockContext::None);
    CHECK(std::holds_alternative<proto::Bye>(m));
    agent.finish();

    CHECK_FALSE(agent.report.clean_close);
    CHECK(agent.report.note.find("giving up") != std::string::npos);
    CHECK(agent.report.solutions.empty());
}

TEST_CASE("agent never emits a solution before the problem arrives") {
    sess::DuplexPipe pipe;
    RecordingStream rec(pipe.a());
    sess::SessionReport report;
    std::thread worker([&] { report = sess::run_agent(rec, quick_agent()); });

    auto& io = pipe.b();
    REQUIRE(io.read_line().has_value());  // CONNECT
    io.write_line("FROBNICATE a=1");
    io.write_line("DATA tick=0 n=0 m=0");
    io.write_line("END");
    io.write_line("SOLUTION tick=0 q=1 iters=1");
    io.write_line("VIEW id=1 dir=0,0,-1 up=0,1,0 fov=60");
    io.write_line("REQ");
    io.write_line("ERR code=hmm msg=noise");
    pipe.close();
    worker.join();

    CHECK(report.solutions.empty());
    CHECK_FALSE(report.clean_close);
    CHECK(report.note == "stream ended before ACK");
    for (const auto& [dir, line] : rec.events) {
        if (dir != '>') continue;
        const bool allowed = line.rfind("CONNECT", 0) == 0 || line.rfind("ERR", 0) == 0;
        CHECK_MESSAGE(allowed, "unexpected agent line: ", line);
    }
}

TEST_CASE("agent reports a version rejection") {
    ScriptedAgent agent(quick_agent());
    auto& io = agent.io();
    read_message(io, proto::BlockContext::None);  // CONNECT
    io.write_line("ERR code=ver msg=supported protocol version is 0");
    io.write_line("BYE");
    agent.finish();

    CHECK(agent.report.clean_close);
    CHECK(agent.report.note == "version rejected");
    CHECK(agent.report.errors_received == 1);
    CHECK(agent.report.solutions.empty());
}

TEST_CASE("app endpoint serves ticks and guards solutions") {
    const auto t0 = small_scene(21);
    sess::AppConfig cfg;
    cfg.session_id = 5;
    cfg.problem = small_problem();

    ScriptedApp app({t0}, cfg);
    auto& io = app.io();
    io.write_line("CONNECT proto=1 name=tester");

    const auto ack = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::Ack>(ack));
    CHECK(std::get<proto::Ack>(ack).session == 5);
    const auto problem = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::Problem>(problem));
    CHECK(std::get<proto::Problem>(problem) == cfg.problem);

    SUBCASE("unknown ticks draw an error, the session continues") {
        io.write_line("REQ tick=9");
        expect_err(io, "tick");
    }

    io.write_line("REQ");
    const auto head = read_message(io, proto::BlockContext::None);
    REQUIRE(std::holds_alternative<proto::DataBegin>(head));
    const auto& db = std::get<proto::DataBegin>(head);
    CHECK(db.tick == 0);
    CHECK(db.n == static_cast<int>(t0.entities.size()));
    CHECK(db.m == static_cast<int>(t0.viewers.size()));
    std::vector<int> viewer_ids;
    int last_entity_id = -1;
    for (int i = 0; i < db.n; ++i) {
        const auto m = read_message(io, proto::BlockContext::InData);
        REQUIRE(std::holds_alternative<proto::DataEntity>(m));
        const int id = std::get<proto::DataEntity>(m).entity.id;
        CHECK(id > last_entity_id);  // served in id order
        last_entity_id = id;
    }
    for (int i = 0; i < db.m; ++i) {
        const auto m = read_message(io, proto::BlockContext::InData);
        REQUIRE(std::holds_alternative<proto::DataViewer>(m));
        viewer_ids.push_back(std::get<proto::DataViewer>(m).viewer.entity_id);
    }
    CHECK(std::is_sorted(viewer_ids.begin(), viewer_ids.end()));
    CHECK(std::holds_alternative<proto::DataEnd>(read_message(io, proto::BlockContext::InData)));
    REQUIRE(viewer_ids.size() >= 2);
    const int va = viewer_ids[0];
    const int vb = viewer_ids[1];

    SUBCASE("solutions for the wrong tick are refused") {
        io.write_line("SOLUTION tick=7 q=1 iters=1");
        io.write_line("VIEW id=" + std::to_string(va) + " dir=0,0,-1 up=0,1,0 fov=60");
        io.write_line("VIEW id=" + std::to_string(vb) + " dir=1,0,0 up=0,1,0 fov=60");
        io.write_line("END");
        expect_err(io, "tick");
    }
    SUBCASE("a non-viewer camera id poisons the whole solution") {
        io.write_line("SOLUTION tick=0 q=1 iters=1");
        io.write_line("VIEW id=999999 dir=0,0,-1 up=0,1,0 fov=60");
        io.write_line("VIEW id=" + std::to_string(vb) + " dir=1,0,0 up=0,1,0 fov=60");
        io.write_line("END");
        expect_err(io, "view");
    }
    SUBCASE("a short solution is refused") {
        io.write_line("SOLUTION tick=0 q=1 iters=1");
        io.write_line("VIEW id=" + std::to_string(va) + " dir=0,0,-1 up=0,1,0 fov=60");
        io.write_line("END");
        expect_err(io, "view");
    }
    SUBCASE("an interrupted solution block is dropped, the interrupter survives") {
        io.write_line("SOLUTION tick=0 q=1 iters=1");
        io.write_line("REQ");
        expect_err(io, "proto");
        const auto again = read_message(io, proto::BlockContext::None);
        REQUIRE(std::holds_alternative<proto::DataBegin>(again));
        for (int i = 0; i < db.n + db.m + 1; ++i) REQUIRE(io.read_line().has_value());
    }

    // Whatever was refused above, the well-formed solution still lands.
    io.write_line("SOLUTION tick=0 q=1.25 iters=9");
    io.write_line("VIEW id=" + std::to_string(va) + " dir=0,0,-1 up=0,1,0 fov=60");
    io.write_line("VIEW id=" + std::to_string(vb) + " dir=1,0,0 up=0,1,0 fov=60");
    io.write_line("END");
    io.write_line("REQ");
    const auto bye = read_message(io, proto::BlockContext::None);
    CHECK(std::holds_alternative<proto::Bye>(bye));
    app.finish();

    CHECK(app.report.clean_close);
    REQUIRE(app.report.solutions.size() == 1);
    const auto& rec = app.report.solutions[0];
    CHECK(rec.tick == 0);
    CHECK(rec.q_claimed == 1.25);
    CHECK(rec.iterations == 9);

    cam::MultiView expected;
    for (const int id : {va, vb}) {
        cam::ViewParams v;
        v.view_id = id;
        v.pos = scene::anchor_position(t0, *t0.find_viewer(id));
        v.view_dir = id == va ? Vec3{0, 0, -1} : Vec3{1, 0, 0};
        v.view_up = {0, 1, 0};
        v.fov_y_deg = 60.0;
        expected.views.push_back(v);
    }
    CHECK(rec.views == expected);
    vis::VisibilityConfig vcfg;
    vcfg.resolution = cfg.problem.resolution;
    vcfg.max_view_distance = cfg.problem.max_view_distance;
    const double fresh =
        qual::total_quality(expected, t0, {cfg.problem.w1, cfg.problem.w2}, cfg.rcfg, vcfg).total;
    CHECK(rec.q_rechecked == fresh);
}

TEST_CASE("app endpoint rejects unknown protocol versions") {
    sess::AppConfig cfg;
    cfg.problem = small_problem();
    ScriptedApp app({small_scene(3)}, cfg);
    auto& io = app.io();

    io.write_line("CONNECT proto=2 name=tester");
    expect_err(io, "ver");
    CHECK(std::holds_alternative<proto::Bye>(read_message(io, proto::BlockContext::None)));
    app.finish();

    CHECK(app.report.clean_close);
    CHECK(app.report.note.find("2") != std::string::npos);
    CHECK(app.report.solutions.empty());
}
