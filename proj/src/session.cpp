#include "mvopt/session.hpp"

#include <algorithm>
#include <thread>
#include <utility>

#include "mvopt/kv.hpp"
#include "mvopt/quality.hpp"

namespace mvopt::sess {

// ---------------------------------------------------------------- DuplexPipe

struct DuplexPipe::Queue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> lines;
    bool closed = false;

    bool push(std::string line) {
        {
            std::lock_guard<std::mutex> lock(mu);
            if (closed) return false;
            lines.push_back(std::move(line));
        }
        cv.notify_all();
        return true;
    }

    std::optional<std::string> pop() {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return closed || !lines.empty(); });
        if (lines.empty()) return std::nullopt;
        std::string out = std::move(lines.front());
        lines.pop_front();
        return out;
    }

    void close() {
        {
            std::lock_guard<std::mutex> lock(mu);
            closed = true;
        }
        cv.notify_all();
    }
};

class DuplexPipe::End : public LineStream {
public:
    End(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out)
        : in_(std::move(in)), out_(std::move(out)) {}

    std::optional<std::string> read_line() override { return in_->pop(); }
    bool write_line(std::string_view line) override { return out_->push(std::string(line)); }

private:
    std::shared_ptr<Queue> in_;
    std::shared_ptr<Queue> out_;
};

DuplexPipe::DuplexPipe()
    : ab_(std::make_shared<Queue>()),
      ba_(std::make_shared<Queue>()),
      a_(std::make_unique<End>(ba_, ab_)),
      b_(std::make_unique<End>(ab_, ba_)) {}

DuplexPipe::~DuplexPipe() { close(); }

LineStream& DuplexPipe::a() { return *a_; }
LineStream& DuplexPipe::b() { return *b_; }

void DuplexPipe::close() {
    ab_->close();
    ba_->close();
}

// ------------------------------------------------------------------ plumbing

namespace {

using namespace proto;

class Endpoint {
public:
    Endpoint(LineStream& io, SessionReport& report) : io_(io), report_(report) {}

    // Skips ignorable lines; nullopt means the stream ended.
    std::optional<DecodeResult> recv(BlockContext ctx) {
        for (;;) {
            auto line = io_.read_line();
            if (!line) return std::nullopt;
            DecodeResult res = decode(*line, ctx);
            if (std::holds_alternative<std::monostate>(res)) continue;
            return res;
        }
    }

    bool send(const Message& m) {
        if (std::holds_alternative<Err>(m)) ++report_.errors_sent;
        return io_.write_line(encode(m));
    }

    bool send_parse_error(const DecodeError& e) {
        return send(Err{"parse", e.token + ": " + e.detail});
    }

private:
    LineStream& io_;
    SessionReport& report_;
};

// A multiview travels as id/dir/up/fov per view; positions are implied by
// the anchors, so both endpoints reconstruct them from the same scenario.
std::optional<std::string> assemble_multiview(const scene::Scenario& s,
                                              const std::vector<SolutionView>& views, int k,
                                              cam::MultiView& out) {
    out.views.clear();
    for (const auto& sv : views) {
        const scene::ViewerAgent* viewer = s.find_viewer(sv.view_id);
        if (!viewer) return "id " + kv::format_int(sv.view_id) + " is not a viewer agent";
        cam::ViewParams v;
        v.view_id = sv.view_id;
        v.pos = scene::anchor_position(s, *viewer);
        v.view_dir = sv.dir;
        v.view_up = sv.up;
        v.fov_y_deg = sv.fov_deg;
        out.views.push_back(v);
    }
    return cam::check_multiview(out, k);
}

}  // namespace

// ---------------------------------------------------------------- agent side

namespace {

struct DataOutcome {
    enum class Status { Got, Retry, ClosedClean, ClosedBroken } status = Status::Retry;
    scene::Scenario scenario;
    std::string note;
};

DataOutcome await_data(Endpoint& ep, SessionReport& report) {
    for (;;) {
        auto res = ep.recv(BlockContext::None);
        if (!res) return {DataOutcome::Status::ClosedClean, {}, ""};
        if (auto* err = std::get_if<DecodeError>(&*res)) {
            ep.send_parse_error(*err);
            continue;
        }
        Message& m = std::get<Message>(*res);
        if (std::holds_alternative<Bye>(m)) return {DataOutcome::Status::ClosedClean, {}, ""};
        if (std::holds_alternative<Err>(m)) {
            ++report.errors_received;
            return {DataOutcome::Status::Retry, {}, std::get<Err>(m).code};
        }
        if (!std::holds_alternative<DataBegin>(m)) {
            ep.send(Err{"proto", std::string("expected DATA, got ") + message_word(m)});
            continue;
        }

        const DataBegin header = std::get<DataBegin>(m);
        scene::Scenario s;
        s.tick = header.tick;
        std::optional<DecodeError> poison;
        for (;;) {
            auto inner = ep.recv(BlockContext::InData);
            if (!inner)
                return {DataOutcome::Status::ClosedBroken, {}, "stream ended inside a data block"};
            if (auto* err = std::get_if<DecodeError>(&*inner)) {
                if (!poison) poison = *err;
                continue;
            }
            Message& bm = std::get<Message>(*inner);
            if (auto* de = std::get_if<DataEntity>(&bm)) {
                s.entities.push_back(de->entity);
                continue;
            }
            if (auto* dv = std::get_if<DataViewer>(&bm)) {
                s.viewers.push_back(dv->viewer);
                continue;
            }
            if (std::holds_alternative<DataEnd>(bm)) break;
            if (std::holds_alternative<Bye>(bm)) return {DataOutcome::Status::ClosedClean, {}, ""};
            ep.send(Err{"proto", std::string("data block interrupted by ") + message_word(bm)});
            if (std::holds_alternative<Err>(bm)) ++report.errors_received;
            return {DataOutcome::Status::Retry, {}, "interrupted block"};
        }

        if (poison) {
            ep.send_parse_error(*poison);
            return {DataOutcome::Status::Retry, {}, poison->detail};
        }
        if (static_cast<int>(s.entities.size()) != header.n ||
            static_cast<int>(s.viewers.size()) != header.m) {
            ep.send(Err{"parse", "data block line counts do not match the header"});
            return {DataOutcome::Status::Retry, {}, "count mismatch"};
        }
        // The wire carries no extent; the hull of the boxes is equivalent
        // for everything the optimizer computes.
        for (const auto& e : s.entities) s.extent = s.extent.united(e.box);
        if (auto msg = scene::validate_scenario(s)) {
            ep.send(Err{"parse", *msg});
            return {DataOutcome::Status::Retry, {}, *msg};
        }
        return {DataOutcome::Status::Got, std::move(s), ""};
    }
}

}  // namespace

SessionReport run_agent(LineStream& io, const AgentConfig& cfg) {
    SessionReport report;
    Endpoint ep(io, report);

    if (!ep.send(Connect{kProtoVersion, cfg.name})) {
        report.note = "transport failed sending CONNECT";
        return report;
    }

    // Idle -> Connected -> Problemed, tolerating anything out of order.
    Problem problem;
    for (int stage = 0; stage < 2;) {
        auto res = ep.recv(BlockContext::None);
        if (!res) {
            report.note = stage == 0 ? "stream ended before ACK" : "stream ended before PROBLEM";
            return report;
        }
        if (auto* err = std::get_if<DecodeError>(&*res)) {
            ep.send_parse_error(*err);
            continue;
        }
        Message& m = std::get<Message>(*res);
        if (std::holds_alternative<Bye>(m)) {
            report.clean_close = true;
            return report;
        }
        if (std::holds_alternative<Err>(m)) {
            ++report.errors_received;
            if (std::get<Err>(m).code == "ver") report.note = "version rejected";
            continue;
        }
        if (stage == 0 && std::holds_alternative<Ack>(m)) {
            stage = 1;
            continue;
        }
        if (stage == 1 && std::holds_alternative<Problem>(m)) {
            problem = std::get<Problem>(m);
            stage = 2;
            continue;
        }
        ep.send(Err{"proto", std::string(stage == 0 ? "expected ACK, got " : "expected PROBLEM, got ") +
                                 message_word(m)});
    }

    anneal::OptimizeParams op;
    op.sched = cfg.sched;
    op.moves = cfg.moves;
    op.weights = {problem.w1, problem.w2};
    op.rcfg = cfg.rcfg;
    op.vcfg.resolution = problem.resolution;
    op.vcfg.max_view_distance = problem.max_view_distance;
    op.default_fov_deg = cfg.default_fov_deg;

    std::optional<anneal::OptimizeResult> prev;
    rng::Engine warm_eng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    int retries = 0;

    for (;;) {
        if (!ep.send(DataRequest{})) {
            report.note = "transport failed sending REQ";
            return report;
        }
        DataOutcome data = await_data(ep, report);
        if (data.status == DataOutcome::Status::ClosedClean) {
            report.clean_close = true;
            return report;
        }
        if (data.status == DataOutcome::Status::ClosedBroken) {
            report.note = data.note;
            return report;
        }
        if (data.status == DataOutcome::Status::Retry) {
            if (++retries > cfg.data_retry_limit) {
                report.note = "giving up after repeated data failures: " + data.note;
                ep.send(Bye{});
                return report;
            }
            continue;
        }
        retries = 0;

        const scene::Scenario& s = data.scenario;
        anneal::OptimizeResult result;
        try {
            std::optional<cam::MultiView> warm;
            anneal::OptimizeParams tick_op = op;
            if (prev) {
                warm = anneal::warm_start(*prev, s, cfg.rcfg, warm_eng, cfg.default_fov_deg);
                tick_op.t0_scale = cfg.warm_t0_scale;
            }
            result = anneal::optimize(s, problem.k, tick_op, cfg.seed + static_cast<std::uint64_t>(s.tick),
                                      warm);
        } catch (const std::exception& ex) {
            ep.send(Err{"view", std::string("cannot optimize this snapshot: ") + ex.what()});
            if (++retries > cfg.data_retry_limit) {
                report.note = std::string("optimization failed: ") + ex.what();
                ep.send(Bye{});
                return report;
            }
            continue;
        }

        if (cfg.on_result) cfg.on_result(static_cast<int>(s.tick), result);

        bool wrote = ep.send(SolutionBegin{static_cast<int>(s.tick), result.best_q, result.iterations_run});
        for (const auto& v : result.best.views)
            wrote = ep.send(SolutionView{v.view_id, v.view_dir, v.view_up, v.fov_y_deg}) && wrote;
        wrote = ep.send(SolutionEnd{}) && wrote;
        if (!wrote) {
            report.note = "transport failed sending SOLUTION";
            return report;
        }
        report.solutions.push_back(
            {static_cast<int>(s.tick), result.best_q, result.best_q, result.iterations_run, result.best});
        prev = std::move(result);
    }
}

// ------------------------------------------------------------------ app side

namespace {

void serve_data(Endpoint& ep, const scene::Scenario& s) {
    std::vector<const scene::Entity*> ents;
    ents.reserve(s.entities.size());
    for (const auto& e : s.entities) ents.push_back(&e);
    std::sort(ents.begin(), ents.end(),
              [](const scene::Entity* a, const scene::Entity* b) { return a->id < b->id; });
    std::vector<const scene::ViewerAgent*> viewers;
    viewers.reserve(s.viewers.size());
    for (const auto& v : s.viewers) viewers.push_back(&v);
    std::sort(viewers.begin(), viewers.end(),
              [](const scene::ViewerAgent* a, const scene::ViewerAgent* b) {
                  return a->entity_id < b->entity_id;
              });

    ep.send(DataBegin{static_cast<int>(s.tick), static_cast<int>(ents.size()), static_cast<int>(viewers.size())});
    for (const auto* e : ents) ep.send(DataEntity{*e});
    for (const auto* v : viewers) ep.send(DataViewer{*v});
    ep.send(DataEnd{});
}

struct SolutionBlock {
    enum class Status { Got, Refused, ClosedClean, ClosedBroken, Interrupted } status = Status::Refused;
    std::vector<SolutionView> views;
    Message leftover;  // valid when Interrupted
};

SolutionBlock read_solution_block(Endpoint& ep, SessionReport& report) {
    SolutionBlock out;
    std::optional<DecodeError> poison;
    for (;;) {
        auto res = ep.recv(BlockContext::InSolution);
        if (!res) {
            out.status = SolutionBlock::Status::ClosedBroken;
            return out;
        }
        if (auto* err = std::get_if<DecodeError>(&*res)) {
            if (!poison) poison = *err;
            continue;
        }
        Message& m = std::get<Message>(*res);
        if (auto* sv = std::get_if<SolutionView>(&m)) {
            out.views.push_back(*sv);
            continue;
        }
        if (std::holds_alternative<SolutionEnd>(m)) {
            if (poison) {
                ep.send_parse_error(*poison);
                out.status = SolutionBlock::Status::Refused;
            } else {
                out.status = SolutionBlock::Status::Got;
            }
            return out;
        }
        if (std::holds_alternative<Bye>(m)) {
            out.status = SolutionBlock::Status::ClosedClean;
            return out;
        }
        if (std::holds_alternative<Err>(m)) ++report.errors_received;
        ep.send(Err{"proto", std::string("solution block interrupted by ") + message_word(m)});
        out.status = SolutionBlock::Status::Interrupted;
        out.leftover = std::move(m);
        return out;
    }
}

}  // namespace

SessionReport run_app_endpoint(LineStream& io, const std::vector<scene::Scenario>& ticks,
                               const AppConfig& cfg) {
    if (ticks.empty()) throw std::invalid_argument("app endpoint needs at least one tick");
    SessionReport report;
    Endpoint ep(io, report);

    // Await CONNECT and negotiate the version.
    for (;;) {
        auto res = ep.recv(BlockContext::None);
        if (!res) {
            report.note = "stream ended before CONNECT";
            return report;
        }
        if (auto* err = std::get_if<DecodeError>(&*res)) {
            ep.send_parse_error(*err);
            continue;
        }
        Message& m = std::get<Message>(*res);
        if (auto* c = std::get_if<Connect>(&m)) {
            if (c->proto != kProtoVersion) {
                ep.send(Err{"ver", "supported protocol version is " + kv::format_int(kProtoVersion)});
                ep.send(Bye{});
                report.note = "peer offered protocol version " + kv::format_int(c->proto);
                report.clean_close = true;
                return report;
            }
            break;
        }
        if (std::holds_alternative<Bye>(m)) {
            report.clean_close = true;
            return report;
        }
        if (std::holds_alternative<Err>(m)) {
            ++report.errors_received;
            continue;
        }
        ep.send(Err{"proto", std::string("expected CONNECT, got ") + message_word(m)});
    }
    ep.send(Ack{cfg.session_id});
    ep.send(cfg.problem);

    size_t current = 0;
    bool done_all = false;
    std::optional<Message> pending;

    for (;;) {
        std::optional<DecodeResult> res;
        if (pending) {
            res = DecodeResult{std::move(*pending)};
            pending.reset();
        } else {
            res = ep.recv(BlockContext::None);
        }
        if (!res) {
            report.clean_close = done_all;
            if (!done_all) report.note = "stream ended mid-session";
            return report;
        }
        if (auto* err = std::get_if<DecodeError>(&*res)) {
            ep.send_parse_error(*err);
            continue;
        }
        Message& m = std::get<Message>(*res);

        if (std::holds_alternative<Bye>(m)) {
            report.clean_close = true;
            if (!done_all) report.note = "agent left before the last tick";
            return report;
        }
        if (std::holds_alternative<Err>(m)) {
            ++report.errors_received;
            continue;
        }
        if (auto* req = std::get_if<DataRequest>(&m)) {
            if (done_all && !req->tick) {
                ep.send(Bye{});
                report.clean_close = true;
                return report;
            }
            const scene::Scenario* s = nullptr;
            if (req->tick) {
                for (const auto& t : ticks)
                    if (t.tick == *req->tick) {
                        s = &t;
                        break;
                    }
                if (!s) {
                    ep.send(Err{"tick", "no snapshot for tick " + kv::format_int(*req->tick)});
                    continue;
                }
            } else {
                s = &ticks[current];
            }
            serve_data(ep, *s);
            continue;
        }
        if (auto* sb = std::get_if<SolutionBegin>(&m)) {
            SolutionBlock block = read_solution_block(ep, report);
            if (block.status == SolutionBlock::Status::ClosedBroken) {
                report.note = "stream ended inside a solution block";
                return report;
            }
            if (block.status == SolutionBlock::Status::ClosedClean) {
                report.clean_close = true;
                report.note = "agent left before the last tick";
                return report;
            }
            if (block.status == SolutionBlock::Status::Interrupted) {
                pending = std::move(block.leftover);
                continue;
            }
            if (block.status == SolutionBlock::Status::Refused) continue;

            const scene::Scenario& s = ticks[current];
            if (sb->tick != s.tick) {
                ep.send(Err{"tick", "solution answers tick " + kv::format_int(sb->tick) +
                                        ", expected " + kv::format_int(s.tick)});
                continue;
            }
            cam::MultiView mv;
            if (auto msg = assemble_multiview(s, block.views, cfg.problem.k, mv)) {
                ep.send(Err{"view", *msg});
                continue;
            }
            vis::VisibilityConfig vcfg;
            vcfg.resolution = cfg.problem.resolution;
            vcfg.max_view_distance = cfg.problem.max_view_distance;
            const double rechecked =
                qual::total_quality(mv, s, {cfg.problem.w1, cfg.problem.w2}, cfg.rcfg, vcfg).total;
            report.solutions.push_back({sb->tick, sb->q, rechecked, sb->iterations, std::move(mv)});
            if (current + 1 < ticks.size())
                ++current;
            else
                done_all = true;
            continue;
        }
        ep.send(Err{"proto", std::string("unexpected ") + message_word(m)});
    }
}

LoopbackResult run_loopback(const std::vector<scene::Scenario>& ticks, const AppConfig& app_cfg,
                            const AgentConfig& agent_cfg) {
    DuplexPipe pipe;
    LoopbackResult out;
    std::thread agent_thread([&] {
        out.agent = run_agent(pipe.a(), agent_cfg);
        pipe.close();
    });
    try {
        out.app = run_app_endpoint(pipe.b(), ticks, app_cfg);
    } catch (...) {
        pipe.close();
        agent_thread.join();
        throw;
    }
    pipe.close();
    agent_thread.join();
    return out;
}

}  // namespace mvopt::sess
