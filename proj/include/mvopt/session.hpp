#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvopt/annealer.hpp"
#include "mvopt/protocol.hpp"

// The two protocol endpoints. The optimization agent runs detached from the
// application that owns the scene: it learns everything through the byte
// stream, so the same agent code drives an in-memory loopback pipe, a TCP
// socket, or a scripted test transport.

namespace mvopt::sess {

// Blocking, ordered, reliable line transport. read_line strips the trailing
// LF (and a CR before it) and returns nullopt at end of stream; write_line
// appends LF and returns false once the peer is gone.
class LineStream {
public:
    virtual ~LineStream() = default;
    virtual std::optional<std::string> read_line() = 0;
    virtual bool write_line(std::string_view line) = 0;
};

// Two cross-wired in-memory queues; endpoint a() writes what b() reads and
// vice versa. close() wakes all blocked readers with end-of-stream.
class DuplexPipe {
public:
    DuplexPipe();
    ~DuplexPipe();

    LineStream& a();
    LineStream& b();
    void close();

private:
    struct Queue;
    class End;
    std::shared_ptr<Queue> ab_;
    std::shared_ptr<Queue> ba_;
    std::unique_ptr<End> a_;
    std::unique_ptr<End> b_;
};

struct SolutionRecord {
    int tick = 0;
    double q_claimed = 0.0;    // from the SOLUTION header
    double q_rechecked = 0.0;  // recomputed by the application
    int iterations = 0;
    cam::MultiView views;
};

struct SessionReport {
    std::vector<SolutionRecord> solutions;  // applied (app) or sent (agent)
    int errors_sent = 0;
    int errors_received = 0;
    bool clean_close = false;  // BYE handshake or orderly end of stream
    std::string note;          // first failure detail, empty when clean
};

struct AgentConfig {
    std::string name = "sa-agent";
    std::uint64_t seed = 1;
    anneal::AnnealSchedule sched;
    anneal::MoveConfig moves;
    scene::RelevanceConfig rcfg;
    double default_fov_deg = 60.0;
    double warm_t0_scale = 0.3;  // reheat factor for warm-started ticks
    int data_retry_limit = 3;    // REQ retries after a bad or refused block
    // Called after each completed tick, before the solution is sent.
    std::function<void(int tick, const anneal::OptimizeResult&)> on_result;
};

// Connects, waits for Ack + Problem, then pulls Data snapshots and answers
// each with an optimized Solution until the application says Bye or the
// stream ends. Ticks after the first are warm-started from the previous
// best. Out-of-order inbound messages draw Err{proto} without changing
// state; malformed lines draw Err{parse}.
SessionReport run_agent(LineStream& io, const AgentConfig& cfg);

struct AppConfig {
    int session_id = 1;
    proto::Problem problem;  // served to the agent verbatim
    scene::RelevanceConfig rcfg;
};

// Serves `ticks` in order over one session: answers Connect with Ack and
// Problem, serves Data blocks (current tick for a bare REQ, else the
// requested tick), validates and applies Solutions, advances to the next
// tick after each applied solution, and answers the REQ that follows the
// last solution with Bye. Solutions are rechecked against the scenario;
// invalid ones draw Err{view}/Err{tick} and are discarded atomically.
SessionReport run_app_endpoint(LineStream& io, const std::vector<scene::Scenario>& ticks,
                               const AppConfig& cfg);

struct LoopbackResult {
    SessionReport agent;
    SessionReport app;
};

// Runs both endpoints over a DuplexPipe, the agent on a worker thread.
LoopbackResult run_loopback(const std::vector<scene::Scenario>& ticks, const AppConfig& app_cfg,
                            const AgentConfig& agent_cfg);

}  // namespace mvopt::sess
