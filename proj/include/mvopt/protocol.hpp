#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "mvopt/camera.hpp"
#include "mvopt/scene.hpp"

// Line-oriented wire protocol between the visualization application and a
// detached optimization agent. One message per LF-terminated line, in the
// shared `WORD key=value` grammar; large payloads (scene data, solutions)
// travel as multi-line blocks bracketed by a header line and `END`.
// Decoding is total: arbitrary bytes yield a message or an error value,
// never an exception, and unknown keys on known messages are ignored so
// the vocabulary can grow without breaking old peers.

namespace mvopt::proto {

inline constexpr int kProtoVersion = 1;

struct Connect {
    int proto = kProtoVersion;
    std::string name;  // token
    bool operator==(const Connect&) const = default;
};

struct Ack {
    int session = 0;
    bool operator==(const Ack&) const = default;
};

struct Problem {
    int k = 4;
    double w1 = 0.8;
    double w2 = 0.2;
    int resolution = 128;
    double max_view_distance = 300.0;
    int tick_period_ms = 0;
    bool operator==(const Problem&) const = default;
};

struct DataRequest {
    std::optional<int> tick;  // absent = current tick
    bool operator==(const DataRequest&) const = default;
};

struct DataBegin {
    int tick = 0;
    int n = 0;  // entity lines to follow
    int m = 0;  // viewer lines to follow
    bool operator==(const DataBegin&) const = default;
};

struct DataEntity {
    scene::Entity entity;
    bool operator==(const DataEntity&) const = default;
};

struct DataViewer {
    scene::ViewerAgent viewer;
    bool operator==(const DataViewer&) const = default;
};

struct DataEnd {
    bool operator==(const DataEnd&) const = default;
};

struct SolutionBegin {
    int tick = 0;
    double q = 0.0;
    int iterations = 0;
    bool operator==(const SolutionBegin&) const = default;
};

struct SolutionView {
    int view_id = 0;  // viewer entity the camera is anchored to
    Vec3 dir;
    Vec3 up;
    double fov_deg = 60.0;
    bool operator==(const SolutionView&) const = default;
};

struct SolutionEnd {
    bool operator==(const SolutionEnd&) const = default;
};

struct Err {
    std::string code;  // token, e.g. proto / ver / parse / tick / view
    std::string text;  // free text to end of line
    bool operator==(const Err&) const = default;
};

struct Bye {
    bool operator==(const Bye&) const = default;
};

using Message = std::variant<Connect, Ack, Problem, DataRequest, DataBegin, DataEntity, DataViewer,
                             DataEnd, SolutionBegin, SolutionView, SolutionEnd, Err, Bye>;

// END, ENT/VIEWER and VIEW lines only mean something inside a block, so the
// decoder needs to know which bracket, if any, is open.
enum class BlockContext { None, InData, InSolution };

// Context after this message has been processed.
BlockContext next_context(BlockContext ctx, const Message& m);

const char* message_word(const Message& m);

// Canonical single line, no trailing newline. Throws std::invalid_argument
// on messages that cannot be represented (bad token, out-of-range field):
// malformed lines are never emitted.
std::string encode(const Message& m);

struct DecodeError {
    std::string token;   // offending word or key
    std::string detail;
    bool operator==(const DecodeError&) const = default;
};

// monostate = ignorable line (blank / whitespace only).
using DecodeResult = std::variant<std::monostate, Message, DecodeError>;

DecodeResult decode(std::string_view line, BlockContext ctx);

}  // namespace mvopt::proto
