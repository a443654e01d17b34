#include "mvopt/protocol.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mvopt/kv.hpp"

namespace mvopt::proto {

namespace {

constexpr long long kIntMax = std::numeric_limits<int>::max();

void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument("cannot encode message: " + what);
}

void require_token(const std::string& s, const char* what) {
    require(kv::is_token(s), std::string(what) + " '" + s + "' is not a token");
}

void require_finite(double v, const char* what) {
    require(std::isfinite(v), std::string(what) + " is not finite");
}

DecodeError field_error(const kv::FieldReader& r) { return {r.error_token(), r.error_detail()}; }

// ERR carries free text to end of line, which the tokenizer would split,
// so it gets a hand-rolled parse.
DecodeResult decode_err(std::string_view line) {
    const auto fail = [](std::string token, std::string detail) {
        return DecodeResult{DecodeError{std::move(token), std::move(detail)}};
    };
    size_t pos = line.find_first_not_of(" \t");
    pos = line.find_first_of(" \t", pos);  // past the word
    pos = line.find_first_not_of(" \t", pos);
    constexpr std::string_view code_key = "code=";
    if (pos == std::string_view::npos || line.substr(pos, code_key.size()) != code_key)
        return fail("code", "missing key 'code'");
    pos += code_key.size();
    const size_t code_end = std::min(line.find_first_of(" \t", pos), line.size());
    Err e;
    e.code = std::string(line.substr(pos, code_end - pos));
    if (!kv::is_token(e.code)) return fail("code", "value is not a token");
    pos = line.find_first_not_of(" \t", code_end);
    constexpr std::string_view msg_key = "msg=";
    if (pos == std::string_view::npos || line.substr(pos, msg_key.size()) != msg_key)
        return fail("msg", "missing key 'msg'");
    e.text = std::string(line.substr(pos + msg_key.size()));
    return Message{std::move(e)};
}

}  // namespace

BlockContext next_context(BlockContext ctx, const Message& m) {
    if (std::holds_alternative<DataBegin>(m)) return BlockContext::InData;
    if (std::holds_alternative<SolutionBegin>(m)) return BlockContext::InSolution;
    if (std::holds_alternative<DataEnd>(m) || std::holds_alternative<SolutionEnd>(m))
        return BlockContext::None;
    return ctx;
}

const char* message_word(const Message& m) {
    struct Visitor {
        const char* operator()(const Connect&) { return "CONNECT"; }
        const char* operator()(const Ack&) { return "ACK"; }
        const char* operator()(const Problem&) { return "PROBLEM"; }
        const char* operator()(const DataRequest&) { return "REQ"; }
        const char* operator()(const DataBegin&) { return "DATA"; }
        const char* operator()(const DataEntity&) { return "ENT"; }
        const char* operator()(const DataViewer&) { return "VIEWER"; }
        const char* operator()(const DataEnd&) { return "END"; }
        const char* operator()(const SolutionBegin&) { return "SOLUTION"; }
        const char* operator()(const SolutionView&) { return "VIEW"; }
        const char* operator()(const SolutionEnd&) { return "END"; }
        const char* operator()(const Err&) { return "ERR"; }
        const char* operator()(const Bye&) { return "BYE"; }
    };
    return std::visit(Visitor{}, m);
}

std::string encode(const Message& m) {
    struct Visitor {
        std::string operator()(const Connect& c) {
            require(c.proto >= 0, "negative proto version");
            require_token(c.name, "name");
            return "CONNECT proto=" + kv::format_int(c.proto) + " name=" + c.name;
        }
        std::string operator()(const Ack& a) {
            require(a.session >= 0, "negative session id");
            return "ACK session=" + kv::format_int(a.session);
        }
        std::string operator()(const Problem& p) {
            require(p.k >= 1, "k below 1");
            require_finite(p.w1, "w1");
            require_finite(p.w2, "w2");
            require(p.w1 >= 0.0 && p.w2 >= 0.0, "negative weight");
            require(p.resolution >= 1, "resolution below 1");
            require_finite(p.max_view_distance, "maxdist");
            require(p.max_view_distance > 0.0, "nonpositive maxdist");
            require(p.tick_period_ms >= 0, "negative period");
            return "PROBLEM k=" + kv::format_int(p.k) + " w1=" + kv::format_double(p.w1) +
                   " w2=" + kv::format_double(p.w2) + " res=" + kv::format_int(p.resolution) +
                   " maxdist=" + kv::format_double(p.max_view_distance) +
                   " period=" + kv::format_int(p.tick_period_ms);
        }
        std::string operator()(const DataRequest& r) {
            if (!r.tick) return "REQ";
            require(*r.tick >= 0, "negative tick");
            return "REQ tick=" + kv::format_int(*r.tick);
        }
        std::string operator()(const DataBegin& d) {
            require(d.tick >= 0, "negative tick");
            require(d.n >= 0 && d.m >= 0, "negative count");
            return "DATA tick=" + kv::format_int(d.tick) + " n=" + kv::format_int(d.n) +
                   " m=" + kv::format_int(d.m);
        }
        std::string operator()(const DataEntity& d) {
            const std::string line = scene::entity_line(d.entity);
            // entity_line prints whatever it is given; reject anything the
            // peer would bounce.
            const auto back = kv::tokenize(line);
            require(back.has_value(), "blank entity line");
            require(!std::holds_alternative<scene::ParseIssue>(scene::parse_entity_line(*back)),
                    "entity violates its own grammar");
            return line;
        }
        std::string operator()(const DataViewer& d) {
            const std::string line = scene::viewer_line(d.viewer);
            const auto back = kv::tokenize(line);
            require(back.has_value(), "blank viewer line");
            require(!std::holds_alternative<scene::ParseIssue>(scene::parse_viewer_line(*back)),
                    "viewer violates its own grammar");
            return line;
        }
        std::string operator()(const DataEnd&) { return "END"; }
        std::string operator()(const SolutionBegin& s) {
            require(s.tick >= 0, "negative tick");
            require_finite(s.q, "q");
            require(s.iterations >= 0, "negative iteration count");
            return "SOLUTION tick=" + kv::format_int(s.tick) + " q=" + kv::format_double(s.q) +
                   " iters=" + kv::format_int(s.iterations);
        }
        std::string operator()(const SolutionView& v) {
            require(v.view_id >= 0, "negative view id");
            require_finite(v.dir.x + v.dir.y + v.dir.z, "dir");
            require_finite(v.up.x + v.up.y + v.up.z, "up");
            require(v.fov_deg >= cam::kMinFovDeg && v.fov_deg <= cam::kMaxFovDeg,
                    "fov outside range");
            return "VIEW id=" + kv::format_int(v.view_id) + " dir=" + kv::format_vec3(v.dir) +
                   " up=" + kv::format_vec3(v.up) + " fov=" + kv::format_double(v.fov_deg);
        }
        std::string operator()(const SolutionEnd&) { return "END"; }
        std::string operator()(const Err& e) {
            require_token(e.code, "code");
            require(e.text.find('\n') == std::string::npos && e.text.find('\r') == std::string::npos,
                    "msg contains a line break");
            return "ERR code=" + e.code + " msg=" + e.text;
        }
        std::string operator()(const Bye&) { return "BYE"; }
    };
    return std::visit(Visitor{}, m);
}

DecodeResult decode(std::string_view line, BlockContext ctx) {
    const auto parsed = kv::tokenize(line);
    if (!parsed) return std::monostate{};
    const kv::Line& l = *parsed;

    if (l.word == "ERR") return decode_err(line);

    kv::FieldReader r(l);
    if (l.word == "CONNECT") {
        long long proto = 0;
        Connect c;
        if (!r.want_int("proto", proto, 0, kIntMax) || !r.want_token("name", c.name))
            return field_error(r);
        c.proto = static_cast<int>(proto);
        return Message{std::move(c)};
    }
    if (l.word == "ACK") {
        long long session = 0;
        if (!r.want_int("session", session, 0, kIntMax)) return field_error(r);
        return Message{Ack{static_cast<int>(session)}};
    }
    if (l.word == "PROBLEM") {
        Problem p;
        long long k = 0, res = 0, period = 0;
        if (!r.want_int("k", k, 1, kIntMax) || !r.want_double("w1", p.w1) ||
            !r.want_double("w2", p.w2) || !r.want_int("res", res, 1, 1 << 20) ||
            !r.want_double("maxdist", p.max_view_distance) ||
            !r.want_int("period", period, 0, kIntMax))
            return field_error(r);
        if (p.w1 < 0.0 || p.w2 < 0.0) return DecodeError{"w1", "weights must be nonnegative"};
        if (p.max_view_distance <= 0.0) return DecodeError{"maxdist", "must be positive"};
        p.k = static_cast<int>(k);
        p.resolution = static_cast<int>(res);
        p.tick_period_ms = static_cast<int>(period);
        return Message{p};
    }
    if (l.word == "REQ") {
        std::optional<long long> tick;
        if (!r.optional_int("tick", tick, 0, kIntMax)) return field_error(r);
        DataRequest req;
        if (tick) req.tick = static_cast<int>(*tick);
        return Message{req};
    }
    if (l.word == "DATA") {
        long long tick = 0, n = 0, mm = 0;
        if (!r.want_int("tick", tick, 0, kIntMax) || !r.want_int("n", n, 0, kIntMax) ||
            !r.want_int("m", mm, 0, kIntMax))
            return field_error(r);
        return Message{DataBegin{static_cast<int>(tick), static_cast<int>(n), static_cast<int>(mm)}};
    }
    if (l.word == "ENT") {
        if (ctx != BlockContext::InData) return DecodeError{"ENT", "entity line outside a DATA block"};
        auto e = scene::parse_entity_line(l);
        if (auto* issue = std::get_if<scene::ParseIssue>(&e))
            return DecodeError{issue->token, issue->detail};
        return Message{DataEntity{std::get<scene::Entity>(std::move(e))}};
    }
    if (l.word == "VIEWER") {
        if (ctx != BlockContext::InData)
            return DecodeError{"VIEWER", "viewer line outside a DATA block"};
        auto v = scene::parse_viewer_line(l);
        if (auto* issue = std::get_if<scene::ParseIssue>(&v))
            return DecodeError{issue->token, issue->detail};
        return Message{DataViewer{std::get<scene::ViewerAgent>(std::move(v))}};
    }
    if (l.word == "SOLUTION") {
        SolutionBegin s;
        long long tick = 0, iters = 0;
        if (!r.want_int("tick", tick, 0, kIntMax) || !r.want_double("q", s.q) ||
            !r.want_int("iters", iters, 0, kIntMax))
            return field_error(r);
        s.tick = static_cast<int>(tick);
        s.iterations = static_cast<int>(iters);
        return Message{s};
    }
    if (l.word == "VIEW") {
        if (ctx != BlockContext::InSolution)
            return DecodeError{"VIEW", "view line outside a SOLUTION block"};
        SolutionView v;
        long long id = 0;
        if (!r.want_int("id", id, 0, kIntMax) || !r.want_vec3("dir", v.dir) ||
            !r.want_vec3("up", v.up) || !r.want_double("fov", v.fov_deg))
            return field_error(r);
        if (v.fov_deg < cam::kMinFovDeg || v.fov_deg > cam::kMaxFovDeg)
            return DecodeError{"fov", "outside supported range"};
        v.view_id = static_cast<int>(id);
        return Message{v};
    }
    if (l.word == "END") {
        if (ctx == BlockContext::InData) return Message{DataEnd{}};
        if (ctx == BlockContext::InSolution) return Message{SolutionEnd{}};
        return DecodeError{"END", "END outside any block"};
    }
    if (l.word == "BYE") return Message{Bye{}};

    return DecodeError{l.word, "unknown message word"};
}

}  // namespace mvopt::proto
