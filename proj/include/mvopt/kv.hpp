#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvopt/geom.hpp"

// One grammar for everything line-oriented in this project: scenario files,
// dynamics scripts, multiview files and the wire protocol all use
// `WORD key=value ...` lines. Values never contain spaces (the protocol's
// ERR msg field is the single exception and is handled by its decoder).
//
// Numbers are printed with std::to_chars shortest round-trip form, so
// serialize -> parse is exact for every finite double.

namespace mvopt::kv {

std::string format_double(double v);
std::string format_int(long long v);
std::string format_vec3(const Vec3& v);  // "x,y,z"

bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);
bool parse_vec3(std::string_view text, Vec3& out);
bool parse_vec6(std::string_view text, Vec3& lo, Vec3& hi);  // "x0,y0,z0,x1,y1,z1"

struct Line {
    std::string word;
    std::vector<std::pair<std::string, std::string>> fields;

    const std::string* find(std::string_view key) const;
};

// Blank / whitespace-only lines yield nullopt. Everything else tokenizes;
// tokens without '=' after the word are recorded with an empty value.
std::optional<Line> tokenize(std::string_view line);

bool is_token(std::string_view s);  // [A-Za-z0-9_-]+

// Typed field extraction. Getters return false and record the offending
// key so callers can surface "missing key 'k'" / "bad value for 'k'"
// without exceptions (the protocol loop must never throw on input).
class FieldReader {
public:
    explicit FieldReader(const Line& line) : line_(line) {}

    bool want_int(std::string_view key, long long& out, long long lo, long long hi);
    bool want_double(std::string_view key, double& out);
    bool want_token(std::string_view key, std::string& out);
    bool want_vec3(std::string_view key, Vec3& out);
    bool want_vec6(std::string_view key, Vec3& lo, Vec3& hi);

    bool optional_int(std::string_view key, std::optional<long long>& out, long long lo, long long hi);
    bool optional_double(std::string_view key, std::optional<double>& out);

    bool ok() const { return error_token_.empty(); }
    const std::string& error_token() const { return error_token_; }
    const std::string& error_detail() const { return error_detail_; }

private:
    bool fail(std::string_view key, std::string detail);

    const Line& line_;
    std::string error_token_;
    std::string error_detail_;
};

}  // namespace mvopt::kv
