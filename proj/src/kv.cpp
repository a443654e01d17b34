#include "mvopt/kv.hpp"

#include <array>
#include <cctype>
#include <cmath>

namespace mvopt::kv {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

std::string format_int(long long v) {
    std::array<char, 32> buf{};
    const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), r.ptr);
}

std::string format_vec3(const Vec3& v) {
    return format_double(v.x) + "," + format_double(v.y) + "," + format_double(v.z);
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size()) return false;
    if (!std::isfinite(v)) return false;
    out = v;
    return true;
}

bool parse_int(std::string_view text, long long& out) {
    if (text.empty()) return false;
    long long v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size()) return false;
    out = v;
    return true;
}

namespace {

bool split_commas(std::string_view text, std::string_view* parts, int n) {
    int i = 0;
    while (i < n - 1) {
        const auto comma = text.find(',');
        if (comma == std::string_view::npos) return false;
        parts[i++] = text.substr(0, comma);
        text.remove_prefix(comma + 1);
    }
    if (text.find(',') != std::string_view::npos) return false;
    parts[i] = text;
    return true;
}

}  // namespace

bool parse_vec3(std::string_view text, Vec3& out) {
    std::string_view parts[3];
    if (!split_commas(text, parts, 3)) return false;
    return parse_double(parts[0], out.x) && parse_double(parts[1], out.y) && parse_double(parts[2], out.z);
}

bool parse_vec6(std::string_view text, Vec3& lo, Vec3& hi) {
    std::string_view parts[6];
    if (!split_commas(text, parts, 6)) return false;
    return parse_double(parts[0], lo.x) && parse_double(parts[1], lo.y) && parse_double(parts[2], lo.z) &&
           parse_double(parts[3], hi.x) && parse_double(parts[4], hi.y) && parse_double(parts[5], hi.z);
}

const std::string* Line::find(std::string_view key) const {
    for (const auto& [k, v] : fields) {
        if (k == key) return &v;
    }
    return nullptr;
}

std::optional<Line> tokenize(std::string_view text) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    size_t i = 0;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) return std::nullopt;

    Line line;
    size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    line.word.assign(text.substr(start, i - start));

    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i == text.size()) break;
        start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        const std::string_view tok = text.substr(start, i - start);
        const auto eq = tok.find('=');
        if (eq == std::string_view::npos) {
            line.fields.emplace_back(std::string(tok), std::string());
        } else {
            line.fields.emplace_back(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
        }
    }
    return line;
}

bool is_token(std::string_view s) {
    if (s.empty()) return false;
    for (const char c : s) {
        const bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

bool FieldReader::fail(std::string_view key, std::string detail) {
    if (error_token_.empty()) {
        error_token_.assign(key);
        error_detail_ = std::move(detail);
    }
    return false;
}

bool FieldReader::want_int(std::string_view key, long long& out, long long lo, long long hi) {
    const std::string* raw = line_.find(key);
    if (!raw) return fail(key, "missing key");
    if (!parse_int(*raw, out)) return fail(key, "not an integer: '" + *raw + "'");
    if (out < lo || out > hi) return fail(key, "out of range: " + *raw);
    return true;
}

bool FieldReader::want_double(std::string_view key, double& out) {
    const std::string* raw = line_.find(key);
    if (!raw) return fail(key, "missing key");
    if (!parse_double(*raw, out)) return fail(key, "not a number: '" + *raw + "'");
    return true;
}

bool FieldReader::want_token(std::string_view key, std::string& out) {
    const std::string* raw = line_.find(key);
    if (!raw) return fail(key, "missing key");
    if (!is_token(*raw)) return fail(key, "not a token: '" + *raw + "'");
    out = *raw;
    return true;
}

bool FieldReader::want_vec3(std::string_view key, Vec3& out) {
    const std::string* raw = line_.find(key);
    if (!raw) return fail(key, "missing key");
    if (!parse_vec3(*raw, out)) return fail(key, "not a vector: '" + *raw + "'");
    return true;
}

bool FieldReader::want_vec6(std::string_view key, Vec3& lo, Vec3& hi) {
    const std::string* raw = line_.find(key);
    if (!raw) return fail(key, "missing key");
    if (!parse_vec6(*raw, lo, hi)) return fail(key, "not a 6-vector: '" + *raw + "'");
    return true;
}

bool FieldReader::optional_int(std::string_view key, std::optional<long long>& out, long long lo,
                               long long hi) {
    if (!line_.find(key)) {
        out.reset();
        return true;
    }
    long long v = 0;
    if (!want_int(key, v, lo, hi)) return false;
    out = v;
    return true;
}

bool FieldReader::optional_double(std::string_view key, std::optional<double>& out) {
    if (!line_.find(key)) {
        out.reset();
        return true;
    }
    double v = 0.0;
    if (!want_double(key, v)) return false;
    out = v;
    return true;
}

}  // namespace mvopt::kv
