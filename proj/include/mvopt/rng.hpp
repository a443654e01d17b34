#pragma once

#include <cstdint>
#include <random>

#include "mvopt/geom.hpp"

// Deterministic draws on top of std::mt19937_64. The engine is fully
// specified by the standard and the helpers below avoid std::*_distribution,
// whose output is implementation-defined; together that makes every seeded
// run reproducible across compilers and standard libraries.

namespace mvopt::rng {

using Engine = std::mt19937_64;

// Uniform in [0, 1), 53-bit resolution.
inline double unit(Engine& e) { return static_cast<double>(e() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& e, double lo, double hi) { return lo + (hi - lo) * unit(e); }

// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t below(Engine& e, std::uint64_t n) {
    const auto v = static_cast<std::uint64_t>(unit(e) * static_cast<double>(n));
    return v < n ? v : n - 1;
}

// Uniform integer in [lo, hi], inclusive.
inline int uniform_int(Engine& e, int lo, int hi) {
    return lo + static_cast<int>(below(e, static_cast<std::uint64_t>(hi - lo + 1)));
}

// Uniform direction on the unit sphere.
inline Vec3 unit_vector(Engine& e) {
    const double z = uniform(e, -1.0, 1.0);
    const double phi = uniform(e, 0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace mvopt::rng
