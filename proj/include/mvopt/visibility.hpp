#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "mvopt/camera.hpp"
#include "mvopt/geom.hpp"
#include "mvopt/scene.hpp"

namespace mvopt::vis {

struct VisibilityConfig {
    int resolution = 128;            // square image, pixels per side (>= 8)
    double max_view_distance = 300.0;  // meters
};

// Per-pixel entity id + hit distance. kEmpty marks pixels with no hit.
struct ItemBuffer {
    static constexpr int kEmpty = -1;

    int width = 0;
    int height = 0;
    std::vector<int> ids;        // row-major, row 0 = top
    std::vector<double> depths;  // ray-hit distance where id present, else 0

    int id_at(int px, int py) const { return ids[static_cast<size_t>(py) * width + px]; }
    double depth_at(int px, int py) const { return depths[static_cast<size_t>(py) * width + px]; }

    bool operator==(const ItemBuffer&) const = default;
};

struct VisibilityStats {
    std::map<int, long long> counts;  // entity id -> covered pixels, only nonzero entries
    long long total_pixels = 0;

    bool operator==(const VisibilityStats&) const = default;
};

// Slab-method ray/box intersection: entering distance, 0 when the origin is
// inside the box, nullopt when the box is missed or lies behind the origin.
// Both the renderer and the oracle resolve every pixel through this exact
// function, which is what makes their equality testable bit-for-bit.
std::optional<double> ray_aabb(const Ray& ray, const Aabb& box);

// Conservative pre-filter: entity ids whose box intersects the view cone and
// whose nearest point is within max_view_distance. Guaranteed superset of
// the ids with nonzero pixels in a full render. Sorted ascending.
std::vector<int> candidate_filter(const cam::ViewParams& v, const scene::Scenario& s,
                                  const VisibilityConfig& cfg);

// Normative semantics: per pixel, the candidate whose box yields the
// smallest ray_aabb t along the pixel-center ray, restricted to
// t <= max_view_distance; exact ties go to the lower entity id. The
// implementation runs a uniform-grid DDA but must (and does) reproduce the
// brute-force result exactly.
ItemBuffer render_item_buffer(const cam::ViewParams& v, const scene::Scenario& s,
                              const VisibilityConfig& cfg);

VisibilityStats coverage_histogram(const ItemBuffer& buf);

// Independent check path: the same per-pixel nearest-hit rule evaluated by
// plain iteration over all entities, no pre-filter, no acceleration.
VisibilityStats raycast_oracle(const cam::ViewParams& v, const scene::Scenario& s,
                               const VisibilityConfig& cfg);

// Debug dump: P6 PPM, entity ids hashed to RGB, empty pixels black.
void write_ppm(const ItemBuffer& buf, std::ostream& out);

}  // namespace mvopt::vis
