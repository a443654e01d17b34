#include "mvopt/visibility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mvopt::vis {

namespace {

// Full entry/exit interval against a box; used for grid clipping only.
bool slab_interval(const Ray& ray, const Aabb& box, double& t_enter, double& t_exit) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
    const double d[3] = {ray.dir.x, ray.dir.y, ray.dir.z};
    const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
    const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) return false;
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return false;
    }
    t_enter = t0;
    t_exit = t1;
    return true;
}

// Nearest-hit accumulator carrying the normative tie rule (equal t -> lower
// id). Shared verbatim by the grid renderer and the brute-force oracle so
// the comparison chain cannot diverge between them.
struct NearestHit {
    double t = 0.0;
    int id = ItemBuffer::kEmpty;

    void consider(double hit_t, int hit_id, double max_dist) {
        if (hit_t > max_dist) return;
        if (id == ItemBuffer::kEmpty || hit_t < t || (hit_t == t && hit_id < id)) {
            t = hit_t;
            id = hit_id;
        }
    }
};

struct Candidate {
    int id;
    Aabb box;
};

class UniformGrid {
public:
    explicit UniformGrid(const std::vector<Candidate>& candidates) : candidates_(candidates) {
        bounds_ = candidates.front().box;
        for (const auto& c : candidates_) bounds_ = bounds_.united(c.box);

        // Aim for a few boxes per cell, sized by the longest axis so flat
        // scenes collapse to a single layer in y.
        const int target = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(candidates_.size())) * 2.0));
        const Vec3 size = bounds_.size();
        const double longest = std::max({size.x, size.y, size.z, 1e-9});
        const double cell_target = longest / target;
        nx_ = dims_for(size.x, cell_target);
        ny_ = dims_for(size.y, cell_target);
        nz_ = dims_for(size.z, cell_target);
        cell_ = {size.x > 0 ? size.x / nx_ : 1.0, size.y > 0 ? size.y / ny_ : 1.0,
                 size.z > 0 ? size.z / nz_ : 1.0};

        cells_.resize(static_cast<size_t>(nx_) * ny_ * nz_);
        for (size_t i = 0; i < candidates_.size(); ++i) {
            int ix0, iy0, iz0, ix1, iy1, iz1;
            cell_of(candidates_[i].box.lo, ix0, iy0, iz0);
            cell_of(candidates_[i].box.hi, ix1, iy1, iz1);
            for (int iz = iz0; iz <= iz1; ++iz)
                for (int iy = iy0; iy <= iy1; ++iy)
                    for (int ix = ix0; ix <= ix1; ++ix)
                        cells_[cell_index(ix, iy, iz)].push_back(static_cast<int>(i));
        }
    }

    NearestHit trace(const Ray& ray, double max_dist) const {
        NearestHit best;
        double t_enter = 0.0;
        double t_exit = 0.0;
        if (!slab_interval(ray, bounds_, t_enter, t_exit)) return best;
        if (t_exit < 0.0) return best;
        t_enter = std::max(t_enter, 0.0);
        if (t_enter > max_dist) return best;

        const Vec3 start = ray.origin + ray.dir * t_enter;
        int ix, iy, iz;
        cell_of(start, ix, iy, iz);

        const double o[3] = {ray.origin.x, ray.origin.y, ray.origin.z};
        const double d[3] = {ray.dir.x, ray.dir.y, ray.dir.z};
        const double blo[3] = {bounds_.lo.x, bounds_.lo.y, bounds_.lo.z};
        const double csz[3] = {cell_.x, cell_.y, cell_.z};
        int idx[3] = {ix, iy, iz};
        const int dims[3] = {nx_, ny_, nz_};
        int step[3];
        double t_max[3];
        double t_delta[3];
        for (int a = 0; a < 3; ++a) {
            if (d[a] > 0.0) {
                step[a] = 1;
                t_max[a] = (blo[a] + (idx[a] + 1) * csz[a] - o[a]) / d[a];
                t_delta[a] = csz[a] / d[a];
            } else if (d[a] < 0.0) {
                step[a] = -1;
                t_max[a] = (blo[a] + idx[a] * csz[a] - o[a]) / d[a];
                t_delta[a] = -csz[a] / d[a];
            } else {
                step[a] = 0;
                t_max[a] = std::numeric_limits<double>::infinity();
                t_delta[a] = std::numeric_limits<double>::infinity();
            }
        }

        // Walk cells in increasing entry order. It is safe to stop once the
        // next cell starts beyond the current best (or the distance cap):
        // any box found only further along would enter at a strictly larger
        // t and cannot win, not even via the tie rule. The small slack
        // absorbs accumulated floating-point drift in t_max.
        while (true) {
            for (const int ci : cells_[cell_index(idx[0], idx[1], idx[2])]) {
                const auto t = ray_aabb(ray, candidates_[ci].box);
                if (t) best.consider(*t, candidates_[ci].id, max_dist);
            }
            const int axis = (t_max[0] <= t_max[1] && t_max[0] <= t_max[2]) ? 0
                             : (t_max[1] <= t_max[2])                       ? 1
                                                                            : 2;
            const double t_next = t_max[axis];
            const double limit = best.id == ItemBuffer::kEmpty ? max_dist : std::min(best.t, max_dist);
            if (t_next > limit + 1e-7) break;
            idx[axis] += step[axis];
            if (idx[axis] < 0 || idx[axis] >= dims[axis]) break;
            t_max[axis] += t_delta[axis];
        }
        return best;
    }

private:
    static int dims_for(double extent, double cell_target) {
        if (!(extent > 0.0)) return 1;
        return std::clamp(static_cast<int>(std::ceil(extent / cell_target)), 1, 64);
    }

    size_t cell_index(int ix, int iy, int iz) const {
        return (static_cast<size_t>(iz) * ny_ + iy) * nx_ + ix;
    }

    void cell_of(const Vec3& p, int& ix, int& iy, int& iz) const {
        ix = std::clamp(static_cast<int>((p.x - bounds_.lo.x) / cell_.x), 0, nx_ - 1);
        iy = std::clamp(static_cast<int>((p.y - bounds_.lo.y) / cell_.y), 0, ny_ - 1);
        iz = std::clamp(static_cast<int>((p.z - bounds_.lo.z) / cell_.z), 0, nz_ - 1);
    }

    const std::vector<Candidate>& candidates_;
    Aabb bounds_;
    int nx_ = 1, ny_ = 1, nz_ = 1;
    Vec3 cell_;
    std::vector<std::vector<int>> cells_;
};

}  // namespace

std::optional<double> ray_aabb(const Ray& ray, const Aabb& box) {
    double t_enter = 0.0;
    double t_exit = 0.0;
    if (!slab_interval(ray, box, t_enter, t_exit)) return std::nullopt;
    if (t_exit < 0.0) return std::nullopt;
    return std::max(t_enter, 0.0);
}

std::vector<int> candidate_filter(const cam::ViewParams& v, const scene::Scenario& s,
                                  const VisibilityConfig& cfg) {
    const cam::Basis b = cam::camera_basis(v);
    const double tan_half = std::tan(deg_to_rad(v.fov_y_deg) * 0.5);
    const double slack = 1e-6 * (1.0 + cfg.max_view_distance);

    std::vector<int> out;
    for (const auto& e : s.entities) {
        const Vec3 nearest = e.box.closest_point(v.pos);
        if (norm(nearest - v.pos) > cfg.max_view_distance + slack) continue;

        // Plane test on the view cone, camera space. A box is culled only
        // when all eight corners fall outside one plane, so the set stays a
        // superset of anything a pixel-center ray can hit.
        double max_side[5] = {-std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity(),
                              -std::numeric_limits<double>::infinity()};
        for (int corner = 0; corner < 8; ++corner) {
            const Vec3 world = {(corner & 1) ? e.box.hi.x : e.box.lo.x,
                                (corner & 2) ? e.box.hi.y : e.box.lo.y,
                                (corner & 4) ? e.box.hi.z : e.box.lo.z};
            const Vec3 rel = world - v.pos;
            const double x = dot(rel, b.right);
            const double y = dot(rel, b.up);
            const double z = dot(rel, b.forward);
            max_side[0] = std::max(max_side[0], z);
            max_side[1] = std::max(max_side[1], x + z * tan_half);
            max_side[2] = std::max(max_side[2], -x + z * tan_half);
            max_side[3] = std::max(max_side[3], y + z * tan_half);
            max_side[4] = std::max(max_side[4], -y + z * tan_half);
        }
        bool outside = false;
        for (const double m : max_side) {
            if (m < -slack) {
                outside = true;
                break;
            }
        }
        if (!outside) out.push_back(e.id);
    }
    std::sort(out.begin(), out.end());
    return out;
}

ItemBuffer render_item_buffer(const cam::ViewParams& v, const scene::Scenario& s,
                              const VisibilityConfig& cfg) {
    ItemBuffer buf;
    buf.width = cfg.resolution;
    buf.height = cfg.resolution;
    buf.ids.assign(static_cast<size_t>(buf.width) * buf.height, ItemBuffer::kEmpty);
    buf.depths.assign(static_cast<size_t>(buf.width) * buf.height, 0.0);

    const std::vector<int> ids = candidate_filter(v, s, cfg);
    if (ids.empty()) return buf;

    std::vector<Candidate> candidates;
    candidates.reserve(ids.size());
    for (const auto& e : s.entities) {
        if (std::binary_search(ids.begin(), ids.end(), e.id)) candidates.push_back({e.id, e.box});
    }

    const UniformGrid grid(candidates);
    for (int py = 0; py < buf.height; ++py) {
        for (int px = 0; px < buf.width; ++px) {
            const Ray ray = cam::pixel_ray(v, buf.width, buf.height, px, py);
            const NearestHit hit = grid.trace(ray, cfg.max_view_distance);
            if (hit.id != ItemBuffer::kEmpty) {
                const size_t at = static_cast<size_t>(py) * buf.width + px;
                buf.ids[at] = hit.id;
                buf.depths[at] = hit.t;
            }
        }
    }
    return buf;
}

VisibilityStats coverage_histogram(const ItemBuffer& buf) {
    VisibilityStats stats;
    stats.total_pixels = static_cast<long long>(buf.width) * buf.height;
    for (const int id : buf.ids) {
        if (id != ItemBuffer::kEmpty) ++stats.counts[id];
    }
    return stats;
}

VisibilityStats raycast_oracle(const cam::ViewParams& v, const scene::Scenario& s,
                               const VisibilityConfig& cfg) {
    VisibilityStats stats;
    stats.total_pixels = static_cast<long long>(cfg.resolution) * cfg.resolution;
    for (int py = 0; py < cfg.resolution; ++py) {
        for (int px = 0; px < cfg.resolution; ++px) {
            const Ray ray = cam::pixel_ray(v, cfg.resolution, cfg.resolution, px, py);
            NearestHit best;
            for (const auto& e : s.entities) {
                const auto t = ray_aabb(ray, e.box);
                if (t) best.consider(*t, e.id, cfg.max_view_distance);
            }
            if (best.id != ItemBuffer::kEmpty) ++stats.counts[best.id];
        }
    }
    return stats;
}

void write_ppm(const ItemBuffer& buf, std::ostream& out) {
    out << "P6\n" << buf.width << " " << buf.height << "\n255\n";
    for (const int id : buf.ids) {
        unsigned char rgb[3] = {0, 0, 0};
        if (id != ItemBuffer::kEmpty) {
            // splitmix64 of the id, folded to a stable colour
            std::uint64_t x = static_cast<std::uint64_t>(id) + 0x9e3779b97f4a7c15ULL;
            x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
            x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
            x ^= x >> 31;
            rgb[0] = static_cast<unsigned char>(x & 0xff);
            rgb[1] = static_cast<unsigned char>((x >> 8) & 0xff);
            rgb[2] = static_cast<unsigned char>((x >> 16) & 0xff);
            if (rgb[0] == 0 && rgb[1] == 0 && rgb[2] == 0) rgb[1] = 96;
        }
        out.write(reinterpret_cast<const char*>(rgb), 3);
    }
}

}  // namespace mvopt::vis
