#include "mvopt/camera.hpp"

#include <cmath>
#include <set>

#include "mvopt/kv.hpp"

namespace mvopt::cam {

std::optional<std::string> check_view_params(const ViewParams& v) {
    if (std::abs(norm(v.view_dir) - 1.0) > 1e-9) return std::string("view_dir not unit length");
    if (std::abs(norm(v.view_up) - 1.0) > 1e-9) return std::string("view_up not unit length");
    if (std::abs(dot(v.view_dir, v.view_up)) >= 1.0 - 1e-9)
        return std::string("view_dir parallel to view_up");
    if (v.fov_y_deg < kMinFovDeg || v.fov_y_deg > kMaxFovDeg)
        return std::string("fov outside [" + kv::format_double(kMinFovDeg) + "," +
                           kv::format_double(kMaxFovDeg) + "]");
    return std::nullopt;
}

std::optional<std::string> check_multiview(const MultiView& mv, int k) {
    if (static_cast<int>(mv.views.size()) != k)
        return std::string("multiview has " + kv::format_int(static_cast<long long>(mv.views.size())) +
                           " views, expected " + kv::format_int(k));
    std::set<int> ids;
    for (const auto& v : mv.views) {
        if (!ids.insert(v.view_id).second)
            return std::string("duplicate view id " + kv::format_int(v.view_id));
        if (auto msg = check_view_params(v))
            return "view " + kv::format_int(v.view_id) + ": " + *msg;
    }
    return std::nullopt;
}

Basis camera_basis(const ViewParams& v) {
    const Vec3 forward = v.view_dir;
    const Vec3 r = cross(forward, v.view_up);
    const double rn = norm(r);
    if (rn < 1e-9) throw DegenerateFrameError("view_dir parallel to view_up");
    const Vec3 right = r / rn;
    const Vec3 up = cross(right, forward);
    return {right, up, forward};
}

std::optional<Ndc> ndc_of_point(const ViewParams& v, const Vec3& p) {
    const Basis b = camera_basis(v);
    const Vec3 rel = p - v.pos;
    const double z = dot(rel, b.forward);
    if (z <= kNearEps) return std::nullopt;

    const double tan_half = std::tan(deg_to_rad(v.fov_y_deg) * 0.5);
    const double x = dot(rel, b.right) / (z * tan_half);
    const double y = dot(rel, b.up) / (z * tan_half);
    if (x < -1.0 || x > 1.0 || y < -1.0 || y > 1.0) return std::nullopt;
    return Ndc{x, y, norm(rel)};
}

Ray pixel_ray(const ViewParams& v, int width, int height, int px, int py) {
    if (width < 1 || height < 1) throw std::out_of_range("pixel_ray: empty image");
    if (px < 0 || px >= width || py < 0 || py >= height)
        throw std::out_of_range("pixel_ray: pixel (" + kv::format_int(px) + "," + kv::format_int(py) +
                                ") outside " + kv::format_int(width) + "x" + kv::format_int(height));

    const Basis b = camera_basis(v);
    const double tan_half = std::tan(deg_to_rad(v.fov_y_deg) * 0.5);
    // Pixel centers; row 0 maps to the top of the image (+y in NDC).
    const double ndc_x = 2.0 * (px + 0.5) / width - 1.0;
    const double ndc_y = 1.0 - 2.0 * (py + 0.5) / height;
    const Vec3 dir = b.right * (ndc_x * tan_half) + b.up * (ndc_y * tan_half) + b.forward;
    return Ray{v.pos, normalized(dir)};
}

}  // namespace mvopt::cam
